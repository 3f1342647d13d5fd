"""HTTP captioning microservice.

Implements the captioning wire contract: ``POST /v1/caption`` takes a raw PNG
body and answers ``{"caption": ..., "confidence": ..., "model_id": ...}``;
``GET /healthz`` answers ``ok``. Mock mode is deterministic (a pure function
of the decoded pixel content) and needs no model assets; model mode wraps a
pretrained image-captioning model.
"""

from caption_server.app import ServerConfig, create_app
from caption_server.hashing import fnv1a64, raster_hash_hex

__version__ = "0.1.0"

__all__ = ["ServerConfig", "create_app", "fnv1a64", "raster_hash_hex"]
