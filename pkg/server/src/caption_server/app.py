"""FastAPI application implementing the captioning wire contract."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse
from PIL import Image, UnidentifiedImageError

from caption_server.hashing import raster_hash_hex

MOCK_MODEL_ID = "mock-v1"


@dataclass(frozen=True)
class ServerConfig:
    """``mock`` mode needs no model assets; ``model`` wraps a pretrained
    captioner identified by ``model_id``."""

    mode: str = "mock"
    host: str = "127.0.0.1"
    port: int = 8080
    model_id: str = ""

    def __post_init__(self) -> None:
        if self.mode not in ("mock", "model"):
            raise ValueError(f"unknown server mode: {self.mode!r}")


def _decode_png(body: bytes) -> np.ndarray | None:
    """Decoded RGB24 raster, or None when the body is not a PNG."""
    try:
        with Image.open(io.BytesIO(body)) as img:
            if img.format != "PNG":
                return None
            return np.asarray(img.convert("RGB"))
    except (UnidentifiedImageError, OSError, ValueError):
        return None


def create_app(config: ServerConfig | None = None) -> FastAPI:
    config = config or ServerConfig()
    app = FastAPI(title="caption-server", docs_url=None, redoc_url=None)

    captioner = None
    if config.mode == "model":
        from caption_server.model import DEFAULT_MODEL, ModelCaptioner

        captioner = ModelCaptioner(config.model_id or DEFAULT_MODEL)

    @app.get("/healthz")
    def healthz() -> Response:
        return PlainTextResponse("ok")

    @app.post("/v1/caption")
    async def caption(request: Request) -> Response:
        body = await request.body()
        raster = _decode_png(body)
        if raster is None:
            return JSONResponse({"error": "request body is not a valid PNG"}, status_code=400)
        if captioner is None:
            digest = raster_hash_hex(raster)
            return JSONResponse(
                {
                    "caption": f"mock caption {digest[:8]}",
                    "confidence": 1.0,
                    "model_id": MOCK_MODEL_ID,
                }
            )
        try:
            text, confidence = captioner.caption(Image.fromarray(raster, mode="RGB"))
        except Exception as exc:  # model failures must stay inside the contract
            return JSONResponse({"error": f"model failure: {exc}"}, status_code=500)
        return JSONResponse(
            {"caption": text, "confidence": confidence, "model_id": captioner.model_id}
        )

    return app
