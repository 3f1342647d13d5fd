"""64-bit FNV-1a over decoded RGB24 rasters.

This is a wire-protocol constant shared with captioning clients: hashing the
decoded raster rather than the PNG bytes keeps mock captions invariant to
encoder differences between clients.
"""

from __future__ import annotations

import numpy as np

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def raster_hash_hex(raster: np.ndarray) -> str:
    """16-hex-digit hash of a row-major RGB24 raster."""
    return f"{fnv1a64(raster.tobytes()):016x}"
