"""Shared test builders and independent oracles.

The oracles deliberately avoid the library's code paths: plain-Python loops
and statistics instead of numpy vectorization, so they can vouch for the
implementation rather than echo it.
"""

from __future__ import annotations

import statistics
import threading
from fractions import Fraction
from pathlib import Path

import numpy as np

from keycap.captioner import Caption, pixel_hash_hex
from keycap.ingest import Frame

# Mid-bin channel values for the 8x8x8 signature grid: +-10 of pixel noise
# never crosses a bin edge, +-20 sometimes does.
BIN_CENTERS = [16, 48, 80, 112, 144, 176, 208, 240]


def solid(color: tuple[int, int, int], w: int = 16, h: int = 12) -> np.ndarray:
    arr = np.empty((h, w, 3), dtype=np.uint8)
    arr[:, :] = color
    return arr


def make_frame(pixels: np.ndarray, index: int = 0, fps: float = 10.0) -> Frame:
    h, w = pixels.shape[:2]
    return Frame(index=index, time_s=index / fps, width=w, height=h, pixels=pixels)


def frames_from_arrays(arrays: list[np.ndarray], fps: float = 10.0) -> list[Frame]:
    return [make_frame(a, i, fps) for i, a in enumerate(arrays)]


def write_rgb24(path: Path, arrays: list[np.ndarray]) -> Path:
    path.write_bytes(b"".join(a.tobytes() for a in arrays))
    return path


def y4m_bytes(
    y_planes: list[np.ndarray],
    u_value: int = 128,
    v_value: int = 128,
    fps: str = "25:1",
    colorspace: str = "420jpeg",
) -> bytes:
    """Handcrafted 4:2:0 Y4M stream with flat chroma planes."""
    h, w = y_planes[0].shape
    cw, ch = (w + 1) // 2, (h + 1) // 2
    header = f"YUV4MPEG2 W{w} H{h} F{fps} Ip A1:1 C{colorspace}\n".encode()
    chunks = [header]
    u = np.full((ch, cw), u_value, dtype=np.uint8)
    v = np.full((ch, cw), v_value, dtype=np.uint8)
    for y in y_planes:
        chunks.append(b"FRAME\n")
        chunks.append(y.tobytes() + u.tobytes() + v.tobytes())
    return b"".join(chunks)


# -- independent oracles --------------------------------------------------


def tv_distance_oracle(a, b) -> float:
    """Total-variation distance via a plain Python loop."""
    return 0.5 * sum(abs(x - y) for x, y in zip(a, b))


def detect_boundaries_oracle(
    values: list[float],
    abs_floor: float = 0.25,
    window: int = 15,
    sensitivity: float = 3.0,
    min_shot_len: int = 8,
) -> list[int]:
    """Replay of the cut rule, sample by sample, with statistics stdlib."""
    boundaries: list[int] = []
    prev = 0
    for t in range(1, len(values) + 1):
        v = values[t - 1]
        if v <= abs_floor:
            continue
        trailing = values[max(0, t - 1 - window) : t - 1]
        if len(trailing) >= 2:
            threshold = statistics.fmean(trailing) + sensitivity * statistics.pstdev(trailing)
            if v <= threshold:
                continue
        if t - prev < min_shot_len:
            continue
        boundaries.append(t)
        prev = t
    return boundaries


def largest_remainder_oracle(lengths: list[int], k: int) -> list[int]:
    """One-shot apportionment of (k - n) surplus seats over a base of one per
    shot, proportional to length, remainder ties to the earlier shot. Only
    valid when per-shot caps do not bind."""
    n = len(lengths)
    assert k >= n
    surplus = k - n
    total = sum(lengths)
    quotas = [Fraction(surplus * l, total) for l in lengths]
    counts = [1 + int(q) for q in quotas]
    leftover = surplus - sum(int(q) for q in quotas)
    order = sorted(range(n), key=lambda i: (-(quotas[i] - int(quotas[i])), i))
    for i in order[:leftover]:
        counts[i] += 1
    return counts


def medoid_oracle(frame_arrays: list[np.ndarray]) -> int:
    """Exhaustive medoid over full-resolution signatures, pure Python sums."""
    sigs = [signature_oracle(a) for a in frame_arrays]
    best, best_total = 0, float("inf")
    for i, si in enumerate(sigs):
        total = sum(tv_distance_oracle(si, sj) for j, sj in enumerate(sigs) if j != i)
        if total < best_total:
            best, best_total = i, total
    return best


def signature_oracle(pixels: np.ndarray) -> list[float]:
    """Histogram by explicit per-pixel loop."""
    bins = [0] * 512
    flat = pixels.reshape(-1, 3)
    for r, g, b in flat.tolist():
        bins[(r >> 5) * 64 + (g >> 5) * 8 + (b >> 5)] += 1
    return [c / len(flat) for c in bins]


def fnv1a64_oracle(data: bytes) -> int:
    h = 14695981039346656037
    for byte in data:
        h ^= byte
        h = (h * 1099511628211) % (1 << 64)
    return h


class ConfidenceByBrightness:
    """Mock backend: dark frames caption at low confidence, bright at high."""

    model_id = "mock-brightness"

    def __init__(self, low: float = 0.3, high: float = 0.9, cutoff: float = 100.0):
        self.low, self.high, self.cutoff = low, high, cutoff
        self.calls: list[int] = []
        self._lock = threading.Lock()

    def caption(self, frame: Frame) -> Caption:
        with self._lock:
            self.calls.append(frame.index)
        conf = self.low if frame.pixels.mean() < self.cutoff else self.high
        return Caption(f"mock {pixel_hash_hex(frame)[:8]}", conf, self.model_id)

    def close(self) -> None:
        pass


# -- synthetic videos ------------------------------------------------------


def _pick_palette(rng: np.random.Generator, avoid: tuple[int, ...] | None) -> tuple[int, ...]:
    while True:
        palette = tuple(int(rng.choice(BIN_CENTERS)) for _ in range(3))
        if palette != avoid:
            return palette


def synthetic_cut_video(
    rng: np.random.Generator,
    n_shots: int | None = None,
    min_len: int = 8,
    max_len: int = 24,
    w: int = 32,
    h: int = 24,
    all_textured: bool = False,
) -> tuple[list[np.ndarray], list[int]]:
    """Abrupt-cut video of solid and textured-noise shots.

    Returns the frame arrays and the ground-truth boundary indices (the first
    frame of each shot after the first). ``all_textured`` makes every frame's
    pixel content unique, so keyframe counts map 1:1 to captioner calls.
    """
    if n_shots is None:
        n_shots = int(rng.integers(3, 11))
    arrays: list[np.ndarray] = []
    boundaries: list[int] = []
    palette: tuple[int, ...] | None = None
    for shot_i in range(n_shots):
        palette = _pick_palette(rng, avoid=palette)
        length = int(rng.integers(min_len, max_len + 1))
        textured = all_textured or bool(rng.integers(0, 2))
        if shot_i > 0:
            boundaries.append(len(arrays))
        for _ in range(length):
            if textured:
                noise = rng.integers(-20, 21, size=(h, w, 3))
                frame = np.clip(np.array(palette) + noise, 0, 255).astype(np.uint8)
            else:
                frame = solid(palette, w, h)
            arrays.append(frame)
    return arrays, boundaries
