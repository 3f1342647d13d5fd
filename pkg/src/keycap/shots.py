"""Shot segmentation from per-frame color signatures.

Every frame is summarized as a joint-RGB histogram (8 bins per channel, 512
bins total, L1-normalized), consecutive frames are compared with the
total-variation distance, and a cut is declared where the distance clears both
an absolute floor and an adaptive threshold derived from the trailing window
of samples. The detector targets abrupt cuts; gradual dissolves register only
if some single step clears the threshold.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from keycap.ingest import Frame

SIGNATURE_BINS = 512

DEFAULT_ABS_FLOOR = 0.25
DEFAULT_WINDOW = 15
DEFAULT_SENSITIVITY = 3.0
DEFAULT_MIN_SHOT_LEN = 8


def frame_signature(frame: Frame) -> np.ndarray:
    """Joint-RGB histogram of a frame, 8 bins per channel, L1-normalized.

    Bin id for a pixel is ``(r>>5)*64 + (g>>5)*8 + (b>>5)``.
    """
    px = frame.pixels.reshape(-1, 3) >> 5
    bin_ids = px[:, 0].astype(np.int64) * 64 + px[:, 1] * 8 + px[:, 2]
    counts = np.bincount(bin_ids, minlength=SIGNATURE_BINS)
    return counts / float(px.shape[0])


def signature_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Total-variation distance between two normalized signatures, in [0, 1]."""
    d = 0.5 * float(np.abs(a - b).sum())
    return min(max(d, 0.0), 1.0)


@dataclass(frozen=True)
class DistanceSample:
    """Inter-frame distance at the boundary between frames t-1 and t."""

    boundary_index: int  # t >= 1
    value: float  # in [0, 1]


@dataclass(frozen=True)
class ShotParams:
    """Cut-detector tuning.

    A boundary at sample t requires value > ``abs_floor`` and value >
    mean + ``sensitivity`` * stddev over the trailing ``window`` samples
    (population stddev; all available samples are used when fewer than
    ``window`` precede t, and fewer than two preceding samples impose only
    the floor test), and at least ``min_shot_len`` frames since the previous
    boundary.
    """

    abs_floor: float = DEFAULT_ABS_FLOOR
    window: int = DEFAULT_WINDOW
    sensitivity: float = DEFAULT_SENSITIVITY
    min_shot_len: int = DEFAULT_MIN_SHOT_LEN

    def __post_init__(self) -> None:
        if not 0.0 < self.abs_floor <= 1.0:
            raise ValueError(f"abs_floor must be in (0, 1], got {self.abs_floor}")
        if self.window < 2:
            raise ValueError(f"window must be >= 2, got {self.window}")
        if self.sensitivity <= 0:
            raise ValueError(f"sensitivity must be > 0, got {self.sensitivity}")
        if self.min_shot_len < 1:
            raise ValueError(f"min_shot_len must be >= 1, got {self.min_shot_len}")


@dataclass(frozen=True)
class Shot:
    """A contiguous frame interval between detected transitions (inclusive)."""

    id: int
    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"shot {self.id}: start {self.start} > end {self.end}")

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def series_from_signatures(signatures: Sequence[np.ndarray]) -> list[DistanceSample]:
    """Consecutive-frame distances for precomputed signatures."""
    return [
        DistanceSample(t, signature_distance(signatures[t - 1], signatures[t]))
        for t in range(1, len(signatures))
    ]


def distance_series(frames: Iterable[Frame]) -> list[DistanceSample]:
    """Consecutive-frame signature distances; N frames yield N-1 samples."""
    samples: list[DistanceSample] = []
    prev: np.ndarray | None = None
    count = 0
    for frame in frames:
        sig = frame_signature(frame)
        if prev is not None:
            samples.append(DistanceSample(count, signature_distance(prev, sig)))
        prev = sig
        count += 1
    if count == 0:
        raise ValueError("distance_series requires at least one frame")
    return samples


def detect_shots(
    series: Sequence[DistanceSample], n_frames: int, params: ShotParams | None = None
) -> list[Shot]:
    """Segment ``n_frames`` frames into shots at detected cut boundaries.

    The returned shots are sorted, non-overlapping, and exactly tile
    ``[0, n_frames - 1]``.
    """
    params = params or ShotParams()
    if n_frames < 1:
        raise ValueError(f"n_frames must be >= 1, got {n_frames}")
    if len(series) != n_frames - 1:
        raise ValueError(f"series length {len(series)} does not match {n_frames} frames")

    values = np.array([s.value for s in series], dtype=np.float64)
    boundaries: list[int] = []
    prev_boundary = 0
    for t in range(1, n_frames):
        v = values[t - 1]
        if v <= params.abs_floor:
            continue
        trailing = values[max(0, t - 1 - params.window) : t - 1]
        if trailing.size >= 2:
            threshold = trailing.mean() + params.sensitivity * trailing.std()
            if v <= threshold:
                continue
        if t - prev_boundary < params.min_shot_len:
            continue
        boundaries.append(t)
        prev_boundary = t

    starts = [0, *boundaries]
    ends = [*(b - 1 for b in boundaries), n_frames - 1]
    return [Shot(i, s, e) for i, (s, e) in enumerate(zip(starts, ends))]


def dump_distance_series(series: Sequence[DistanceSample], dest: str | Path | IO[str]) -> None:
    """Write one ``t<TAB>value`` line per sample (6 decimal places)."""
    lines = "".join(f"{s.boundary_index}\t{s.value:.6f}\n" for s in series)
    if hasattr(dest, "write"):
        dest.write(lines)  # type: ignore[union-attr]
    else:
        Path(dest).write_text(lines, encoding="utf-8")
