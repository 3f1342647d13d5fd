"""Keyframe budgeting and selection.

The user's budget (a frame count, or a wall-clock limit calibrated against the
captioner) is spent across shots: counts are apportioned to shots
proportionally to their length, then each funded shot contributes its medoid
frame plus farthest-point picks in signature space. Only these frames are ever
sent to the captioner, which is what makes description cost independent of
video length.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Callable, Sequence

import numpy as np

from keycap.shots import Shot, signature_distance

DEFAULT_PER_SHOT_CAP = 4

MEDOID_MAX_CANDIDATES = 64

# A captioner probe can never be faster than this; prevents a divide-by-zero
# budget explosion with near-instant backends.
MIN_PROBE_LATENCY_S = 0.001


@dataclass(frozen=True)
class Budget:
    """Keyframe budget: either a count ``k`` or a wall-clock time limit."""

    mode: str  # "count" | "time"
    k: int = 0
    time_limit_s: float = 0.0
    per_shot_cap: int = DEFAULT_PER_SHOT_CAP

    def __post_init__(self) -> None:
        if self.mode not in ("count", "time"):
            raise ValueError(f"unknown budget mode: {self.mode!r}")
        if self.mode == "count" and self.k < 1:
            raise ValueError(f"count budget requires k >= 1, got {self.k}")
        if self.mode == "time" and self.time_limit_s <= 0:
            raise ValueError(f"time budget requires a positive limit, got {self.time_limit_s}")
        if self.per_shot_cap < 1:
            raise ValueError(f"per_shot_cap must be >= 1, got {self.per_shot_cap}")

    @classmethod
    def count(cls, k: int, per_shot_cap: int = DEFAULT_PER_SHOT_CAP) -> "Budget":
        return cls(mode="count", k=k, per_shot_cap=per_shot_cap)

    @classmethod
    def time(cls, limit_s: float, per_shot_cap: int = DEFAULT_PER_SHOT_CAP) -> "Budget":
        return cls(mode="time", time_limit_s=limit_s, per_shot_cap=per_shot_cap)


@dataclass(frozen=True, order=True)
class Keyframe:
    """A selected frame: rank 0 is the shot representative, higher ranks are
    escalation or extra picks."""

    frame_index: int
    shot_id: int
    rank: int


def shot_capacity(shots: Sequence[Shot], per_shot_cap: int) -> int:
    """Most keyframes the video can absorb: sum of min(shot length, cap)."""
    return sum(min(s.length, per_shot_cap) for s in shots)


def allocate_budget(shots: Sequence[Shot], budget: Budget) -> list[int]:
    """Per-shot keyframe counts for a count-mode budget.

    With k below the shot count, the k longest shots (ties broken by earlier
    start) get one keyframe each. Otherwise every shot gets one and the
    surplus is apportioned proportionally to shot length by largest remainder
    (exact Fraction arithmetic; remainder ties broken by earlier start),
    clamped to min(shot length, per_shot_cap) with capped overflow
    redistributed. The counts always sum to min(k, total capacity).
    """
    if budget.mode != "count":
        raise ValueError("allocate_budget requires a count budget; calibrate time budgets first")
    if not shots:
        raise ValueError("allocate_budget requires at least one shot")

    n = len(shots)
    caps = [min(s.length, budget.per_shot_cap) for s in shots]
    counts = [0] * n

    if budget.k < n:
        order = sorted(range(n), key=lambda i: (-shots[i].length, shots[i].start))
        for i in order[: budget.k]:
            counts[i] = 1
        return counts

    total = min(budget.k, sum(caps))
    counts = [1] * n
    remaining = total - n
    while remaining > 0:
        eligible = [i for i in range(n) if counts[i] < caps[i]]
        weight = sum(shots[i].length for i in eligible)
        quotas = {i: Fraction(remaining * shots[i].length, weight) for i in eligible}
        granted = 0
        for i in eligible:
            add = min(int(quotas[i]), caps[i] - counts[i])
            counts[i] += add
            granted += add
        leftover = remaining - granted
        if leftover > 0:
            by_remainder = sorted(
                (i for i in eligible if counts[i] < caps[i]),
                key=lambda i: (-(quotas[i] - int(quotas[i])), shots[i].start),
            )
            for i in by_remainder[:leftover]:
                counts[i] += 1
                granted += 1
        remaining -= granted
    return counts


def coverage_score(shots: Sequence[Shot], counts: Sequence[int], n_frames: int) -> float:
    """Fraction of frames lying in funded shots; non-decreasing in k."""
    covered = sum(s.length for s, c in zip(shots, counts) if c > 0)
    return covered / n_frames


def _medoid_candidates(shot: Shot) -> list[int]:
    """Frame indices considered for the medoid; long shots are subsampled at a
    uniform stride so at most 64 candidates are compared."""
    stride = -(-shot.length // MEDOID_MAX_CANDIDATES)
    return list(range(shot.start, shot.end + 1, stride))


def _medoid(candidates: Sequence[int], signatures: Sequence[np.ndarray]) -> int:
    sigs = np.stack([signatures[i] for i in candidates])
    pairwise = 0.5 * np.abs(sigs[:, np.newaxis, :] - sigs[np.newaxis, :, :]).sum(axis=2)
    totals = pairwise.sum(axis=1)
    return candidates[int(np.argmin(totals))]  # argmin keeps the lowest index on ties


def _farthest_point(
    pool: Sequence[int], chosen: Sequence[int], signatures: Sequence[np.ndarray]
) -> int | None:
    """Unchosen frame maximizing its minimum distance to the chosen set."""
    taken = set(chosen)
    remaining = [i for i in pool if i not in taken]
    if not remaining:
        return None
    best_idx = remaining[0]
    best_score = -1.0
    for i in remaining:
        score = min(signature_distance(signatures[i], signatures[c]) for c in chosen)
        if score > best_score:  # strict: ties keep the lowest index
            best_score = score
            best_idx = i
    return best_idx


def select_keyframes(
    shots: Sequence[Shot], signatures: Sequence[np.ndarray], counts: Sequence[int]
) -> list[Keyframe]:
    """Pick ``counts[i]`` keyframes from each shot, sorted by frame index.

    Rank 0 is the shot medoid (the candidate minimizing total signature
    distance to the others; ties go to the lowest index); higher ranks are
    chosen by farthest-point traversal over all frames of the shot.
    """
    if len(counts) != len(shots):
        raise ValueError("counts must align with shots")
    keyframes: list[Keyframe] = []
    for shot, count in zip(shots, counts):
        if count == 0:
            continue
        if count > shot.length:
            raise ValueError(f"shot {shot.id}: count {count} exceeds length {shot.length}")
        chosen = [_medoid(_medoid_candidates(shot), signatures)]
        pool = range(shot.start, shot.end + 1)
        while len(chosen) < count:
            nxt = _farthest_point(pool, chosen, signatures)
            if nxt is None:
                break
            chosen.append(nxt)
        keyframes.extend(Keyframe(idx, shot.id, rank) for rank, idx in enumerate(chosen))
    return sorted(keyframes, key=lambda kf: kf.frame_index)


def next_escalation_pick(
    shot: Shot, signatures: Sequence[np.ndarray], existing: Sequence[Keyframe]
) -> Keyframe | None:
    """One more farthest-point keyframe for a shot, or None if exhausted."""
    chosen = [kf.frame_index for kf in existing]
    nxt = _farthest_point(range(shot.start, shot.end + 1), chosen, signatures)
    if nxt is None:
        return None
    rank = max(kf.rank for kf in existing) + 1
    return Keyframe(nxt, shot.id, rank)


def calibrate_time_budget(
    budget: Budget,
    shots: Sequence[Shot],
    signatures: Sequence[np.ndarray],
    caption_probe: Callable[[Keyframe], object],
    timer: Callable[[], float] = time.perf_counter,
) -> Budget:
    """Convert a time budget to a count budget by probing captioner latency.

    Captions the representative frame of the longest shot once, measures the
    wall latency L (clamped to >= 1 ms), and returns a count budget with
    k = floor((time_limit - elapsed) / L), clamped to [1, total capacity].
    The probe goes through the normal captioning path, so its result lands in
    the cache and is reused by the main pass.
    """
    if budget.mode != "time":
        raise ValueError("calibrate_time_budget requires a time budget")
    if not shots:
        raise ValueError("calibrate_time_budget requires at least one shot")
    start = timer()
    longest = min(shots, key=lambda s: (-s.length, s.start))
    probe = Keyframe(_medoid(_medoid_candidates(longest), signatures), longest.id, 0)
    probe_start = timer()
    caption_probe(probe)
    now = timer()
    latency = max(now - probe_start, MIN_PROBE_LATENCY_S)
    elapsed = now - start
    k = floor((budget.time_limit_s - elapsed) / latency)
    k = max(1, min(k, shot_capacity(shots, budget.per_shot_cap)))
    return Budget.count(k, per_shot_cap=budget.per_shot_cap)
