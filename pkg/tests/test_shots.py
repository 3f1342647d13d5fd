"""Signature, distance, and cut-detection tests."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keycap.shots import (
    DistanceSample,
    Shot,
    ShotParams,
    detect_shots,
    distance_series,
    dump_distance_series,
    frame_signature,
    series_from_signatures,
    signature_distance,
)

from helpers import (
    detect_boundaries_oracle,
    frames_from_arrays,
    signature_oracle,
    solid,
    synthetic_cut_video,
)

BLACK = solid((0, 0, 0))
WHITE = solid((255, 255, 255))


def _rand_signatures(rng: np.random.Generator, n: int) -> np.ndarray:
    raw = rng.random((n, 512))
    return raw / raw.sum(axis=1, keepdims=True)


class TestSignature:
    def test_all_black(self):
        sig = frame_signature(frames_from_arrays([BLACK])[0])
        assert sig[0] == 1.0 and sig[1:].sum() == 0.0

    def test_all_white(self):
        sig = frame_signature(frames_from_arrays([WHITE])[0])
        assert sig[511] == 1.0 and sig[:511].sum() == 0.0

    def test_half_black_half_white(self):
        px = BLACK.copy()
        px[:, px.shape[1] // 2 :] = 255
        sig = frame_signature(frames_from_arrays([px])[0])
        assert sig[0] == pytest.approx(0.5) and sig[511] == pytest.approx(0.5)

    def test_matches_per_pixel_oracle(self):
        rng = np.random.default_rng(11)
        px = rng.integers(0, 256, size=(9, 7, 3)).astype(np.uint8)
        sig = frame_signature(frames_from_arrays([px])[0])
        assert np.allclose(sig, signature_oracle(px), atol=1e-12)

    def test_normalized(self):
        rng = np.random.default_rng(12)
        px = rng.integers(0, 256, size=(16, 16, 3)).astype(np.uint8)
        sig = frame_signature(frames_from_arrays([px])[0])
        assert abs(sig.sum() - 1.0) <= 1e-9
        assert (sig >= 0).all()


class TestDistance:
    def test_identical(self):
        sig = frame_signature(frames_from_arrays([BLACK])[0])
        assert signature_distance(sig, sig) == 0.0

    def test_disjoint(self):
        a = frame_signature(frames_from_arrays([BLACK])[0])
        b = frame_signature(frames_from_arrays([WHITE])[0])
        assert signature_distance(a, b) == 1.0

    def test_half_overlap(self):
        px = BLACK.copy()
        px[:, px.shape[1] // 2 :] = 255
        a = frame_signature(frames_from_arrays([BLACK])[0])
        b = frame_signature(frames_from_arrays([px])[0])
        assert signature_distance(a, b) == pytest.approx(0.5)

    def test_metric_properties_random(self):
        rng = np.random.default_rng(13)
        a, b, c = (_rand_signatures(rng, 200) for _ in range(3))
        dab = 0.5 * np.abs(a - b).sum(axis=1)
        dba = 0.5 * np.abs(b - a).sum(axis=1)
        dac = 0.5 * np.abs(a - c).sum(axis=1)
        dcb = 0.5 * np.abs(c - b).sum(axis=1)
        assert np.abs(dab - dba).max() <= 1e-9
        assert (dab <= dac + dcb + 1e-9).all()
        assert (dab >= 0).all() and (dab <= 1 + 1e-9).all()


class TestSeries:
    def test_single_frame(self):
        assert distance_series(frames_from_arrays([BLACK])) == []

    def test_constant_video(self):
        series = distance_series(frames_from_arrays([BLACK.copy() for _ in range(10)]))
        assert len(series) == 9
        assert all(s.value == 0.0 for s in series)

    def test_step_change(self):
        arrays = [BLACK.copy() for _ in range(10)] + [WHITE.copy() for _ in range(10)]
        series = distance_series(frames_from_arrays(arrays))
        assert len(series) == 19
        assert series[9].boundary_index == 10 and series[9].value == 1.0
        assert all(s.value == 0.0 for s in series if s.boundary_index != 10)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            distance_series([])

    def test_from_signatures_agrees(self):
        rng = np.random.default_rng(14)
        arrays = [rng.integers(0, 256, size=(6, 6, 3)).astype(np.uint8) for _ in range(5)]
        frames = frames_from_arrays(arrays)
        a = distance_series(frames)
        b = series_from_signatures([frame_signature(f) for f in frames])
        assert a == b


def _samples(values: list[float]) -> list[DistanceSample]:
    return [DistanceSample(i + 1, v) for i, v in enumerate(values)]


class TestDetect:
    def test_no_motion_single_shot(self):
        shots = detect_shots(_samples([0.0] * 49), 50, ShotParams())
        assert shots == [Shot(0, 0, 49)]

    def test_below_floor_single_shot(self):
        shots = detect_shots(_samples([0.2] * 49), 50, ShotParams(abs_floor=0.25))
        assert shots == [Shot(0, 0, 49)]

    def test_two_solid_shots_match_oracle(self):
        arrays = [solid((200, 16, 16)) for _ in range(50)] + [
            solid((16, 16, 200)) for _ in range(50)
        ]
        series = distance_series(frames_from_arrays(arrays))
        values = [s.value for s in series]
        assert detect_boundaries_oracle(values) == [50]
        shots = detect_shots(series, 100, ShotParams())
        assert [(s.start, s.end) for s in shots] == [(0, 49), (50, 99)]

    def test_single_frame_video(self):
        assert detect_shots([], 1, ShotParams()) == [Shot(0, 0, 0)]

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="does not match"):
            detect_shots(_samples([0.0] * 5), 10, ShotParams())

    def test_min_shot_len_suppresses(self):
        # A second spike right after a cut is absorbed into the new shot.
        values = [0.0] * 20 + [1.0, 0.0, 0.0, 1.0] + [0.0] * 16
        shots = detect_shots(_samples(values), 41, ShotParams(min_shot_len=8))
        assert [s.start for s in shots] == [0, 21]

    def test_matches_oracle_on_random_series(self):
        rng = np.random.default_rng(15)
        for _ in range(25):
            values = list(np.round(rng.random(rng.integers(1, 120)), 3))
            params = ShotParams(
                abs_floor=float(rng.uniform(0.05, 0.9)),
                window=int(rng.integers(2, 20)),
                sensitivity=float(rng.uniform(0.5, 4.0)),
                min_shot_len=int(rng.integers(1, 10)),
            )
            n = len(values) + 1
            expected = detect_boundaries_oracle(
                values, params.abs_floor, params.window, params.sensitivity, params.min_shot_len
            )
            shots = detect_shots(_samples(values), n, params)
            assert [s.start for s in shots[1:]] == expected

    @given(
        st.lists(st.floats(min_value=0.0, max_value=1.0, allow_nan=False), max_size=200),
        st.floats(min_value=0.01, max_value=1.0),
    )
    @settings(max_examples=200, deadline=None)
    def test_always_tiles(self, values, floor):
        n = len(values) + 1
        shots = detect_shots(_samples(values), n, ShotParams(abs_floor=floor))
        assert shots[0].start == 0 and shots[-1].end == n - 1
        for prev, cur in zip(shots, shots[1:]):
            assert cur.start == prev.end + 1
        assert all(s.id == i for i, s in enumerate(shots))

    def test_declared_boundaries_exceed_floor(self):
        rng = np.random.default_rng(16)
        values = list(rng.random(300))
        params = ShotParams(abs_floor=0.4, min_shot_len=3)
        shots = detect_shots(_samples(values), 301, params)
        for s in shots[1:]:
            assert values[s.start - 1] > params.abs_floor

    def test_raising_floor_never_adds_shots(self):
        rng = np.random.default_rng(17)
        for _ in range(20):
            values = list(rng.random(150))
            n_prev = None
            for floor in (0.1, 0.3, 0.5, 0.7, 0.9):
                shots = detect_shots(_samples(values), 151, ShotParams(abs_floor=floor))
                if n_prev is not None:
                    assert len(shots) <= n_prev
                n_prev = len(shots)

    def test_synthetic_videos_recovered(self):
        rng = np.random.default_rng(18)
        arrays, truth = synthetic_cut_video(rng, n_shots=5)
        series = distance_series(frames_from_arrays(arrays))
        shots = detect_shots(series, len(arrays), ShotParams())
        assert [s.start for s in shots[1:]] == truth


def test_dump_format(tmp_path):
    series = [DistanceSample(1, 0.1234567), DistanceSample(2, 1.0)]
    out = tmp_path / "distances.tsv"
    dump_distance_series(series, out)
    assert out.read_text() == "1\t0.123457\n2\t1.000000\n"
