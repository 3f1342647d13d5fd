"""End-to-end pipeline: ingest -> shots -> budget -> captions -> narration,
plus deterministic artifact writing (JSON, WebVTT, story text, keyframe PNGs).

Frames are streamed once for signatures; only the selected keyframes are
re-read for captioning, so memory stays bounded by the keyframe budget rather
than the video length. Artifacts are written atomically (temp file + rename)
and a failed run removes whatever it had already written.
"""

from __future__ import annotations

import io
import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from PIL import Image

from keycap.captioner import Captioner, CaptionerConfig, CaptionerError, CaptionCache
from keycap.ingest import Frame, FrameAccess, FrameSource
from keycap.keyframes import (
    Budget,
    Keyframe,
    allocate_budget,
    calibrate_time_budget,
    next_escalation_pick,
    select_keyframes,
)
from keycap.narrate import (
    DEFAULT_CONF_THRESHOLD,
    DEFAULT_DUP_THRESHOLD,
    TimelineEntry,
    VideoDescription,
    build_activity_story,
    compose_abstract,
    dedup_captions,
    generate_title,
    needs_escalation,
    render_story,
)
from keycap.shots import (
    Shot,
    ShotParams,
    detect_shots,
    dump_distance_series,
    frame_signature,
    series_from_signatures,
)

log = logging.getLogger(__name__)

OUTPUT_FORMATS = ("json", "vtt", "story", "keyframes")


class OutputError(RuntimeError):
    """Raised when artifacts cannot be written."""


@dataclass(frozen=True)
class PipelineConfig:
    source: FrameSource
    budget: Budget
    shot_params: ShotParams = ShotParams()
    captioner: CaptionerConfig = CaptionerConfig()
    refine: bool = False
    dup_threshold: float = DEFAULT_DUP_THRESHOLD
    conf_threshold: float = DEFAULT_CONF_THRESHOLD
    out_dir: Path = Path("out")
    formats: tuple[str, ...] = ("json",)
    cache_path: Path | None = None
    dump_distances: Path | None = None

    def __post_init__(self) -> None:
        if not self.formats:
            raise ValueError("at least one output format is required")
        unknown = set(self.formats) - set(OUTPUT_FORMATS)
        if unknown:
            raise ValueError(f"unknown output formats: {sorted(unknown)}")
        for name, value in (("dup_threshold", self.dup_threshold),
                            ("conf_threshold", self.conf_threshold)):
            if not 0.0 < value <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {value}")


@dataclass
class RunReport:
    """Run accounting. ``n_keyframes`` counts every selected keyframe
    including escalation picks (``n_escalations`` of them), so with refine
    off n_keyframes never exceeds the budget k. Captioner calls plus cache
    hits equal the keyframes attempted. ``stage_seconds`` is wall time per
    stage and is deliberately excluded from deterministic artifacts."""

    n_frames: int = 0
    n_shots: int = 0
    n_keyframes: int = 0
    n_escalations: int = 0
    n_captioner_calls: int = 0
    n_cache_hits: int = 0
    stage_seconds: dict[str, float] = field(default_factory=dict)

    def counters(self) -> dict[str, int]:
        return {
            "n_frames": self.n_frames,
            "n_shots": self.n_shots,
            "n_keyframes": self.n_keyframes,
            "n_escalations": self.n_escalations,
            "n_captioner_calls": self.n_captioner_calls,
            "n_cache_hits": self.n_cache_hits,
        }


@dataclass
class PipelineResult:
    description: VideoDescription
    report: RunReport
    shots: list[Shot]
    keyframes: list[Keyframe]
    failures: list
    frame_period_s: float
    keyframe_frames: dict[int, Frame]


class _StageClock:
    def __init__(self, report: RunReport):
        self.report = report
        self._t0 = time.perf_counter()

    def lap(self, stage: str) -> None:
        now = time.perf_counter()
        self.report.stage_seconds[stage] = now - self._t0
        log.debug("stage %s: %.3fs", stage, now - self._t0)
        self._t0 = now


def run_pipeline(config: PipelineConfig, backend=None) -> PipelineResult:
    """Execute all stages and return the description plus run accounting.

    ``backend`` overrides the captioner backend built from the config; tests
    use this to inject instrumented fakes.
    """
    report = RunReport()
    clock = _StageClock(report)
    cache = CaptionCache(config.cache_path)

    with FrameAccess(config.source) as access, Captioner(
        config.captioner, backend=backend, cache=cache
    ) as captioner:
        signatures = [frame_signature(frame) for frame in access.stream()]
        report.n_frames = len(signatures)
        clock.lap("ingest")

        series = series_from_signatures(signatures)
        if config.dump_distances is not None:
            dump_distance_series(series, config.dump_distances)
        shots = detect_shots(series, report.n_frames, config.shot_params)
        report.n_shots = len(shots)
        clock.lap("shots")

        budget = config.budget
        if budget.mode == "time":
            budget = calibrate_time_budget(
                budget,
                shots,
                signatures,
                lambda kf: captioner.caption_frame(access.get(kf.frame_index)),
            )
        counts = allocate_budget(shots, budget)
        keyframes = select_keyframes(shots, signatures, counts)
        clock.lap("budget")

        frames = {kf.frame_index: access.get(kf.frame_index) for kf in keyframes}
        batch = captioner.caption_keyframes([(kf, frames[kf.frame_index]) for kf in keyframes])
        captioned = list(batch.captioned)
        failures = list(batch.failures)

        if config.refine:
            by_shot = {shot.id: shot for shot in shots}
            while True:
                additions: list[Keyframe] = []
                for shot in shots:
                    shot_kfs = [kf for kf in keyframes if kf.shot_id == shot.id]
                    if not shot_kfs or len(shot_kfs) >= min(shot.length, budget.per_shot_cap):
                        continue
                    captions = [
                        ck.caption for ck in captioned if ck.keyframe.shot_id == shot.id
                    ]
                    if needs_escalation(captions, len(shot_kfs), config.conf_threshold):
                        pick = next_escalation_pick(shot, signatures, shot_kfs)
                        if pick is not None:
                            additions.append(pick)
                if not additions:
                    break
                report.n_escalations += len(additions)
                keyframes = sorted(keyframes + additions, key=lambda kf: kf.frame_index)
                for kf in additions:
                    frames[kf.frame_index] = access.get(kf.frame_index)
                extra = captioner.caption_keyframes(
                    [(kf, frames[kf.frame_index]) for kf in additions]
                )
                captioned = sorted(
                    captioned + extra.captioned, key=lambda ck: ck.keyframe.frame_index
                )
                failures.extend(extra.failures)
        clock.lap("captions")

        report.n_keyframes = len(keyframes)
        report.n_captioner_calls = captioner.calls
        report.n_cache_hits = captioner.cache_hits

        if not captioned:
            raise CaptionerError(
                captioner.backend.model_id,
                keyframes[0].frame_index if keyframes else -1,
                "no keyframe produced a caption",
            )

        deduped = dedup_captions([ck.caption for ck in captioned], config.dup_threshold)
        description = VideoDescription(
            title=generate_title(deduped),
            abstract=compose_abstract(deduped),
            captions=captioned,
            timeline=build_activity_story(
                captioned, shots, access.frame_period_s, config.dup_threshold
            ),
        )
        clock.lap("narrate")
        cache.save()

        return PipelineResult(
            description=description,
            report=report,
            shots=shots,
            keyframes=keyframes,
            failures=failures,
            frame_period_s=access.frame_period_s,
            keyframe_frames=frames,
        )


def _vtt_timestamp(seconds: float) -> str:
    total_ms = int(round(seconds * 1000))
    ms = total_ms % 1000
    s = (total_ms // 1000) % 60
    m = (total_ms // 60_000) % 60
    h = total_ms // 3_600_000
    return f"{h:02d}:{m:02d}:{s:02d}.{ms:03d}"


def _round6(x: float) -> float:
    return round(x, 6)


def _json_payload(result: PipelineResult) -> str:
    desc = result.description
    period = result.frame_period_s
    failure_by_kf = {f.keyframe: f for f in result.failures}
    caption_by_kf = {ck.keyframe: ck for ck in desc.captions}
    keyframes = []
    for kf in result.keyframes:
        entry: dict = {
            "frame_index": kf.frame_index,
            "shot_id": kf.shot_id,
            "rank": kf.rank,
            "time_s": _round6(kf.frame_index * period),
            "caption": None,
            "confidence": None,
            "model_id": None,
            "error": None,
        }
        ck = caption_by_kf.get(kf)
        if ck is not None:
            entry.update(
                caption=ck.caption.text,
                confidence=ck.caption.confidence,
                model_id=ck.caption.model_id,
            )
        else:
            failure = failure_by_kf.get(kf)
            entry["error"] = failure.error if failure else "not captioned"
        keyframes.append(entry)
    payload = {
        "title": desc.title,
        "abstract": desc.abstract,
        "shots": [
            {
                "id": s.id,
                "start": s.start,
                "end": s.end,
                "start_s": _round6(s.start * period),
                "end_s": _round6((s.end + 1) * period),
            }
            for s in result.shots
        ],
        "keyframes": keyframes,
        "timeline": [
            {
                "start_s": _round6(t.start_s),
                "end_s": _round6(t.end_s),
                "text": t.text,
                "source_keyframes": list(t.source_keyframes),
            }
            for t in desc.timeline
        ],
        "report": result.report.counters(),
    }
    return json.dumps(payload, indent=2) + "\n"


def _vtt_payload(timeline: list[TimelineEntry]) -> str:
    cues = [
        f"{_vtt_timestamp(t.start_s)} --> {_vtt_timestamp(t.end_s)}\n{t.text}\n"
        for t in timeline
    ]
    return "WEBVTT\n\n" + "\n".join(cues)


def write_outputs(result: PipelineResult, config: PipelineConfig) -> list[Path]:
    """Write the requested artifacts atomically; returns the written paths.

    Identical inputs produce byte-identical files. On failure every artifact
    written by this call is removed again.
    """
    out_dir = config.out_dir
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OutputError(f"cannot create output directory {out_dir}: {exc}") from exc

    written: list[Path] = []

    def _emit(name: str, data: bytes) -> None:
        final = out_dir / name
        tmp = out_dir / (name + ".tmp")
        try:
            tmp.write_bytes(data)
            os.replace(tmp, final)
        except OSError as exc:
            raise OutputError(f"cannot write {final}: {exc}") from exc
        written.append(final)

    try:
        if "json" in config.formats:
            _emit("description.json", _json_payload(result).encode("utf-8"))
        if "vtt" in config.formats:
            _emit("timeline.vtt", _vtt_payload(result.description.timeline).encode("utf-8"))
        if "story" in config.formats:
            _emit("story.txt", render_story(result.description.timeline).encode("utf-8"))
        if "keyframes" in config.formats:
            for kf in result.keyframes:
                frame = result.keyframe_frames[kf.frame_index]
                buf = io.BytesIO()
                Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
                _emit(f"frame_{kf.frame_index:06d}.png", buf.getvalue())
    except OutputError:
        for path in written:
            try:
                path.unlink()
            except OSError:
                pass
        raise
    return written
