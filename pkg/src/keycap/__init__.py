"""keycap: describe long videos by captioning a budgeted set of keyframes.

The pipeline detects shot transitions from color-histogram distances, spends a
user-chosen keyframe budget across shots, captions only those frames through a
pluggable backend (stub, subprocess, or HTTP), and composes the captions into a
title, an abstract, and a duration-annotated activity story.
"""

from keycap.captioner import (
    Caption,
    CaptionBatch,
    CaptionedKeyframe,
    CaptionerConfig,
    CaptionerError,
    CaptionFailure,
    Captioner,
    CaptionCache,
    pixel_hash_hex,
)
from keycap.ingest import Frame, FrameAccess, FrameSource, IngestError, iter_frames
from keycap.keyframes import (
    Budget,
    Keyframe,
    allocate_budget,
    calibrate_time_budget,
    coverage_score,
    next_escalation_pick,
    select_keyframes,
)
from keycap.narrate import (
    TimelineEntry,
    VideoDescription,
    build_activity_story,
    caption_similarity,
    compose_abstract,
    dedup_captions,
    generate_title,
    needs_escalation,
    render_story,
)
from keycap.pipeline import PipelineConfig, PipelineResult, RunReport, run_pipeline, write_outputs
from keycap.shots import (
    DistanceSample,
    Shot,
    ShotParams,
    detect_shots,
    distance_series,
    frame_signature,
    series_from_signatures,
    signature_distance,
)

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "Caption",
    "CaptionBatch",
    "CaptionCache",
    "CaptionedKeyframe",
    "Captioner",
    "CaptionerConfig",
    "CaptionerError",
    "CaptionFailure",
    "DistanceSample",
    "Frame",
    "FrameAccess",
    "FrameSource",
    "IngestError",
    "Keyframe",
    "PipelineConfig",
    "PipelineResult",
    "RunReport",
    "Shot",
    "ShotParams",
    "TimelineEntry",
    "VideoDescription",
    "allocate_budget",
    "build_activity_story",
    "calibrate_time_budget",
    "caption_similarity",
    "compose_abstract",
    "coverage_score",
    "dedup_captions",
    "detect_shots",
    "distance_series",
    "frame_signature",
    "generate_title",
    "iter_frames",
    "needs_escalation",
    "next_escalation_pick",
    "pixel_hash_hex",
    "render_story",
    "run_pipeline",
    "select_keyframes",
    "series_from_signatures",
    "signature_distance",
    "write_outputs",
]
