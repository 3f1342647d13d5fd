"""Command-line entry point.

Exit codes: 0 success, 2 bad arguments, 3 input error, 4 captioner error,
5 output error.
"""

from __future__ import annotations

import argparse
import os
import sys
from fractions import Fraction
from pathlib import Path

from keycap.captioner import CaptionerConfig, CaptionerError
from keycap.ingest import FrameSource, IngestError
from keycap.keyframes import Budget
from keycap.narrate import DEFAULT_CONF_THRESHOLD, DEFAULT_DUP_THRESHOLD
from keycap.pipeline import OUTPUT_FORMATS, OutputError, PipelineConfig, run_pipeline, write_outputs
from keycap.shots import (
    DEFAULT_ABS_FLOOR,
    DEFAULT_MIN_SHOT_LEN,
    DEFAULT_SENSITIVITY,
    DEFAULT_WINDOW,
    ShotParams,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3
EXIT_CAPTIONER = 4
EXIT_OUTPUT = 5

_FORMAT_TO_KIND = {"y4m": "y4m", "rgb24": "rgb24", "frames": "frame-dir"}


def _parse_fps(value: str) -> Fraction:
    num, _, den = value.partition("/")
    fps = Fraction(int(num), int(den) if den else 1)
    if fps <= 0:
        raise ValueError("fps must be positive")
    return fps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="keycap",
        description="Describe a video by captioning a budgeted set of keyframes.",
    )
    parser.add_argument("--input", required=True, metavar="PATH|-",
                        help="video source path, or - for stdin")
    parser.add_argument("--input-format", choices=sorted(_FORMAT_TO_KIND),
                        help="y4m, rgb24, or frames (inferred from the input when omitted)")
    parser.add_argument("--fps", type=str, metavar="N[/D]",
                        help="frame rate for rgb24/frames sources")
    parser.add_argument("--width", type=int, help="frame width for rgb24 sources")
    parser.add_argument("--height", type=int, help="frame height for rgb24 sources")

    budget = parser.add_mutually_exclusive_group(required=True)
    budget.add_argument("--budget", type=int, metavar="K", help="keyframe count budget")
    budget.add_argument("--time-budget", type=float, metavar="SECONDS",
                        help="wall-clock budget, calibrated against captioner latency")
    parser.add_argument("--per-shot-cap", type=int, default=4, metavar="N",
                        help="max keyframes per shot (default 4)")

    parser.add_argument("--abs-floor", type=float, default=DEFAULT_ABS_FLOOR, metavar="F",
                        help="absolute cut-distance floor (default %(default)s)")
    parser.add_argument("--window", type=int, default=DEFAULT_WINDOW, metavar="N",
                        help="trailing samples for adaptive stats (default %(default)s)")
    parser.add_argument("--sensitivity", type=float, default=DEFAULT_SENSITIVITY, metavar="K",
                        help="stddev multiplier over the trailing window (default %(default)s)")
    parser.add_argument("--min-shot", type=int, default=DEFAULT_MIN_SHOT_LEN, metavar="N",
                        help="minimum shot length in frames (default %(default)s)")

    parser.add_argument("--captioner", default="stub", metavar="stub|exec:CMD|http:URL",
                        help="captioning backend (default stub)")
    parser.add_argument("--parallel", type=int, default=4, metavar="N",
                        help="concurrent captioner exchanges (default 4)")
    parser.add_argument("--timeout", type=float, default=30.0, metavar="S",
                        help="captioner timeout per frame (default 30)")
    parser.add_argument("--refine", action="store_true",
                        help="escalate low-confidence shots with extra keyframes")
    parser.add_argument("--dup-threshold", type=float, default=DEFAULT_DUP_THRESHOLD,
                        metavar="F", help="caption similarity above which captions merge")
    parser.add_argument("--conf-threshold", type=float, default=DEFAULT_CONF_THRESHOLD,
                        metavar="F", help="confidence below which a shot escalates")

    parser.add_argument("--out", required=True, metavar="DIR", help="output directory")
    parser.add_argument("--format", default="json", metavar="LIST",
                        help=f"comma-separated subset of {','.join(OUTPUT_FORMATS)}")
    parser.add_argument("--cache", metavar="PATH",
                        help="caption cache file (KEYCAP_CACHE env overrides)")
    parser.add_argument("--dump-distances", metavar="PATH",
                        help="write the inter-frame distance series for plotting")
    return parser


def _infer_kind(args: argparse.Namespace) -> str:
    if args.input_format:
        return _FORMAT_TO_KIND[args.input_format]
    if args.input == "-":
        return "y4m"
    path = Path(args.input)
    if path.is_dir():
        return "frame-dir"
    if path.suffix.lower() == ".y4m":
        return "y4m"
    raise ValueError(f"cannot infer input format of {args.input}; pass --input-format")


def _build_config(args: argparse.Namespace) -> PipelineConfig:
    kind = _infer_kind(args)
    fps = _parse_fps(args.fps) if args.fps else None
    source = FrameSource(kind=kind, locator=args.input, fps=fps,
                         width=args.width, height=args.height)

    if args.budget is not None:
        budget = Budget.count(args.budget, per_shot_cap=args.per_shot_cap)
    else:
        budget = Budget.time(args.time_budget, per_shot_cap=args.per_shot_cap)

    shot_params = ShotParams(
        abs_floor=args.abs_floor,
        window=args.window,
        sensitivity=args.sensitivity,
        min_shot_len=args.min_shot,
    )
    captioner = CaptionerConfig.from_cli_value(
        args.captioner, timeout_s=args.timeout, parallelism=args.parallel
    )
    formats = tuple(f for f in args.format.split(",") if f)
    cache = os.environ.get("KEYCAP_CACHE") or args.cache
    return PipelineConfig(
        source=source,
        budget=budget,
        shot_params=shot_params,
        captioner=captioner,
        refine=args.refine,
        dup_threshold=args.dup_threshold,
        conf_threshold=args.conf_threshold,
        out_dir=Path(args.out),
        formats=formats,
        cache_path=Path(cache) if cache else None,
        dump_distances=Path(args.dump_distances) if args.dump_distances else None,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _build_config(args)
    except (ValueError, ZeroDivisionError) as exc:
        parser.error(str(exc))  # exits with code 2

    try:
        result = run_pipeline(config)
        written = write_outputs(result, config)
    except IngestError as exc:
        print(f"keycap: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CaptionerError as exc:
        print(f"keycap: captioner error: {exc}", file=sys.stderr)
        return EXIT_CAPTIONER
    except OutputError as exc:
        print(f"keycap: output error: {exc}", file=sys.stderr)
        return EXIT_OUTPUT

    report = result.report
    timings = " ".join(f"{k}={v:.2f}s" for k, v in report.stage_seconds.items())
    print(
        f"keycap: frames={report.n_frames} shots={report.n_shots} "
        f"keyframes={report.n_keyframes} calls={report.n_captioner_calls} "
        f"cache_hits={report.n_cache_hits} | {timings}",
        file=sys.stderr,
    )
    for path in written:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
