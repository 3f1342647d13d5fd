"""CLI flag handling, exit codes, and artifact emission (run as subprocess)."""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import sys
from pathlib import Path

import pytest

from helpers import solid, write_rgb24

W, H = 16, 12
EXEC_DIR = Path(__file__).parent / "exec_backends"


def make_video(tmp_path: Path) -> Path:
    arrays = [solid((200, 16, 16), W, H)] * 20 + [solid((16, 16, 200), W, H)] * 20
    return write_rgb24(tmp_path / "video.rgb", arrays)


def run_cli(*args: str, stdin: bytes | None = None, env: dict | None = None):
    full_env = dict(os.environ)
    full_env.pop("KEYCAP_CACHE", None)
    if env:
        full_env.update(env)
    return subprocess.run(
        [sys.executable, "-m", "keycap.cli", *args],
        input=stdin,
        capture_output=True,
        env=full_env,
        timeout=120,
    )


def base_args(video: Path, out: Path, *extra: str) -> list[str]:
    return [
        "--input", str(video),
        "--input-format", "rgb24",
        "--fps", "10",
        "--width", str(W),
        "--height", str(H),
        "--budget", "2",
        "--out", str(out),
        *extra,
    ]


class TestHappyPath:
    def test_json_artifact(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli(*base_args(make_video(tmp_path), out))
        assert proc.returncode == 0, proc.stderr.decode()
        payload = json.loads((out / "description.json").read_text())
        assert payload["report"]["n_shots"] == 2
        assert str(out / "description.json") in proc.stdout.decode()

    def test_all_formats(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli(
            *base_args(make_video(tmp_path), out, "--format", "json,vtt,story,keyframes")
        )
        assert proc.returncode == 0, proc.stderr.decode()
        names = {p.name for p in out.iterdir()}
        assert {"description.json", "timeline.vtt", "story.txt"} <= names
        assert any(n.startswith("frame_") for n in names)

    def test_stdin_rgb24(self, tmp_path):
        out = tmp_path / "out"
        data = make_video(tmp_path).read_bytes()
        proc = run_cli(
            "--input", "-",
            "--input-format", "rgb24",
            "--fps", "10",
            "--width", str(W),
            "--height", str(H),
            "--budget", "2",
            "--out", str(out),
            stdin=data,
        )
        assert proc.returncode == 0, proc.stderr.decode()
        assert (out / "description.json").exists()

    def test_fractional_fps(self, tmp_path):
        out = tmp_path / "out"
        proc = run_cli(
            *base_args(make_video(tmp_path), out), "--fps", "30000/1001"
        )
        assert proc.returncode == 0, proc.stderr.decode()
        payload = json.loads((out / "description.json").read_text())
        assert payload["shots"][0]["end_s"] == pytest.approx(20 * 1001 / 30000, abs=1e-6)

    def test_dump_distances(self, tmp_path):
        out = tmp_path / "out"
        dump = tmp_path / "d.tsv"
        proc = run_cli(*base_args(make_video(tmp_path), out, "--dump-distances", str(dump)))
        assert proc.returncode == 0
        assert len(dump.read_text().splitlines()) == 39

    def test_cache_env_overrides_flag(self, tmp_path):
        out = tmp_path / "out"
        flag_cache = tmp_path / "flag.json"
        env_cache = tmp_path / "env.json"
        proc = run_cli(
            *base_args(make_video(tmp_path), out, "--cache", str(flag_cache)),
            env={"KEYCAP_CACHE": str(env_cache)},
        )
        assert proc.returncode == 0
        assert env_cache.exists() and not flag_cache.exists()

    def test_exec_backend(self, tmp_path):
        out = tmp_path / "out"
        cmd = f"{shlex.quote(sys.executable)} {shlex.quote(str(EXEC_DIR / 'echo_captioner.py'))}"
        proc = run_cli(*base_args(make_video(tmp_path), out, "--captioner", f"exec:{cmd}"))
        assert proc.returncode == 0, proc.stderr.decode()
        payload = json.loads((out / "description.json").read_text())
        assert payload["keyframes"][0]["caption"].startswith("exec caption ")

    def test_detector_flags_forwarded(self, tmp_path):
        out = tmp_path / "out"
        # A floor above 1.0 is invalid; just below suppresses every cut.
        proc = run_cli(*base_args(make_video(tmp_path), out, "--abs-floor", "0.999999"))
        assert proc.returncode == 0
        payload = json.loads((out / "description.json").read_text())
        assert payload["report"]["n_shots"] == 2  # solid cut distance is exactly 1.0
        proc = run_cli(*base_args(make_video(tmp_path), out, "--min-shot", "30"))
        assert proc.returncode == 0
        payload = json.loads((out / "description.json").read_text())
        assert payload["report"]["n_shots"] == 1


class TestExitCodes:
    def test_bad_flag_is_2(self, tmp_path):
        proc = run_cli("--nope")
        assert proc.returncode == 2

    def test_missing_budget_is_2(self, tmp_path):
        proc = run_cli("--input", "x.rgb", "--out", str(tmp_path))
        assert proc.returncode == 2

    def test_bad_captioner_value_is_2(self, tmp_path):
        proc = run_cli(*base_args(make_video(tmp_path), tmp_path / "o", "--captioner", "grpc:x"))
        assert proc.returncode == 2

    def test_missing_input_is_3(self, tmp_path):
        proc = run_cli(
            "--input", str(tmp_path / "absent.rgb"),
            "--input-format", "rgb24",
            "--fps", "10", "--width", "4", "--height", "4",
            "--budget", "1", "--out", str(tmp_path / "o"),
        )
        assert proc.returncode == 3
        assert b"input error" in proc.stderr

    def test_truncated_input_is_3(self, tmp_path):
        video = tmp_path / "short.rgb"
        video.write_bytes(solid((5, 5, 5), W, H).tobytes()[:-7])
        proc = run_cli(*base_args(video, tmp_path / "o"))
        assert proc.returncode == 3

    def test_captioner_failure_is_4(self, tmp_path):
        cmd = f"{shlex.quote(sys.executable)} {shlex.quote(str(EXEC_DIR / 'broken_captioner.py'))}"
        proc = run_cli(
            *base_args(make_video(tmp_path), tmp_path / "o", "--captioner", f"exec:{cmd}",
                       "--timeout", "10")
        )
        assert proc.returncode == 4
        assert b"captioner error" in proc.stderr

    def test_unwritable_out_is_5(self, tmp_path):
        blocker = tmp_path / "blocker"
        blocker.write_text("not a directory")
        proc = run_cli(*base_args(make_video(tmp_path), blocker / "sub"))
        assert proc.returncode == 5
        assert b"output error" in proc.stderr


class TestInference:
    def test_y4m_suffix_inferred(self, tmp_path):
        from helpers import y4m_bytes
        import numpy as np

        planes = [np.full((H, W), 40 if i < 10 else 220, dtype=np.uint8) for i in range(20)]
        video = tmp_path / "v.y4m"
        video.write_bytes(y4m_bytes(planes, fps="10:1"))
        out = tmp_path / "out"
        proc = run_cli("--input", str(video), "--budget", "2", "--out", str(out))
        assert proc.returncode == 0, proc.stderr.decode()
        payload = json.loads((out / "description.json").read_text())
        assert payload["report"]["n_frames"] == 20

    def test_unknown_suffix_needs_flag(self, tmp_path):
        video = tmp_path / "v.bin"
        video.write_bytes(b"\0" * 100)
        proc = run_cli("--input", str(video), "--budget", "1", "--out", str(tmp_path / "o"))
        assert proc.returncode == 2
