"""HTTP backend walkthrough.

Launches the reference caption-server (mock mode) as a subprocess, points the
pipeline's HTTP backend at it, and runs the same clip as the stub demo. The
mock server hashes the decoded pixels exactly like the in-process stub, so
this demonstrates the wire protocol without needing model weights; swap the
server for `--mode model` (or any service speaking the same contract) to get
real captions.

Requires the caption-server package: pip install -e server/
"""

import socket
import subprocess
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import requests

from keycap import Budget, CaptionerConfig, FrameSource, PipelineConfig, run_pipeline

W, H, FPS = 64, 48, 10


def make_video(path: Path) -> None:
    rng = np.random.default_rng(23)
    chunks = []
    for palette in ((220, 80, 40), (40, 80, 220)):
        for _ in range(35):
            noise = rng.integers(-12, 13, size=(H, W, 3))
            chunks.append(np.clip(np.array(palette) + noise, 0, 255).astype(np.uint8).tobytes())
    path.write_bytes(b"".join(chunks))


def start_server() -> tuple[subprocess.Popen, str]:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        port = sock.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "caption_server", "--mode", "mock", "--port", str(port)]
    )
    url = f"http://127.0.0.1:{port}"
    deadline = time.time() + 15
    while True:
        try:
            if requests.get(f"{url}/healthz", timeout=1).text == "ok":
                return proc, url
        except requests.RequestException:
            pass
        if time.time() > deadline:
            proc.terminate()
            raise RuntimeError("caption-server did not come up")
        time.sleep(0.05)


def main() -> None:
    video = Path(tempfile.mkdtemp()) / "clip.rgb"
    make_video(video)

    proc, url = start_server()
    print(f"caption-server (mock) listening at {url}")
    try:
        config = PipelineConfig(
            source=FrameSource("rgb24", video, fps=Fraction(FPS), width=W, height=H),
            budget=Budget.count(3),
            captioner=CaptionerConfig(backend="http", endpoint=url, parallelism=4),
            out_dir=Path(__file__).parent / "out_http",
            formats=("json",),
        )
        result = run_pipeline(config)
        print("\ncaptions over the wire:")
        for ck in result.description.captions:
            print(f"  frame {ck.keyframe.frame_index:3d} @ {ck.time_s:5.2f}s  "
                  f"-> {ck.caption.text!r} (model {ck.caption.model_id})")
        print(f"\ntitle: {result.description.title}")
        print(f"calls: {result.report.n_captioner_calls}, "
              f"cache hits: {result.report.n_cache_hits}")
    finally:
        proc.terminate()
        proc.wait(timeout=10)
        print("server stopped")


if __name__ == "__main__":
    main()
