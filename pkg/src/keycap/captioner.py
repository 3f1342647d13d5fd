"""Captioning backends behind one contract, plus a content-addressed cache.

The image-captioning model is treated as a replaceable service. Three backends
ship with the package:

* ``stub``  Pure and deterministic; the caption embeds the first 8 hex digits
            of the 64-bit FNV-1a hash of the frame's RGB24 buffer. Used for
            tests and dry runs.
* ``exec``  A long-lived child process speaking newline-delimited JSON:
            requests ``{"id": <int>, "png_b64": <base64 PNG>}`` on stdin,
            responses ``{"id": <int>, "caption": <str>,
            "confidence": <float, optional>}`` on stdout, flushed per line.
            Ids correlate requests to responses, so replies may arrive out of
            order.
* ``http``  ``POST {endpoint}/v1/caption`` with a raw PNG body
            (``Content-Type: image/png``); 200 responses carry
            ``{"caption": <str>, "confidence": <float, optional>,
            "model_id": <str, optional>}``, failures carry
            ``{"error": <str>}`` with status >= 400.

Captions are cached by (model id, pixel hash), so re-running a video or
tuning detector parameters never re-pays model latency, and identical frames
within one run trigger a single backend exchange even under parallelism.
"""

from __future__ import annotations

import base64
import io
import json
import shlex
import subprocess
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from concurrent.futures import TimeoutError as FutureTimeoutError
from dataclasses import dataclass, field
from itertools import count as _count
from pathlib import Path
from typing import Sequence

import requests
from PIL import Image

from keycap.ingest import Frame
from keycap.keyframes import Keyframe

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3

STUB_MODEL_ID = "stub-v1"


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a hash."""
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


def pixel_hash_hex(frame: Frame) -> str:
    """16-hex-digit FNV-1a hash of the frame's raw RGB24 buffer."""
    return f"{fnv1a64(frame.tobytes()):016x}"


def frame_to_png(frame: Frame) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(frame.pixels, mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class CaptionerError(RuntimeError):
    """A captioning exchange failed; carries backend, frame index, and cause."""

    def __init__(self, backend: str, frame_index: int, cause: str, retryable: bool = False):
        super().__init__(f"{backend} captioner failed on frame {frame_index}: {cause}")
        self.backend = backend
        self.frame_index = frame_index
        self.cause = cause
        self.retryable = retryable


@dataclass(frozen=True)
class Caption:
    text: str
    confidence: float | None
    model_id: str

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("caption text must be non-empty")
        if self.confidence is not None and not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")

    @property
    def effective_confidence(self) -> float:
        """Confidence for escalation decisions; absent means fully trusted."""
        return 1.0 if self.confidence is None else self.confidence


@dataclass(frozen=True)
class CaptionedKeyframe:
    keyframe: Keyframe
    time_s: float
    caption: Caption


@dataclass(frozen=True)
class CaptionFailure:
    keyframe: Keyframe
    time_s: float
    error: str


@dataclass(frozen=True)
class CaptionerConfig:
    """Backend choice plus transport knobs.

    ``endpoint`` is the command line for ``exec`` or the base URL for
    ``http``. ``stub_delay_s`` injects artificial latency into the stub, for
    latency-sensitive tests and time-budget calibration demos.
    """

    backend: str = "stub"
    endpoint: str = ""
    timeout_s: float = 30.0
    parallelism: int = 4
    retries: int = 2
    stub_delay_s: float = 0.0

    def __post_init__(self) -> None:
        if self.backend not in ("stub", "exec", "http"):
            raise ValueError(f"unknown captioner backend: {self.backend!r}")
        if self.backend in ("exec", "http") and not self.endpoint:
            raise ValueError(f"{self.backend} backend requires an endpoint")
        if self.timeout_s <= 0:
            raise ValueError(f"timeout_s must be > 0, got {self.timeout_s}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")

    @classmethod
    def from_cli_value(cls, value: str, **kwargs) -> "CaptionerConfig":
        """Parse ``stub``, ``exec:CMD``, or ``http:URL``."""
        if value == "stub":
            return cls(backend="stub", **kwargs)
        kind, sep, endpoint = value.partition(":")
        if kind in ("exec", "http") and sep and endpoint:
            return cls(backend=kind, endpoint=endpoint, **kwargs)
        raise ValueError(f"expected stub, exec:CMD, or http:URL, got {value!r}")


@dataclass
class CaptionBatch:
    """Outcome of captioning a keyframe list: successes ordered by frame
    index, per-keyframe failures, and call accounting."""

    captioned: list[CaptionedKeyframe] = field(default_factory=list)
    failures: list[CaptionFailure] = field(default_factory=list)
    calls: int = 0
    cache_hits: int = 0


class StubBackend:
    """Deterministic captioner: hashes the pixel buffer, confidence 1.0."""

    def __init__(self, delay_s: float = 0.0):
        self.model_id = STUB_MODEL_ID
        self.delay_s = delay_s

    def caption(self, frame: Frame) -> Caption:
        if self.delay_s > 0:
            time.sleep(self.delay_s)
        return Caption(f"stub caption {pixel_hash_hex(frame)[:8]}", 1.0, self.model_id)

    def close(self) -> None:
        pass


class HttpBackend:
    """Client for the PNG-in / JSON-out captioning endpoint."""

    def __init__(self, base_url: str, timeout_s: float = 30.0):
        self.base_url = base_url.rstrip("/")
        self.url = self.base_url + "/v1/caption"
        self.timeout_s = timeout_s
        self.model_id = f"http:{self.base_url}"
        self._session = requests.Session()

    def caption(self, frame: Frame) -> Caption:
        try:
            resp = self._session.post(
                self.url,
                data=frame_to_png(frame),
                headers={"Content-Type": "image/png"},
                timeout=self.timeout_s,
            )
        except requests.RequestException as exc:
            raise CaptionerError("http", frame.index, f"transport failure: {exc}", retryable=True)
        if resp.status_code >= 400:
            try:
                detail = resp.json().get("error", resp.text)
            except ValueError:
                detail = resp.text
            raise CaptionerError(
                "http",
                frame.index,
                f"status {resp.status_code}: {detail}",
                retryable=resp.status_code >= 500,
            )
        try:
            payload = resp.json()
        except ValueError as exc:
            raise CaptionerError("http", frame.index, f"malformed response: {exc}")
        return _caption_from_payload(payload, "http", frame.index, self.model_id)

    def close(self) -> None:
        self._session.close()


class ExecBackend:
    """Long-lived child process exchanging newline-delimited JSON.

    A reader thread matches responses to pending requests by id, so several
    requests may be in flight at once. A dead child fails all pending
    requests and is respawned on the next attempt.
    """

    def __init__(self, command: str, timeout_s: float = 30.0):
        self.command = command
        self.timeout_s = timeout_s
        self.model_id = f"exec:{command}"
        self._proc: subprocess.Popen | None = None
        self._pending: dict[int, Future] = {}
        self._ids = _count(1)
        self._lock = threading.Lock()

    def _ensure_proc(self) -> subprocess.Popen:
        with self._lock:
            if self._proc is None or self._proc.poll() is not None:
                self._proc = subprocess.Popen(
                    shlex.split(self.command),
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                )
                threading.Thread(
                    target=self._read_responses, args=(self._proc,), daemon=True
                ).start()
            return self._proc

    def _read_responses(self, proc: subprocess.Popen) -> None:
        assert proc.stdout is not None
        for line in proc.stdout:
            try:
                payload = json.loads(line)
                rid = payload["id"]
            except (ValueError, KeyError, TypeError):
                continue  # non-protocol output; the request will time out
            with self._lock:
                fut = self._pending.pop(rid, None)
            if fut is not None:
                fut.set_result(payload)
        code = proc.wait()
        with self._lock:
            pending, self._pending = self._pending, {}
        for fut in pending.values():
            fut.set_exception(
                RuntimeError(f"captioner process exited with code {code} before replying")
            )

    def caption(self, frame: Frame) -> Caption:
        proc = self._ensure_proc()
        rid = next(self._ids)
        fut: Future = Future()
        request = json.dumps(
            {"id": rid, "png_b64": base64.b64encode(frame_to_png(frame)).decode("ascii")}
        )
        with self._lock:
            self._pending[rid] = fut
            try:
                assert proc.stdin is not None
                proc.stdin.write(request + "\n")
                proc.stdin.flush()
            except (BrokenPipeError, OSError) as exc:
                self._pending.pop(rid, None)
                raise CaptionerError(
                    "exec", frame.index, f"transport failure: {exc}", retryable=True
                )
        try:
            payload = fut.result(timeout=self.timeout_s)
        except FutureTimeoutError:
            with self._lock:
                self._pending.pop(rid, None)
            raise CaptionerError("exec", frame.index, f"timeout after {self.timeout_s}s")
        except RuntimeError as exc:
            raise CaptionerError("exec", frame.index, str(exc), retryable=True)
        return _caption_from_payload(payload, "exec", frame.index, self.model_id)

    def close(self) -> None:
        with self._lock:
            proc, self._proc = self._proc, None
        if proc is not None and proc.poll() is None:
            if proc.stdin is not None:
                proc.stdin.close()
            try:
                proc.wait(timeout=2)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()


def _caption_from_payload(
    payload: object, backend: str, frame_index: int, default_model_id: str
) -> Caption:
    if not isinstance(payload, dict):
        raise CaptionerError(backend, frame_index, "malformed response: not a JSON object")
    text = payload.get("caption")
    confidence = payload.get("confidence")
    model_id = payload.get("model_id") or default_model_id
    try:
        return Caption(
            text if isinstance(text, str) else "",
            float(confidence) if confidence is not None else None,
            str(model_id),
        )
    except (TypeError, ValueError) as exc:
        raise CaptionerError(backend, frame_index, f"malformed response: {exc}")


def make_backend(config: CaptionerConfig):
    if config.backend == "stub":
        return StubBackend(delay_s=config.stub_delay_s)
    if config.backend == "exec":
        return ExecBackend(config.endpoint, timeout_s=config.timeout_s)
    return HttpBackend(config.endpoint, timeout_s=config.timeout_s)


class CaptionCache:
    """Thread-safe caption store keyed by (model id, pixel hash), optionally
    persisted as a JSON sidecar file."""

    VERSION = 1

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._entries: dict[str, Caption] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            self._load()

    @staticmethod
    def key(model_id: str, pixel_hash: str) -> str:
        return f"{model_id}:{pixel_hash}"

    def get(self, key: str) -> Caption | None:
        with self._lock:
            return self._entries.get(key)

    def put(self, key: str, caption: Caption) -> None:
        with self._lock:
            self._entries[key] = caption

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)

    def _load(self) -> None:
        assert self.path is not None
        try:
            raw = json.loads(self.path.read_text(encoding="utf-8"))
            entries = raw["entries"]
        except (OSError, ValueError, KeyError) as exc:
            raise RuntimeError(f"unreadable caption cache {self.path}: {exc}") from exc
        for key, item in entries.items():
            self._entries[key] = Caption(
                item["text"], item.get("confidence"), item["model_id"]
            )

    def save(self) -> None:
        """Persist atomically (write to a temp file, then rename)."""
        if self.path is None:
            return
        with self._lock:
            entries = {
                key: {"text": c.text, "confidence": c.confidence, "model_id": c.model_id}
                for key, c in sorted(self._entries.items())
            }
        payload = json.dumps({"version": self.VERSION, "entries": entries}, indent=2) + "\n"
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_name(self.path.name + ".tmp")
        tmp.write_text(payload, encoding="utf-8")
        tmp.replace(self.path)


class Captioner:
    """Cache-aware captioning session over one backend.

    ``caption_keyframes`` issues up to ``parallelism`` concurrent exchanges;
    identical pixel content is captioned once per run (joiners count as cache
    hits), and failed transports are retried up to ``retries`` times before a
    keyframe is recorded as failed.
    """

    def __init__(self, config: CaptionerConfig | None = None, *, backend=None, cache=None):
        self.config = config or CaptionerConfig()
        self.backend = backend if backend is not None else make_backend(self.config)
        self.cache = cache if cache is not None else CaptionCache()
        self.calls = 0
        self.cache_hits = 0
        self._stats_lock = threading.Lock()

    def close(self) -> None:
        self.backend.close()

    def __enter__(self) -> "Captioner":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def _call_with_retries(self, frame: Frame) -> Caption:
        attempts = self.config.retries + 1
        last: CaptionerError | None = None
        for _ in range(attempts):
            try:
                return self.backend.caption(frame)
            except CaptionerError as exc:
                last = exc
                if not exc.retryable:
                    break
        assert last is not None
        raise last

    def caption_frame(self, frame: Frame) -> Caption:
        """Caption a single frame through the cache."""
        key = CaptionCache.key(self.backend.model_id, pixel_hash_hex(frame))
        cached = self.cache.get(key)
        if cached is not None:
            with self._stats_lock:
                self.cache_hits += 1
            return cached
        with self._stats_lock:
            self.calls += 1
        caption = self._call_with_retries(frame)
        self.cache.put(key, caption)
        return caption

    def caption_keyframes(self, items: Sequence[tuple[Keyframe, Frame]]) -> CaptionBatch:
        """Caption keyframes, at most one backend exchange per distinct pixel
        content; results are ordered by frame index regardless of completion
        order."""
        batch = CaptionBatch()
        if not items:
            return batch

        plan = [
            (kf, frame, CaptionCache.key(self.backend.model_id, pixel_hash_hex(frame)))
            for kf, frame in items
        ]
        inflight: dict[str, Future] = {}
        outcomes: list[tuple[Keyframe, Frame, Caption | None, str | None]] = []

        with ThreadPoolExecutor(max_workers=self.config.parallelism) as pool:
            pending: list[tuple[Keyframe, Frame, str]] = []
            for kf, frame, key in plan:
                cached = self.cache.get(key)
                if cached is not None:
                    batch.cache_hits += 1
                    outcomes.append((kf, frame, cached, None))
                    continue
                if key in inflight:
                    batch.cache_hits += 1  # joins the in-flight call
                else:
                    inflight[key] = pool.submit(self._call_with_retries, frame)
                    batch.calls += 1
                pending.append((kf, frame, key))
            for kf, frame, key in pending:
                try:
                    caption = inflight[key].result()
                except CaptionerError as exc:
                    outcomes.append((kf, frame, None, str(exc)))
                else:
                    self.cache.put(key, caption)
                    outcomes.append((kf, frame, caption, None))

        with self._stats_lock:
            self.calls += batch.calls
            self.cache_hits += batch.cache_hits
        for kf, frame, caption, error in sorted(outcomes, key=lambda o: o[0].frame_index):
            if caption is not None:
                batch.captioned.append(CaptionedKeyframe(kf, frame.time_s, caption))
            else:
                batch.failures.append(CaptionFailure(kf, frame.time_s, error or "unknown error"))
        return batch
