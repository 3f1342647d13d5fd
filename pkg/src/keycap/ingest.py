"""Frame ingestion: decode Y4M streams, raw RGB24 streams, and numbered image
directories into a uniform sequence of timestamped RGB24 frames.

Compressed containers (MP4 and friends) are deliberately out of scope; keep the
frame contract exact by transcoding with an external tool first, e.g.::

    ffmpeg -i input.mp4 -pix_fmt yuv420p input.y4m

Supported sources:

* ``y4m``       YUV4MPEG2 stream (file or stdin). Frame rate and geometry come
                from the stream header. 4:2:0 / 4:2:2 / 4:4:4 / mono
                colorspaces are decoded; chroma is upsampled nearest-neighbor
                and converted to RGB with full-range BT.601 coefficients.
* ``rgb24``     Concatenated width*height*3 byte rasters, row-major, one per
                frame. Geometry and frame rate must be supplied by the caller.
* ``frame-dir`` Directory of PNG/JPEG files, ordered lexicographically.
                Numeric filenames must be zero-padded to a common width so the
                lexicographic order equals the numeric order.
"""

from __future__ import annotations

import os
import re
import sys
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np
from PIL import Image

SOURCE_KINDS = ("y4m", "rgb24", "frame-dir")

STDIN = "-"

_IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class IngestError(RuntimeError):
    """Raised for malformed, truncated, or otherwise unreadable frame sources."""


@dataclass(frozen=True)
class FrameSource:
    """Where frames come from and the metadata needed to decode them.

    ``fps`` is required for ``rgb24`` and ``frame-dir`` sources; for ``y4m``
    it is parsed from the stream header. ``width``/``height`` are required for
    ``rgb24`` only.
    """

    kind: str
    locator: str | Path
    fps: Fraction | None = None
    width: int | None = None
    height: int | None = None

    def __post_init__(self) -> None:
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind: {self.kind!r}")
        if self.fps is not None and (self.fps.numerator <= 0 or self.fps.denominator <= 0):
            raise ValueError(f"fps must be positive, got {self.fps}")
        if self.kind in ("rgb24", "frame-dir") and self.fps is None:
            raise ValueError(f"{self.kind} source requires fps")
        if self.kind == "rgb24":
            if not self.width or not self.height or self.width <= 0 or self.height <= 0:
                raise ValueError("rgb24 source requires positive width and height")
        if self.kind == "frame-dir" and str(self.locator) == STDIN:
            raise ValueError("frame-dir source cannot read from stdin")


@dataclass(eq=False)
class Frame:
    """One decoded frame: RGB24 raster plus its index and timestamp."""

    index: int
    time_s: float
    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8, row-major

    def __post_init__(self) -> None:
        if self.pixels.shape != (self.height, self.width, 3) or self.pixels.dtype != np.uint8:
            raise ValueError(
                f"frame {self.index}: pixel buffer {self.pixels.shape}/{self.pixels.dtype} "
                f"does not match {self.height}x{self.width}x3 uint8"
            )

    def tobytes(self) -> bytes:
        """Raw row-major RGB24 buffer (width*height*3 bytes)."""
        return self.pixels.tobytes()


def _frame_time(index: int, fps: Fraction) -> float:
    return index * fps.denominator / fps.numerator


def _open_input(locator: str | Path) -> tuple[BinaryIO, bool]:
    """Open a byte source; returns (handle, caller_should_close)."""
    if str(locator) == STDIN:
        return sys.stdin.buffer, False
    try:
        return open(locator, "rb"), True
    except OSError as exc:
        raise IngestError(f"cannot open input {locator}: {exc}") from exc


# -- Y4M ----------------------------------------------------------------------

_Y4M_MAGIC = b"YUV4MPEG2"

# Chroma plane geometry per colorspace: (x subsampling, y subsampling).
_CHROMA_SUBSAMPLING = {
    "420": (2, 2),
    "422": (2, 1),
    "444": (1, 1),
}


@dataclass
class _Y4MHeader:
    width: int
    height: int
    fps: Fraction
    colorspace: str  # "420", "422", "444", or "mono"


def _read_line(fh: BinaryIO, what: str) -> bytes:
    """Read bytes up to (not including) the next LF."""
    chunks = bytearray()
    while True:
        b = fh.read(1)
        if not b:
            if chunks:
                raise IngestError(f"truncated {what}")
            return b""
        if b == b"\n":
            return bytes(chunks)
        chunks += b
        if len(chunks) > 4096:
            raise IngestError(f"unterminated {what}")


def _parse_y4m_header(fh: BinaryIO) -> _Y4MHeader:
    line = _read_line(fh, "stream header")
    if not line.startswith(_Y4M_MAGIC):
        raise IngestError("malformed header: missing YUV4MPEG2 magic")
    width = height = 0
    fps: Fraction | None = None
    colorspace = "420"
    for token in line.split(b" ")[1:]:
        if not token:
            continue
        tag, value = chr(token[0]), token[1:].decode("ascii", "replace")
        try:
            if tag == "W":
                width = int(value)
            elif tag == "H":
                height = int(value)
            elif tag == "F":
                num, den = value.split(":")
                fps = Fraction(int(num), int(den))
            elif tag == "C":
                colorspace = value
        except (ValueError, ZeroDivisionError) as exc:
            raise IngestError(f"malformed header parameter {tag}{value}") from exc
        # I (interlacing), A (aspect), and X (extensions) are ignored.
    if width <= 0 or height <= 0:
        raise IngestError("malformed header: missing or invalid W/H")
    if fps is None or fps <= 0:
        raise IngestError("malformed header: missing or invalid F rate")
    if colorspace.startswith("420"):
        colorspace = "420"  # 420 siting variants share one plane layout
    elif colorspace not in ("422", "444", "mono"):
        raise IngestError(f"unsupported colorspace C{colorspace}")
    return _Y4MHeader(width, height, fps, colorspace)


def _y4m_payload_size(header: _Y4MHeader) -> int:
    luma = header.width * header.height
    if header.colorspace == "mono":
        return luma
    sx, sy = _CHROMA_SUBSAMPLING[header.colorspace]
    chroma = -(-header.width // sx) * (-(-header.height // sy))
    return luma + 2 * chroma


def _yuv_to_rgb(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Full-range BT.601 YCbCr -> RGB24, rounded to nearest and clipped."""
    yf = y.astype(np.float64)
    uf = u.astype(np.float64) - 128.0
    vf = v.astype(np.float64) - 128.0
    rgb = np.stack(
        (
            yf + 1.402 * vf,
            yf - 0.344136 * uf - 0.714136 * vf,
            yf + 1.772 * uf,
        ),
        axis=-1,
    )
    return np.clip(np.rint(rgb), 0.0, 255.0).astype(np.uint8)


def _decode_y4m_payload(payload: bytes, header: _Y4MHeader) -> np.ndarray:
    w, h = header.width, header.height
    luma = w * h
    y = np.frombuffer(payload, dtype=np.uint8, count=luma).reshape(h, w)
    if header.colorspace == "mono":
        return np.repeat(y[:, :, np.newaxis], 3, axis=2)
    sx, sy = _CHROMA_SUBSAMPLING[header.colorspace]
    cw, ch = -(-w // sx), -(-h // sy)
    plane = cw * ch
    u = np.frombuffer(payload, dtype=np.uint8, count=plane, offset=luma).reshape(ch, cw)
    v = np.frombuffer(payload, dtype=np.uint8, count=plane, offset=luma + plane).reshape(ch, cw)
    if sy > 1:
        u = np.repeat(u, sy, axis=0)
        v = np.repeat(v, sy, axis=0)
    if sx > 1:
        u = np.repeat(u, sx, axis=1)
        v = np.repeat(v, sx, axis=1)
    # Nearest-neighbor upsample, cropped back to the luma geometry.
    return _yuv_to_rgb(y, u[:h, :w], v[:h, :w])


def _iter_y4m_payloads(fh: BinaryIO, header: _Y4MHeader) -> Iterator[tuple[int, bytes]]:
    """Yield (byte offset, payload) per frame; offset is -1 if not seekable."""
    size = _y4m_payload_size(header)
    seekable = fh.seekable()
    index = 0
    while True:
        marker = _read_line(fh, f"frame marker {index}")
        if marker == b"":
            return
        if not marker.startswith(b"FRAME"):
            raise IngestError(f"malformed frame marker at frame {index}")
        offset = fh.tell() if seekable else -1
        payload = fh.read(size)
        if len(payload) < size:
            raise IngestError(f"truncated frame payload at frame {index}")
        yield offset, payload
        index += 1


# -- frame-dir ----------------------------------------------------------------


def _list_frame_files(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise IngestError(f"frame directory not found: {directory}")
    files = sorted(
        p for p in directory.iterdir() if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
    )
    if not files:
        raise IngestError(f"zero frames: no PNG/JPEG files in {directory}")
    # Zero-padding check: differing digit-run widths would silently misorder
    # under lexicographic sort (frame_10 before frame_9).
    digit_widths = {len(run) for p in files for run in re.findall(r"\d+", p.stem)}
    if len(digit_widths) > 1:
        raise IngestError(
            f"non-zero-padded frame numbering in {directory}; "
            "pad indices to a common width"
        )
    return files


def _load_image(path: Path, index: int) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot decode frame {index} ({path.name}): {exc}") from exc


# -- public streaming API -----------------------------------------------------


def iter_frames(source: FrameSource) -> Iterator[Frame]:
    """Yield frames in order, index 0..N-1, timestamped at index/fps.

    Decoding is deterministic: re-ingesting the same bytes yields identical
    pixel buffers. Raises :class:`IngestError` on malformed headers, truncated
    payloads (naming the incomplete frame), mixed image dimensions, or a
    source with zero frames.
    """
    with FrameAccess(source) as access:
        yield from access.stream()


class FrameAccess:
    """Streaming decode plus random re-reads of already-streamed frames.

    ``stream()`` performs the single sequential pass. ``get(i)`` then re-reads
    frame ``i`` without keeping the whole video in memory: seekable files are
    re-decoded in place, frame directories re-open the file, and pipes are
    transparently spooled to a temporary raw-RGB24 file during the pass.
    """

    def __init__(self, source: FrameSource):
        self.source = source
        self._fh: BinaryIO | None = None
        self._close_fh = False
        self._y4m_header: _Y4MHeader | None = None
        self._y4m_offsets: list[int] = []
        self._files: list[Path] = []
        self._spool_path: Path | None = None
        self._spool_write: BinaryIO | None = None
        self._reader: BinaryIO | None = None
        self._streamed = False
        self.n_frames = 0
        self.width = source.width or 0
        self.height = source.height or 0
        self.fps = source.fps or Fraction(0)

        kind = source.kind
        if kind == "frame-dir":
            self._files = _list_frame_files(Path(source.locator))
        else:
            self._fh, self._close_fh = _open_input(source.locator)
            if kind == "y4m":
                self._y4m_header = _parse_y4m_header(self._fh)
                self.width = self._y4m_header.width
                self.height = self._y4m_header.height
                self.fps = self._y4m_header.fps
            if not self._fh.seekable():
                tmp = tempfile.NamedTemporaryFile(prefix="keycap_spool_", delete=False)
                self._spool_path = Path(tmp.name)
                self._spool_write = tmp

    def __enter__(self) -> "FrameAccess":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    def close(self) -> None:
        for fh in (self._spool_write, self._reader):
            if fh is not None:
                fh.close()
        self._spool_write = self._reader = None
        if self._fh is not None and self._close_fh:
            self._fh.close()
        self._fh = None
        if self._spool_path is not None:
            try:
                os.unlink(self._spool_path)
            except OSError:
                pass
            self._spool_path = None

    @property
    def frame_period_s(self) -> float:
        return self.fps.denominator / self.fps.numerator

    def stream(self) -> Iterator[Frame]:
        """Single-use sequential pass over all frames."""
        if self._streamed:
            raise RuntimeError("stream() may only be consumed once")
        self._streamed = True
        count = 0
        for frame in self._decode_all():
            if self._spool_write is not None:
                self._spool_write.write(frame.tobytes())
            count += 1
            yield frame
        if count == 0:
            raise IngestError(f"zero frames in {self.source.locator}")
        self.n_frames = count
        if self._spool_write is not None:
            self._spool_write.flush()

    def _decode_all(self) -> Iterator[Frame]:
        src = self.source
        if src.kind == "frame-dir":
            for i, path in enumerate(self._files):
                pixels = _load_image(path, i)
                h, w = pixels.shape[:2]
                if i == 0:
                    self.width, self.height = w, h
                elif (w, h) != (self.width, self.height):
                    raise IngestError(
                        f"mixed image dimensions: frame {i} is {w}x{h}, "
                        f"expected {self.width}x{self.height}"
                    )
                yield self._make_frame(i, pixels)
        elif src.kind == "y4m":
            assert self._fh is not None and self._y4m_header is not None
            for i, (offset, payload) in enumerate(_iter_y4m_payloads(self._fh, self._y4m_header)):
                self._y4m_offsets.append(offset)
                yield self._make_frame(i, _decode_y4m_payload(payload, self._y4m_header))
        else:  # rgb24
            assert self._fh is not None
            size = self.width * self.height * 3
            i = 0
            while True:
                payload = self._fh.read(size)
                if not payload:
                    return
                if len(payload) < size:
                    raise IngestError(f"truncated frame payload at frame {i}")
                pixels = np.frombuffer(payload, dtype=np.uint8).reshape(self.height, self.width, 3)
                yield self._make_frame(i, pixels)
                i += 1

    def _make_frame(self, index: int, pixels: np.ndarray) -> Frame:
        return Frame(
            index=index,
            time_s=_frame_time(index, self.fps),
            width=self.width,
            height=self.height,
            pixels=pixels,
        )

    def get(self, index: int) -> Frame:
        """Re-read one frame by index after the streaming pass."""
        if not self._streamed:
            raise RuntimeError("get() requires the streaming pass to run first")
        if not 0 <= index < self.n_frames:
            raise IndexError(f"frame index {index} out of range 0..{self.n_frames - 1}")
        if self.source.kind == "frame-dir":
            return self._make_frame(index, _load_image(self._files[index], index))
        if self._spool_path is not None:
            return self._make_frame(index, self._read_raw(self._spool_reader(), index))
        if self.source.kind == "y4m":
            assert self._fh is not None and self._y4m_header is not None
            self._fh.seek(self._y4m_offsets[index])
            payload = self._fh.read(_y4m_payload_size(self._y4m_header))
            return self._make_frame(index, _decode_y4m_payload(payload, self._y4m_header))
        assert self._fh is not None
        return self._make_frame(index, self._read_raw(self._fh, index))

    def _spool_reader(self) -> BinaryIO:
        if self._reader is None:
            assert self._spool_path is not None
            self._reader = open(self._spool_path, "rb")
        return self._reader

    def _read_raw(self, fh: BinaryIO, index: int) -> np.ndarray:
        size = self.width * self.height * 3
        fh.seek(index * size)
        payload = fh.read(size)
        if len(payload) < size:
            raise IngestError(f"truncated frame payload at frame {index}")
        return np.frombuffer(payload, dtype=np.uint8).reshape(self.height, self.width, 3)
