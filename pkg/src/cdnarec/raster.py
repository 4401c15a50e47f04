"""Grayscale rasters plus PGM/PNG input-output.

A :class:`Raster` holds intensities in [0, 1]; a :class:`FieldMap` holds the
unbounded responses produced by filtering.  Both wrap a read-only
``(height, width)`` float64 array indexed ``data[y, x]``.
"""

from __future__ import annotations

import enum
import io
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from .errors import MalformedHeaderError, MultiChannelError, ParseError, TruncatedPayloadError


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("raster dimensions must be at least 1x1")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class FieldMap:
    data: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    def __eq__(self, other):
        return (type(self) is type(other)
                and self.data.shape == other.data.shape
                and bool(np.array_equal(self.data, other.data)))

    def __repr__(self):
        return f"{type(self).__name__}({self.width}x{self.height})"


@dataclass(frozen=True, eq=False, repr=False)
class Raster(FieldMap):
    """Grayscale image with every intensity in [0, 1]."""

    def __post_init__(self):
        super().__post_init__()
        d = self.data
        if not np.all(np.isfinite(d)) or d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("raster intensities must be finite and lie in [0, 1]")


class RasterFormat(enum.Enum):
    PGM_P2 = "P2"
    PGM_P5 = "P5"
    PNG = "PNG"


_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"

Source = Union[bytes, bytearray, BinaryIO, str, Path]


def _read_bytes(source: Source) -> bytes:
    if isinstance(source, (bytes, bytearray)):
        return bytes(source)
    if isinstance(source, (str, Path)):
        return Path(source).read_bytes()
    return source.read()


def sniff_format(blob: bytes) -> RasterFormat:
    if blob.startswith(_PNG_MAGIC):
        return RasterFormat.PNG
    magic = blob[:2]
    if magic == b"P2":
        return RasterFormat.PGM_P2
    if magic == b"P5":
        return RasterFormat.PGM_P5
    if magic in (b"P3", b"P6"):
        raise MultiChannelError(f"{magic.decode()} is a colour PNM format")
    raise MalformedHeaderError("unrecognised image magic number")


def _pgm_header(blob: bytes, count: int):
    """Return the first ``count`` whitespace-separated header tokens and the
    offset just past the last one.  ``#`` comments run to end of line."""
    tokens = []
    pos = 0
    n = len(blob)
    while len(tokens) < count:
        while pos < n and blob[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise MalformedHeaderError("header ended early")
        if blob[pos:pos + 1] == b"#":
            while pos < n and blob[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not blob[pos:pos + 1].isspace() and blob[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(blob[start:pos])
    return tokens, pos


def _parse_pgm(blob: bytes, fmt: RasterFormat) -> Raster:
    tokens, pos = _pgm_header(blob, 4)
    magic = tokens[0].decode("ascii", "replace")
    if magic in ("P3", "P6"):
        raise MultiChannelError(f"{magic} is a colour PNM format")
    if magic != fmt.value:
        raise MalformedHeaderError(f"expected {fmt.value} magic, found {magic!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise MalformedHeaderError("width, height and maxval must be integers") from None
    if width < 1 or height < 1:
        raise MalformedHeaderError(f"bad dimensions {width}x{height}")
    if not 1 <= maxval <= 65535:
        raise MalformedHeaderError(f"maxval {maxval} outside 1..65535")
    n = width * height

    if fmt is RasterFormat.PGM_P2:
        body = blob[pos:].split()
        if len(body) < n:
            raise TruncatedPayloadError(f"expected {n} samples, found {len(body)}")
        try:
            samples = np.array([int(t) for t in body[:n]], dtype=np.int64)
        except ValueError:
            raise ParseError("non-integer sample in P2 payload") from None
    else:
        # exactly one whitespace byte separates maxval from the binary payload
        if pos >= len(blob) or not blob[pos:pos + 1].isspace():
            raise TruncatedPayloadError("missing payload")
        payload = blob[pos + 1:]
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = n * dtype.itemsize
        if len(payload) < need:
            raise TruncatedPayloadError(f"expected {need} payload bytes, found {len(payload)}")
        samples = np.frombuffer(payload[:need], dtype=dtype).astype(np.int64)

    if samples.min() < 0 or samples.max() > maxval:
        raise ParseError(f"sample outside 0..{maxval}")
    return Raster(samples.reshape(height, width) / float(maxval))


def _parse_png(blob: bytes) -> Raster:
    from PIL import Image, UnidentifiedImageError

    try:
        img = Image.open(io.BytesIO(blob))
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError) as exc:
        raise ParseError(f"unreadable PNG: {exc}") from None
    if img.mode in ("RGB", "RGBA", "LA", "P", "CMYK", "YCbCr", "PA", "La"):
        raise MultiChannelError(f"PNG mode {img.mode} is not single-channel grayscale")
    if img.mode == "1":
        img = img.convert("L")
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise MultiChannelError("PNG has more than one channel")
    if img.mode == "L":
        maxval = 255.0
    elif img.mode.startswith("I"):
        maxval = 65535.0
    else:
        raise ParseError(f"unsupported PNG mode {img.mode}")
    return Raster(arr.astype(np.float64) / maxval)


def load_raster(source: Source, fmt: RasterFormat | None = None) -> Raster:
    """Parse a PGM (P2/P5) or grayscale PNG into a :class:`Raster`.

    Samples are divided by the file's maximum value.  When ``fmt`` is omitted
    it is detected from the magic bytes.
    """
    blob = _read_bytes(source)
    if fmt is None:
        fmt = sniff_format(blob)
    if fmt is RasterFormat.PNG:
        if not blob.startswith(_PNG_MAGIC):
            if blob[:2] in (b"P3", b"P6"):
                raise MultiChannelError("colour PNM data")
            raise MalformedHeaderError("missing PNG signature")
        return _parse_png(blob)
    return _parse_pgm(blob, fmt)


def to_pgm_bytes(r: FieldMap, fmt: RasterFormat = RasterFormat.PGM_P5) -> bytes:
    """Encode at maxval 255, rounding half to even."""
    if fmt is RasterFormat.PNG:
        raise ValueError("PNG output is not supported")
    samples = np.rint(np.clip(r.data, 0.0, 1.0) * 255.0).astype(np.uint8)
    header = f"{fmt.value}\n{r.width} {r.height}\n255\n".encode("ascii")
    if fmt is RasterFormat.PGM_P5:
        return header + samples.tobytes()
    lines = [" ".join(str(int(v)) for v in row) for row in samples]
    return header + ("\n".join(lines) + "\n").encode("ascii")


def save_pgm(r: FieldMap, path, fmt: RasterFormat = RasterFormat.PGM_P5) -> None:
    Path(path).write_bytes(to_pgm_bytes(r, fmt))


def normalize(r: FieldMap) -> Raster:
    """Affine min-max stretch onto [0, 1]; a constant input maps to zeros."""
    d = r.data
    lo, hi = float(d.min()), float(d.max())
    if hi <= lo:
        return Raster(np.zeros_like(d))
    out = (d - lo) / (hi - lo)
    return Raster(np.clip(out, 0.0, 1.0))


def resize_bilinear(r: Raster, out_w: int, out_h: int) -> Raster:
    """Corner-aligned bilinear resampling.

    Output sample ``i`` reads source coordinate ``i * (n_in - 1) / (n_out - 1)``
    so both endpoints are reproduced exactly.  A single output sample reads
    the first source sample.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target size must be positive, got {out_w}x{out_h}")
    if (out_w, out_h) == (r.width, r.height):
        return r

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    y0, y1, fy = axis(r.height, out_h)
    x0, x1, fx = axis(r.width, out_w)
    d = r.data
    top = d[y0][:, x0] * (1 - fx) + d[y0][:, x1] * fx
    bottom = d[y1][:, x0] * (1 - fx) + d[y1][:, x1] * fx
    out = top * (1 - fy)[:, None] + bottom * fy[:, None]
    return Raster(np.clip(out, 0.0, 1.0))


def transpose(r: FieldMap) -> FieldMap:
    return type(r)(r.data.T)
