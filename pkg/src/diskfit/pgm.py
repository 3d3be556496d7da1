"""Minimal PGM (P2 ASCII / P5 binary) reader and writer."""

from __future__ import annotations

import os
import re

import numpy as np

from .errors import PGMError, PGMHeaderError, PGMTruncatedError, PGMUnsupportedError
from .imagepipe import GrayImage


def _tokens(data: bytes, start: int, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping ``#`` comments."""
    out = []
    i = start
    n = len(data)
    while len(out) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i >= n:
            raise PGMHeaderError("unexpected end of file in header")
        if data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        out.append(data[i:j])
        i = j
    return out, i


def _int(tok: bytes, what: str) -> int:
    try:
        v = int(tok)
    except ValueError:
        raise PGMHeaderError(f"bad {what} {tok!r}") from None
    return v


def parse_pgm(data: bytes) -> GrayImage:
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise PGMUnsupportedError(f"unsupported magic {magic!r}; only P2 and P5 are read")
    (w, h, maxval), pos = _tokens(data, 2, 3)
    width, height, maxval = _int(w, "width"), _int(h, "height"), _int(maxval, "maxval")
    if width <= 0 or height <= 0:
        raise PGMHeaderError(f"bad dimensions {width}x{height}")
    if not 0 < maxval <= 65535:
        raise PGMHeaderError(f"maxval {maxval} outside 1..65535")
    count = width * height

    if magic == b"P5":
        # exactly one whitespace byte separates the header from the raster
        if pos >= len(data) or not data[pos : pos + 1].isspace():
            raise PGMHeaderError("missing whitespace after header")
        pos += 1
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = count * dtype.itemsize
        if len(data) - pos < need:
            raise PGMTruncatedError(f"expected {need} raster bytes, found {len(data) - pos}")
        pixels = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    else:
        try:
            body = re.sub(rb"#[^\r\n]*", b" ", data[pos:])
            pixels = np.array(body.split(), dtype=np.int64)
        except ValueError:
            raise PGMHeaderError("non-integer sample in ASCII raster") from None
        if pixels.size < count:
            raise PGMTruncatedError(f"expected {count} samples, found {pixels.size}")
        pixels = pixels[:count]
        if np.any(pixels < 0) or np.any(pixels > maxval):
            raise PGMHeaderError("sample outside 0..maxval")
    return GrayImage(pixels.reshape(height, width).astype(np.float64))


def read_pgm(path) -> GrayImage:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise PGMError(f"cannot read {path}: {exc}") from exc
    return parse_pgm(data)


def encode_pgm(image: GrayImage, binary: bool = True) -> bytes:
    """Encode as P5 (or P2 when ``binary`` is false); pixels are rounded to integers."""
    px = np.rint(image.pixels).astype(np.int64)
    top = int(px.max()) if px.size else 0
    if top > 65535:
        raise PGMError(f"pixel value {top} exceeds the PGM limit 65535")
    maxval = 255 if top <= 255 else 65535
    header = f"{'P5' if binary else 'P2'}\n{image.width} {image.height}\n{maxval}\n".encode("ascii")
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        return header + px.astype(dtype).tobytes()
    rows = "\n".join(" ".join(map(str, row)) for row in px)
    return header + rows.encode("ascii") + b"\n"


def write_pgm(image: GrayImage, path, binary: bool = True) -> None:
    payload = encode_pgm(image, binary)
    tmp = f"{path}.tmp"
    try:
        with open(tmp, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise PGMError(f"cannot write {path}: {exc}") from exc
