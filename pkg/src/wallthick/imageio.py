"""Minimal PGM (P2/P5) and PFM (Pf) codecs.

Only what the pipeline needs: 8-bit grayscale masks in, single-channel
float32 maps out.  PFM rows are stored bottom-to-top with a negative scale
(little-endian), per the usual convention.
"""
from __future__ import annotations

import numpy as np

from .errors import ParseError

_WS = b" \t\r\n\v\f"


class _HeaderReader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def _skip_ws_and_comments(self):
        data = self.data
        while self.pos < len(data):
            c = data[self.pos:self.pos + 1]
            if c in _WS and c:
                self.pos += 1
            elif c == b"#":
                while self.pos < len(data) and data[self.pos:self.pos + 1] not in (b"\n", b"\r"):
                    self.pos += 1
            else:
                break

    def token(self, what: str) -> bytes:
        self._skip_ws_and_comments()
        start = self.pos
        data = self.data
        while self.pos < len(data) and data[self.pos:self.pos + 1] not in _WS and data[self.pos:self.pos + 1] != b"#":
            self.pos += 1
        if self.pos == start:
            raise ParseError(f"missing {what}", start)
        return data[start:self.pos]

    def integer(self, what: str) -> int:
        start = self.pos
        tok = self.token(what)
        try:
            value = int(tok)
        except ValueError:
            raise ParseError(f"bad {what} {tok!r}", start) from None
        return value


def read_pgm(data: bytes) -> np.ndarray:
    """Decode a P5 or P2 payload into a uint8 array of shape (height, width)."""
    if len(data) < 2:
        raise ParseError("truncated header", len(data))
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ParseError(f"unsupported magic {magic!r}", 0)
    hdr = _HeaderReader(data, 2)
    width = hdr.integer("width")
    height = hdr.integer("height")
    maxval_at = hdr.pos
    maxval = hdr.integer("maxval")
    if width < 1 or height < 1:
        raise ParseError(f"bad dimensions {width}x{height}", 2)
    if maxval <= 0 or maxval > 255:
        raise ParseError(f"maxval {maxval} outside 1..255", maxval_at)

    n = width * height
    if magic == b"P5":
        if hdr.pos >= len(data) or data[hdr.pos:hdr.pos + 1] not in _WS:
            raise ParseError("expected whitespace after maxval", hdr.pos)
        start = hdr.pos + 1
        body = data[start:start + n]
        if len(body) < n:
            raise ParseError(f"truncated pixel data: expected {n} bytes, got {len(body)}", start + len(body))
        pixels = np.frombuffer(body, dtype=np.uint8)
    else:
        values = []
        for _ in range(n):
            at = hdr.pos
            try:
                values.append(hdr.integer("pixel"))
            except ParseError:
                raise ParseError(f"truncated pixel data: expected {n} values, got {len(values)}", at) from None
            if not 0 <= values[-1] <= maxval:
                raise ParseError(f"pixel value {values[-1]} exceeds maxval", at)
        pixels = np.asarray(values, dtype=np.uint8)
    return pixels.reshape(height, width).copy()


def write_pgm(image: np.ndarray) -> bytes:
    """Encode a 2-D uint8-compatible array as binary P5."""
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PGM images must be 2-D")
    if image.min(initial=0) < 0 or image.max(initial=0) > 255:
        raise ValueError("PGM pixel values must lie in 0..255")
    h, w = image.shape
    return f"P5\n{w} {h}\n255\n".encode("ascii") + image.astype(np.uint8).tobytes()


def read_pfm(data: bytes) -> np.ndarray:
    """Decode a single-channel PFM into a float32 array with row 0 at the top."""
    hdr = _HeaderReader(data, 0)
    magic = hdr.token("magic")
    if magic != b"Pf":
        raise ParseError(f"unsupported PFM magic {magic!r} (only 'Pf')", 0)
    width = hdr.integer("width")
    height = hdr.integer("height")
    scale_at = hdr.pos
    tok = hdr.token("scale")
    try:
        scale = float(tok)
    except ValueError:
        raise ParseError(f"bad scale {tok!r}", scale_at) from None
    if scale == 0:
        raise ParseError("scale must be nonzero", scale_at)
    if width < 1 or height < 1:
        raise ParseError(f"bad dimensions {width}x{height}", 0)
    if hdr.pos >= len(data) or data[hdr.pos:hdr.pos + 1] not in _WS:
        raise ParseError("expected whitespace after scale", hdr.pos)
    start = hdr.pos + 1
    n = width * height * 4
    body = data[start:start + n]
    if len(body) < n:
        raise ParseError(f"truncated float data: expected {n} bytes, got {len(body)}", start + len(body))
    dtype = "<f4" if scale < 0 else ">f4"
    img = np.frombuffer(body, dtype=dtype).reshape(height, width)
    return np.flipud(img).astype(np.float32)


def write_pfm(image: np.ndarray) -> bytes:
    image = np.asarray(image)
    if image.ndim != 2:
        raise ValueError("PFM maps must be 2-D")
    h, w = image.shape
    body = np.ascontiguousarray(np.flipud(image), dtype="<f4").tobytes()
    return f"Pf\n{w} {h}\n-1.0\n".encode("ascii") + body
