"""Binary PPM (P6, maxval 255) reading and writing.

The codec's only raster interchange format. Reads are lenient about header
whitespace and ``#`` comments; writes are canonical and byte-deterministic:
``P6\\n<width> <height>\\n255\\n`` followed by the raw interleaved samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class PpmError(Exception):
    """Base class for PPM parsing failures."""


class MalformedHeaderError(PpmError):
    """Missing P6 magic, non-numeric fields, or otherwise unparseable header."""


class TruncatedPayloadError(PpmError):
    """Fewer sample bytes than width*height*3."""


class UnsupportedMaxvalError(PpmError):
    """Any maxval other than 255."""


@dataclass(frozen=True)
class Image:
    """8-bit RGB raster. ``pixels`` has shape (height, width, 3), dtype uint8."""

    pixels: np.ndarray

    def __post_init__(self):
        p = self.pixels
        if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
            raise ValueError("pixels must be (H, W, 3) uint8")
        if p.shape[0] < 1 or p.shape[1] < 1:
            raise ValueError("empty image")
        p.setflags(write=False)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return 3

    def __eq__(self, other) -> bool:
        return isinstance(other, Image) and (
            self.pixels.shape == other.pixels.shape
            and np.array_equal(self.pixels, other.pixels)
        )


def _next_token(data: bytes, pos: int) -> tuple[bytes, int]:
    """Scan the next header token, skipping whitespace and # comments."""
    n = len(data)
    while pos < n:
        b = data[pos]
        if b in b" \t\r\n\x0b\x0c":
            pos += 1
        elif b == 0x23:  # '#' comment runs to end of line
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        else:
            break
    start = pos
    while pos < n and data[pos] not in b" \t\r\n\x0b\x0c":
        pos += 1
    if start == pos:
        raise MalformedHeaderError("unexpected end of header")
    return data[start:pos], pos


def read_ppm(data: bytes) -> Image:
    """Parse a binary PPM (P6) byte string into an Image.

    Raises MalformedHeaderError, UnsupportedMaxvalError, or
    TruncatedPayloadError; trailing bytes after the sample payload are
    ignored.
    """
    if len(data) < 2 or data[:2] != b"P6":
        raise MalformedHeaderError("not a P6 PPM file")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _next_token(data, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise MalformedHeaderError(f"non-numeric header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise MalformedHeaderError("non-positive dimensions")
    if maxval != 255:
        raise UnsupportedMaxvalError(f"maxval {maxval} not supported (need 255)")
    if pos >= len(data):
        raise TruncatedPayloadError("no sample data")
    pos += 1  # exactly one whitespace byte separates maxval from samples
    need = width * height * 3
    payload = data[pos : pos + need]
    if len(payload) < need:
        raise TruncatedPayloadError(
            f"need {need} sample bytes, found {len(payload)}"
        )
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return Image(pixels.copy())


def write_ppm(img: Image) -> bytes:
    """Serialize to the canonical P6 form (single whitespace separators)."""
    header = f"P6\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()
