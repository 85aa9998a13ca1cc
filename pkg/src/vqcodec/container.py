"""Versioned bitstream container for one coded image.

Wire layout, little-endian, fixed field order (30-byte header):

    offset  size  field
    0       4     magic "VQIS"
    4       1     version (0x01)
    5       4     true_height (u32)  pre-padding pixel rows
    9       4     true_width  (u32)  pre-padding pixel columns
    13      1     patch_size  (u8)   always 16
    14      2     n_z         (u16)  latent dimension
    16      8     codebook_id (u64)  content hash of the codebook
    24      2     K           (u16)  codebook size / index alphabet
    26      4     payload_len (u32)
    30      ...   payload     entropy-coded index bytes
    30+L    4     crc32       (u32)  IEEE CRC over header+payload

The codebook itself travels out of band, referenced by id; streams carry
only what the rate accounting counts (see docs/wire_format.md for a
hex-annotated example).
"""
from __future__ import annotations

import struct
import zlib
from dataclasses import dataclass

from .entropy import CodedPayload

MAGIC = b"VQIS"
VERSION = 1
PATCH = 16

_HEADER = struct.Struct("<4sBIIBHQHI")
HEADER_SIZE = _HEADER.size  # 30
CRC_SIZE = 4


class ContainerError(Exception):
    pass


class BadMagicError(ContainerError):
    pass


class UnsupportedVersionError(ContainerError):
    pass


class LengthMismatchError(ContainerError):
    pass


class CrcMismatchError(ContainerError):
    pass


class HeaderFieldError(ContainerError):
    """A header field is semantically invalid (zero dims, patch size != 16...)."""


class FieldOverflowError(ContainerError):
    """A field value does not fit its wire width."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


@dataclass(frozen=True)
class StreamHeader:
    true_height: int
    true_width: int
    n_z: int
    codebook_id: int
    k: int
    payload_len: int
    patch_size: int = PATCH
    version: int = VERSION

    @property
    def grid_h(self) -> int:
        return _ceil_div(self.true_height, self.patch_size)

    @property
    def grid_w(self) -> int:
        return _ceil_div(self.true_width, self.patch_size)

    @property
    def symbol_count(self) -> int:
        return self.grid_h * self.grid_w


def _check_range(name: str, value: int, bits: int) -> None:
    if not 0 <= value < (1 << bits):
        raise FieldOverflowError(f"{name}={value} does not fit u{bits}")


def pack(
    true_height: int,
    true_width: int,
    n_z: int,
    codebook_id: int,
    k: int,
    payload: CodedPayload,
) -> bytes:
    """Assemble header + payload + CRC32 into the wire bytes."""
    if true_height < 1 or true_width < 1:
        raise HeaderFieldError("image dimensions must be positive")
    _check_range("true_height", true_height, 32)
    _check_range("true_width", true_width, 32)
    _check_range("n_z", n_z, 16)
    _check_range("codebook_id", codebook_id, 64)
    _check_range("K", k, 16)
    _check_range("payload_len", len(payload.data), 32)
    if payload.alphabet_size != k:
        raise HeaderFieldError(
            f"payload alphabet {payload.alphabet_size} != header K {k}"
        )
    expect = _ceil_div(true_height, PATCH) * _ceil_div(true_width, PATCH)
    if payload.symbol_count != expect:
        raise HeaderFieldError(
            f"payload holds {payload.symbol_count} symbols, geometry needs {expect}"
        )
    head = _HEADER.pack(
        MAGIC, VERSION, true_height, true_width, PATCH, n_z,
        codebook_id, k, len(payload.data),
    )
    body = head + payload.data
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def unpack(data: bytes) -> tuple[StreamHeader, CodedPayload]:
    """Parse and validate wire bytes (magic, version, lengths, CRC)."""
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError("not a VQIS stream")
    if len(data) < HEADER_SIZE + CRC_SIZE:
        raise LengthMismatchError("stream shorter than header")
    magic, version, th, tw, patch, n_z, cb_id, k, payload_len = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersionError(f"version {version} not supported")
    if len(data) != HEADER_SIZE + payload_len + CRC_SIZE:
        raise LengthMismatchError(
            f"payload_len {payload_len} implies {HEADER_SIZE + payload_len + CRC_SIZE}"
            f" bytes, stream has {len(data)}"
        )
    crc = struct.unpack_from("<I", data, HEADER_SIZE + payload_len)[0]
    if crc != (zlib.crc32(data[: HEADER_SIZE + payload_len]) & 0xFFFFFFFF):
        raise CrcMismatchError("CRC32 check failed")
    if patch != PATCH:
        raise HeaderFieldError(f"patch size {patch} not supported")
    if th < 1 or tw < 1 or k < 1 or n_z < 1:
        raise HeaderFieldError("zero-valued geometry field")
    header = StreamHeader(th, tw, n_z, cb_id, k, payload_len)
    payload = CodedPayload(
        data[HEADER_SIZE : HEADER_SIZE + payload_len],
        header.symbol_count,
        k,
    )
    return header, payload
