"""Lossless adaptive arithmetic coding of index sequences.

The coder is a 32-bit range coder with byte-wise renormalization and carry
propagation into already-emitted bytes. Output bytes are the most
significant byte of the coder state first (big-endian), with no padding
beyond the final 4-byte flush of the low register. The probability model
is adaptive order-0: all symbol counts start at 1, the coded symbol's
count is raised by 32 after each symbol, and all counts are halved
(rounding up, so they stay >= 1) whenever the total reaches 2^16. The
total therefore never approaches the 2^24 renormalization threshold, which
keeps every symbol representable in the coder's range.

Byte-stream contract, bit-exactly:

  state     low (32-bit with pending carry), range (32-bit, init 0xFFFFFFFF)
  encode    r = range // total
            low += r * cum_lo;  carry into emitted bytes if low >= 2^32
            range = r * (cum_hi - cum_lo), except the last symbol
            (cum_hi == total) absorbs the division remainder:
            range = range - r * cum_lo
  renorm    while range < 2^24: emit byte (low >> 24); low = low << 8
            (mod 2^32); range <<= 8
  flush     emit the 4 bytes of low, MSB first

The decoder mirrors this exactly, tracking code - low instead of low, so
an intact payload decodes to the original sequence and consumes every
byte. Model updates happen after each coded/decoded symbol, keeping both
sides in lockstep.
"""
from __future__ import annotations

from dataclasses import dataclass

_MASK32 = 0xFFFFFFFF
_TOP = 1 << 24

DEFAULT_INCREMENT = 32
DEFAULT_RESCALE = 1 << 16


class EntropyError(Exception):
    pass


class SymbolRangeError(EntropyError):
    pass


class PayloadTruncatedError(EntropyError):
    """Payload bytes ran out before symbol_count symbols were decoded."""


class PayloadDesyncError(EntropyError):
    """Payload length disagrees with the bytes the coder consumed."""


@dataclass(frozen=True)
class CodedPayload:
    """Entropy-coded bytes plus the side information needed to decode them."""

    data: bytes
    symbol_count: int
    alphabet_size: int


class FrequencyModel:
    """Adaptive order-0 counts with Fenwick-tree cumulative lookups."""

    def __init__(self, alphabet_size: int, increment: int = DEFAULT_INCREMENT,
                 rescale_threshold: int = DEFAULT_RESCALE):
        if alphabet_size < 2:
            raise EntropyError("alphabet size must be >= 2")
        if rescale_threshold >= _TOP:
            raise EntropyError("rescale threshold must stay below 2^24")
        self.n = alphabet_size
        self.increment = increment
        self.rescale_threshold = rescale_threshold
        self.counts = [1] * alphabet_size
        self.total = alphabet_size
        self._rebuild()

    def _rebuild(self) -> None:
        n = self.n
        tree = [0] * (n + 1)
        counts = self.counts
        for i in range(1, n + 1):
            tree[i] += counts[i - 1]
            j = i + (i & -i)
            if j <= n:
                tree[j] += tree[i]
        self._tree = tree
        # highest power of two <= n, for the find() descent
        self._topbit = 1 << (n.bit_length() - 1)

    def cum_lo(self, symbol: int) -> int:
        acc = 0
        i = symbol
        tree = self._tree
        while i:
            acc += tree[i]
            i -= i & -i
        return acc

    def cum_range(self, symbol: int) -> tuple[int, int]:
        lo = self.cum_lo(symbol)
        return lo, lo + self.counts[symbol]

    def find(self, value: int) -> int:
        """The symbol whose cumulative interval contains value."""
        pos = 0
        bit = self._topbit
        n = self.n
        tree = self._tree
        while bit:
            nxt = pos + bit
            if nxt <= n and tree[nxt] <= value:
                pos = nxt
                value -= tree[nxt]
            bit >>= 1
        return pos

    def update(self, symbol: int) -> None:
        inc = self.increment
        self.counts[symbol] += inc
        self.total += inc
        i = symbol + 1
        tree = self._tree
        n = self.n
        while i <= n:
            tree[i] += inc
            i += i & -i
        if self.total >= self.rescale_threshold:
            counts = self.counts
            self.counts = [(c + 1) >> 1 for c in counts]
            self.total = sum(self.counts)
            self._rebuild()


class RangeEncoder:
    def __init__(self):
        self._low = 0
        self._range = _MASK32
        self._buf = bytearray()

    def encode(self, cum_lo: int, cum_hi: int, total: int) -> None:
        r = self._range // total
        self._low += r * cum_lo
        if cum_hi == total:
            self._range -= r * cum_lo
        else:
            self._range = r * (cum_hi - cum_lo)
        if self._low > _MASK32:
            # propagate the carry into already-emitted bytes
            buf = self._buf
            i = len(buf) - 1
            while buf[i] == 0xFF:
                buf[i] = 0
                i -= 1
            buf[i] += 1
            self._low &= _MASK32
        while self._range < _TOP:
            self._buf.append(self._low >> 24)
            self._low = (self._low << 8) & _MASK32
            self._range <<= 8

    def finish(self) -> bytes:
        for _ in range(4):
            self._buf.append(self._low >> 24)
            self._low = (self._low << 8) & _MASK32
        return bytes(self._buf)


class RangeDecoder:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0
        self._range = _MASK32
        self._r = 1
        code = 0
        for _ in range(4):
            code = (code << 8) | self._next_byte()
        self._code = code

    def _next_byte(self) -> int:
        pos = self._pos
        if pos >= len(self._data):
            raise PayloadTruncatedError("payload exhausted mid-decode")
        self._pos = pos + 1
        return self._data[pos]

    def decode_value(self, total: int) -> int:
        """The cumulative-scale value of the next symbol."""
        self._r = r = self._range // total
        v = self._code // r
        return total - 1 if v >= total else v

    def advance(self, cum_lo: int, cum_hi: int, total: int) -> None:
        r = self._r
        self._code -= r * cum_lo
        if cum_hi == total:
            self._range -= r * cum_lo
        else:
            self._range = r * (cum_hi - cum_lo)
        while self._range < _TOP:
            self._code = (self._code << 8) | self._next_byte()
            self._range <<= 8

    @property
    def consumed(self) -> int:
        return self._pos


def encode_indices(indices, k: int, increment: int = DEFAULT_INCREMENT,
                   rescale_threshold: int = DEFAULT_RESCALE) -> CodedPayload:
    """Entropy-code a sequence of indices drawn from [0, k)."""
    model = FrequencyModel(k, increment, rescale_threshold)
    enc = RangeEncoder()
    count = 0
    for sym in indices:
        sym = int(sym)
        if not 0 <= sym < k:
            raise SymbolRangeError(f"symbol {sym} outside [0, {k})")
        lo, hi = model.cum_range(sym)
        enc.encode(lo, hi, model.total)
        model.update(sym)
        count += 1
    data = enc.finish() if count else b""
    return CodedPayload(data, count, k)


def decode_indices(payload: CodedPayload, increment: int = DEFAULT_INCREMENT,
                   rescale_threshold: int = DEFAULT_RESCALE) -> list[int]:
    """Recover the exact index sequence from a coded payload.

    Truncated payloads raise PayloadTruncatedError; a length that does not
    match the coder's consumption raises PayloadDesyncError. Bit corruption
    within a well-formed length is not detectable here (the stream
    container's CRC is the authoritative integrity check).
    """
    n = payload.symbol_count
    if n == 0:
        if payload.data:
            raise PayloadDesyncError("nonempty payload for zero symbols")
        return []
    model = FrequencyModel(payload.alphabet_size, increment, rescale_threshold)
    dec = RangeDecoder(payload.data)
    out = []
    append = out.append
    for _ in range(n):
        v = dec.decode_value(model.total)
        sym = model.find(v)
        clo, chi = model.cum_range(sym)
        dec.advance(clo, chi, model.total)
        model.update(sym)
        append(sym)
    if dec.consumed != len(payload.data):
        raise PayloadDesyncError(
            f"consumed {dec.consumed} of {len(payload.data)} payload bytes"
        )
    return out
