"""Loss-channel simulation and lost-index prediction.

A seeded mask marks index-map cells as lost (read back as the sentinel
token K, outside the alphabet). Restoration scans the grid in raster order
and fills each lost cell with the argmax of a causal context model, so
cells restored earlier feed the contexts of later ones, exactly like
autoregressive decoding.

The context of a cell is the sequence of up to C=12 nearest already-known
indices inside the 16x16 window centered on it, causal half only (cells
that precede it in raster order), nearest first. The model keeps symbol
counts per context signature at backoff lengths (12, 8, 4, 2, 1, 0) and
predicts from the longest signature it has seen, with add-1/2
(Krichevsky-Trofimov) smoothing, so no symbol ever has probability zero
and the empty signature falls back to the smoothed global histogram.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .codebook import IndexMap

WINDOW = 16
CONTEXT_LEN = 12
BACKOFF = (12, 8, 4, 2, 1, 0)

_PM_MAGIC = b"VQPM"
_PM_VERSION = 1


class RestorationError(Exception):
    pass


class AlphabetMismatchError(RestorationError):
    pass


class ModelFileError(RestorationError):
    pass


def causal_offsets(context_len: int = CONTEXT_LEN) -> tuple[tuple[int, int], ...]:
    """The context_len nearest raster-causal offsets in the centered window.

    The window spans rows -8..+7 and columns -8..+7 around the cell;
    causal means (dr < 0) or (dr == 0 and dc < 0). Offsets are ordered by
    squared distance, then (dr, dc) as tie-break.
    """
    half = WINDOW // 2
    cand = [
        (dr, dc)
        for dr in range(-half, half)
        for dc in range(-half, half)
        if dr < 0 or (dr == 0 and dc < 0)
    ]
    cand.sort(key=lambda o: (o[0] * o[0] + o[1] * o[1], o[0], o[1]))
    return tuple(cand[:context_len])


@dataclass(frozen=True)
class MaskedIndexMap:
    """An index map with a loss mask; masked cells read as the token K."""

    base: IndexMap
    mask: np.ndarray
    alpha: float

    def __post_init__(self):
        m = np.ascontiguousarray(self.mask, dtype=bool)
        if m.shape != self.base.indices.shape:
            raise RestorationError("mask shape must match the index map")
        m.setflags(write=False)
        object.__setattr__(self, "mask", m)

    @property
    def mask_token(self) -> int:
        return self.base.k

    def observed(self) -> np.ndarray:
        """Indices with masked cells replaced by the mask token."""
        out = self.base.indices.astype(np.int32).copy()
        out[self.mask] = self.mask_token
        return out


def apply_mask(im: IndexMap, alpha: float, seed: int, pattern: str = "uniform") -> MaskedIndexMap:
    """Mask round(alpha*N) cells chosen by a seeded RNG.

    pattern "uniform" draws i.i.d. distinct positions; "burst" marks
    contiguous raster runs (geometric lengths, mean 8) until the same
    count is reached, a rough stand-in for packet loss.
    """
    if not 0.0 <= alpha <= 1.0:
        raise RestorationError(f"alpha must be in [0, 1], got {alpha}")
    n = im.indices.size
    n_lost = round(alpha * n)
    rng = np.random.default_rng(seed)
    mask_flat = np.zeros(n, dtype=bool)
    if pattern == "uniform":
        if n_lost:
            mask_flat[rng.choice(n, size=n_lost, replace=False)] = True
    elif pattern == "burst":
        chosen: list[int] = []
        seen = set()
        while len(chosen) < n_lost:
            start = int(rng.integers(n))
            run = int(rng.geometric(1 / 8.0))
            for pos in range(start, min(start + run, n)):
                if pos not in seen:
                    seen.add(pos)
                    chosen.append(pos)
                    if len(chosen) == n_lost:
                        break
        mask_flat[chosen] = True
    else:
        raise RestorationError(f"unknown mask pattern {pattern!r}")
    return MaskedIndexMap(im, mask_flat.reshape(im.indices.shape), alpha)


class ContextModel:
    """Causal backoff context model over index maps of one alphabet."""

    def __init__(self, alphabet_size: int, context_len: int = CONTEXT_LEN,
                 backoff: Sequence[int] = BACKOFF):
        if alphabet_size < 1:
            raise RestorationError("alphabet size must be positive")
        backoff = tuple(backoff)
        if any(b > context_len for b in backoff) or 0 not in backoff:
            raise RestorationError("backoff must end at 0 and fit the context length")
        if any(b <= a for a, b in zip(backoff, backoff[1:])):
            raise RestorationError("backoff lengths must be strictly decreasing")
        self.alphabet_size = alphabet_size
        self.context_len = context_len
        self.backoff = backoff
        self.offsets = causal_offsets(context_len)
        self.trained_tokens = 0
        self.training_nll_bits: float | None = None
        # per backoff length: signature tuple -> {symbol: count}
        self.tables: dict[int, dict[tuple, dict[int, int]]] = {b: {} for b in backoff}

    def _context(self, grid: np.ndarray, i: int, j: int) -> tuple:
        h, w = grid.shape
        vals = []
        for dr, dc in self.offsets:
            r, c = i + dr, j + dc
            if 0 <= r < h and 0 <= c < w:
                vals.append(int(grid[r, c]))
        return tuple(vals)

    def observe(self, grid: np.ndarray, i: int, j: int, symbol: int) -> None:
        ctx = self._context(grid, i, j)
        for length in self.backoff:
            if len(ctx) >= length:
                sig = ctx[:length]
                bucket = self.tables[length].setdefault(sig, {})
                bucket[symbol] = bucket.get(symbol, 0) + 1
        self.trained_tokens += 1

    def _longest_match(self, ctx: tuple) -> dict[int, int]:
        for length in self.backoff:
            if len(ctx) >= length:
                bucket = self.tables[length].get(ctx[:length])
                if bucket is not None:
                    return bucket
        return {}

    def predict(self, grid: np.ndarray, i: int, j: int) -> int:
        """Argmax symbol for cell (i, j); ties go to the smallest symbol."""
        bucket = self._longest_match(self._context(grid, i, j))
        if not bucket:
            return 0
        best_sym, best_count = -1, 0
        for sym, count in bucket.items():
            if count > best_count or (count == best_count and sym < best_sym):
                best_sym, best_count = sym, count
        return best_sym

    def distribution(self, grid: np.ndarray, i: int, j: int) -> np.ndarray:
        """KT-smoothed probability vector over the alphabet for cell (i, j)."""
        bucket = self._longest_match(self._context(grid, i, j))
        probs = np.full(self.alphabet_size, 0.5)
        for sym, count in bucket.items():
            probs[sym] += count
        return probs / (sum(bucket.values()) + 0.5 * self.alphabet_size)

    def log2_prob(self, grid: np.ndarray, i: int, j: int, symbol: int) -> float:
        bucket = self._longest_match(self._context(grid, i, j))
        total = sum(bucket.values()) + 0.5 * self.alphabet_size
        return math.log2((bucket.get(symbol, 0) + 0.5) / total)

    def nll_bits(self, maps: Iterable[IndexMap]) -> float:
        """Mean -log2 p(symbol | context) over all cells of the given maps."""
        total = 0.0
        cells = 0
        for im in maps:
            self._check_alphabet(im)
            grid = im.indices
            for i in range(grid.shape[0]):
                for j in range(grid.shape[1]):
                    total -= self.log2_prob(grid, i, j, int(grid[i, j]))
                    cells += 1
        if cells == 0:
            raise RestorationError("no cells to evaluate")
        return total / cells

    def _check_alphabet(self, im: IndexMap) -> None:
        if im.k != self.alphabet_size:
            raise AlphabetMismatchError(
                f"map alphabet {im.k} != model alphabet {self.alphabet_size}"
            )


def train_predictor(maps: Iterable[IndexMap], k: int,
                    context_len: int = CONTEXT_LEN,
                    backoff: Sequence[int] = BACKOFF) -> ContextModel:
    """Count context/symbol pairs over every cell of the maps, raster order.

    The returned model's training_nll_bits attribute holds the mean
    -log2 p(symbol | context) of the training cells under the final counts.
    """
    maps = list(maps)
    model = ContextModel(k, context_len, backoff)
    for im in maps:
        if im.k != k:
            raise AlphabetMismatchError(f"map alphabet {im.k} != k {k}")
        grid = im.indices
        for i in range(grid.shape[0]):
            for j in range(grid.shape[1]):
                model.observe(grid, i, j, int(grid[i, j]))
    model.training_nll_bits = model.nll_bits(maps) if maps else float("nan")
    return model


def restore(masked: MaskedIndexMap, model: ContextModel) -> IndexMap:
    """Fill masked cells by raster-order argmax prediction.

    Unmasked cells pass through untouched; already-restored cells feed the
    contexts of later ones.
    """
    if masked.base.k != model.alphabet_size:
        raise AlphabetMismatchError(
            f"map alphabet {masked.base.k} != model alphabet {model.alphabet_size}"
        )
    grid = masked.base.indices.astype(np.int32).copy()
    mask = masked.mask
    for i, j in zip(*np.nonzero(mask)):
        grid[i, j] = model.predict(grid, int(i), int(j))
    return IndexMap(grid, masked.base.k, masked.base.codebook_id)


def model_to_bytes(model: ContextModel) -> bytes:
    """Serialize to the VQPM format (not wire-stable across versions)."""
    if model.alphabet_size > 0xFFFF:
        raise ModelFileError("alphabet too large for VQPM (u16 symbols)")
    out = bytearray()
    out += _PM_MAGIC
    out += bytes([_PM_VERSION])
    out += struct.pack("<IB", model.alphabet_size, model.context_len)
    out += bytes([len(model.backoff)]) + bytes(model.backoff)
    out += struct.pack("<Q", model.trained_tokens)
    for length in model.backoff:
        table = model.tables[length]
        out += struct.pack("<I", len(table))
        for sig in sorted(table):
            out += struct.pack(f"<{length}H", *sig)
            bucket = table[sig]
            out += struct.pack("<H", len(bucket))
            for sym in sorted(bucket):
                out += struct.pack("<HI", sym, bucket[sym])
    return bytes(out)


def model_from_bytes(data: bytes) -> ContextModel:
    if len(data) < 4 or data[:4] != _PM_MAGIC:
        raise ModelFileError("bad magic (not a VQPM file)")
    try:
        if data[4] != _PM_VERSION:
            raise ModelFileError(f"unsupported version {data[4]}")
        pos = 5
        k, context_len = struct.unpack_from("<IB", data, pos)
        pos += 5
        n_levels = data[pos]
        pos += 1
        backoff = tuple(data[pos : pos + n_levels])
        pos += n_levels
        trained_tokens = struct.unpack_from("<Q", data, pos)[0]
        pos += 8
        model = ContextModel(k, context_len, backoff)
        model.trained_tokens = trained_tokens
        for length in backoff:
            (n_sigs,) = struct.unpack_from("<I", data, pos)
            pos += 4
            table = model.tables[length]
            for _ in range(n_sigs):
                sig = struct.unpack_from(f"<{length}H", data, pos)
                pos += 2 * length
                (n_entries,) = struct.unpack_from("<H", data, pos)
                pos += 2
                bucket = {}
                for _ in range(n_entries):
                    sym, count = struct.unpack_from("<HI", data, pos)
                    pos += 6
                    bucket[sym] = count
                table[sig] = bucket
        if pos != len(data):
            raise ModelFileError(f"{len(data) - pos} trailing bytes")
    except struct.error as exc:
        raise ModelFileError(f"truncated model file: {exc}") from None
    return model


def save_model(model: ContextModel, path) -> None:
    with open(path, "wb") as f:
        f.write(model_to_bytes(model))


def load_model(path) -> ContextModel:
    with open(path, "rb") as f:
        return model_from_bytes(f.read())
