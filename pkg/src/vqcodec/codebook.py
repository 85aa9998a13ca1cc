"""Codebook construction, the variable-bitrate K-means ladder, and
nearest-codeword quantization.

Quantization assigns each latent vector the index of the closest codeword
by squared Euclidean distance, ties going to the smallest index. Codebooks
are trained with k-means++ initialization followed by Lloyd iterations;
variable bitrate comes from re-clustering a root codebook's codewords into
the ladder sizes, optionally refined on latent samples afterwards.

Codewords are stored float32 (the serialized precision); every distance is
computed in float64. A codebook's identity is a 64-bit content hash of its
codewords, so equal contents are interchangeable regardless of provenance.
"""
from __future__ import annotations

import hashlib
import struct
import zlib
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .transform import LatentGrid

LADDER_SIZES = (2048, 1024, 512, 256, 128, 64, 32, 16, 8)

CONVERGENCE_REL = 1e-6
MAX_ITERS = 200

_CB_MAGIC = b"VQCB"
_CB_VERSION = 1
_CB_FIXED = struct.Struct("<IIQI")  # K, n_z, parent_id, refine_iters


class CodebookError(Exception):
    pass


class DimensionMismatchError(CodebookError):
    pass


class BindingError(CodebookError):
    """IndexMap and codebook identities disagree."""


class IndexRangeError(CodebookError):
    pass


class InsufficientSamplesError(CodebookError):
    pass


class LadderSizeError(CodebookError):
    pass


class CodebookFileError(CodebookError):
    """Malformed, corrupt, or unsupported VQCB file."""


@dataclass(frozen=True)
class Codebook:
    """K codewords of dimension n_z, immutable once constructed.

    distortion_log carries the per-iteration mean squared distance of the
    training run that produced this codebook (empty for handmade ones); it
    is diagnostic state and is not serialized.
    """

    codewords: np.ndarray
    parent_id: int | None = None
    refine_iters: int = 0
    distortion_log: tuple[float, ...] = ()

    def __post_init__(self):
        cw = np.ascontiguousarray(self.codewords, dtype=np.float32)
        if cw.ndim != 2 or cw.shape[0] < 1 or cw.shape[1] < 1:
            raise CodebookError("codewords must be a (K, n_z) matrix")
        if not np.all(np.isfinite(cw)):
            raise CodebookError("codewords must be finite")
        cw.setflags(write=False)
        object.__setattr__(self, "codewords", cw)

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]

    @cached_property
    def id(self) -> int:
        """64-bit content hash over (K, n_z, codewords as f32 LE)."""
        h = hashlib.sha256()
        h.update(struct.pack("<II", self.size, self.dim))
        h.update(self.codewords.astype("<f4").tobytes())
        return int.from_bytes(h.digest()[:8], "little")

    def points(self) -> np.ndarray:
        return self.codewords.astype(np.float64)


@dataclass(frozen=True)
class IndexMap:
    """Grid of codeword indices bound to the codebook that produced it."""

    indices: np.ndarray
    k: int
    codebook_id: int

    def __post_init__(self):
        idx = np.ascontiguousarray(self.indices, dtype=np.int32)
        if idx.ndim != 2:
            raise CodebookError("indices must be (grid_h, grid_w)")
        if self.k < 1:
            raise CodebookError("k must be positive")
        if idx.size and (idx.min() < 0 or idx.max() >= self.k):
            raise IndexRangeError(f"indices must lie in [0, {self.k})")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def grid_h(self) -> int:
        return self.indices.shape[0]

    @property
    def grid_w(self) -> int:
        return self.indices.shape[1]

    def flat(self) -> np.ndarray:
        return self.indices.reshape(-1)


def nearest_indices(points: np.ndarray, codewords: np.ndarray) -> np.ndarray:
    """Exact argmin over codewords by squared Euclidean distance.

    Distances are formed directly as sum((p - c)^2) in float64 (no
    norm-expansion shortcuts), so results match a brute-force scan
    including exact ties, which resolve to the smallest index.
    """
    pts = points.astype(np.float64, copy=False)
    n = pts.shape[0]
    best_d = np.full(n, np.inf)
    best_i = np.zeros(n, dtype=np.int32)
    cell_block = 256
    code_chunk = 256
    for cs in range(0, codewords.shape[0], code_chunk):
        block = codewords[cs : cs + code_chunk].astype(np.float64)
        for ps in range(0, n, cell_block):
            pe = min(ps + cell_block, n)
            diff = pts[ps:pe, None, :] - block[None, :, :]
            d = np.einsum("nkd,nkd->nk", diff, diff)
            loc = np.argmin(d, axis=1)
            locd = d[np.arange(pe - ps), loc]
            upd = locd < best_d[ps:pe]  # strict: earlier chunk keeps ties
            best_d[ps:pe][upd] = locd[upd]
            best_i[ps:pe][upd] = (loc[upd] + cs).astype(np.int32)
    return best_i


def quantize(grid: LatentGrid, cb: Codebook) -> IndexMap:
    """Map each latent cell to its nearest codeword index."""
    if grid.dim != cb.dim:
        raise DimensionMismatchError(f"grid dim {grid.dim} != codebook dim {cb.dim}")
    idx = nearest_indices(grid.as_points(), cb.codewords)
    return IndexMap(idx.reshape(grid.grid_h, grid.grid_w), cb.size, cb.id)


def dequantize(im: IndexMap, cb: Codebook) -> LatentGrid:
    """Look indices back up into codewords (the quantized latent grid)."""
    if im.codebook_id != cb.id:
        raise BindingError(
            f"index map bound to codebook {im.codebook_id:#018x}, got {cb.id:#018x}"
        )
    if im.k != cb.size:
        raise BindingError(f"index map alphabet {im.k} != codebook size {cb.size}")
    vectors = cb.points()[im.indices]
    return LatentGrid(vectors)


def _stack_samples(samples: Iterable[LatentGrid] | np.ndarray) -> np.ndarray:
    if isinstance(samples, np.ndarray):
        pts = samples.astype(np.float64, copy=False)
        if pts.ndim != 2:
            raise CodebookError("sample array must be (N, dim)")
        return pts
    mats = [g.as_points() for g in samples]
    if not mats:
        raise InsufficientSamplesError("no samples given")
    dims = {m.shape[1] for m in mats}
    if len(dims) != 1:
        raise DimensionMismatchError(f"mixed sample dims {sorted(dims)}")
    return np.concatenate(mats, axis=0)


def _assign_labels(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Fast argmin assignment via the expanded-norm form, blocked over points."""
    c_sq = np.einsum("kd,kd->k", centroids, centroids)
    labels = np.empty(points.shape[0], dtype=np.int64)
    block = 4096
    for s in range(0, points.shape[0], block):
        e = min(s + block, points.shape[0])
        d = c_sq[None, :] - 2.0 * (points[s:e] @ centroids.T)
        labels[s:e] = np.argmin(d, axis=1)
    return labels


def _distortion(points: np.ndarray, centroids: np.ndarray, labels: np.ndarray) -> float:
    diff = points - centroids[labels]
    return float(np.einsum("nd,nd->", diff, diff) / points.shape[0])


def _reseed_empty(points, centroids, labels, counts) -> None:
    """Move each empty centroid onto the point farthest from its own centroid."""
    empties = np.flatnonzero(counts == 0)
    if empties.size == 0:
        return
    diff = points - centroids[labels]
    dist = np.einsum("nd,nd->n", diff, diff)
    order = np.argsort(-dist, kind="stable")
    for rank, k in enumerate(empties):
        centroids[k] = points[order[rank]]


def kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws after a uniform first pick."""
    n = points.shape[0]
    centroids = np.empty((k, points.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = points[first]
    diff = points - centroids[0]
    d2 = np.einsum("nd,nd->n", diff, diff)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centroids[i] = points[pick]
        diff = points - centroids[i]
        d2 = np.minimum(d2, np.einsum("nd,nd->n", diff, diff))
    return centroids


def lloyd(
    points: np.ndarray,
    init: np.ndarray,
    max_iters: int = MAX_ITERS,
    rel_tol: float = CONVERGENCE_REL,
) -> tuple[np.ndarray, list[float]]:
    """Lloyd iterations from given centroids.

    Returns the refined centroids and the logged mean-squared-distance per
    iteration (measured after each assignment step, so the sequence is
    non-increasing up to assignment round-off).
    """
    centroids = init.astype(np.float64).copy()
    k = centroids.shape[0]
    log: list[float] = []
    prev = None
    for _ in range(max_iters):
        labels = _assign_labels(points, centroids)
        d = _distortion(points, centroids, labels)
        log.append(d)
        if prev is not None and prev - d <= rel_tol * prev:
            break
        counts = np.bincount(labels, minlength=k)
        for j in range(points.shape[1]):
            col = np.bincount(labels, weights=points[:, j], minlength=k)
            centroids[:, j] = np.where(counts > 0, col / np.maximum(counts, 1), centroids[:, j])
        _reseed_empty(points, centroids, labels, counts)
        prev = d
        if d == 0.0:
            break
    return centroids, log


def _dedupe(centroids: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Ensure no two codewords are bit-identical at float32 precision.

    Duplicates are re-seeded onto the farthest distinct sample points; if
    the data has too few distinct values to support that, duplicates are
    merged and the codebook shrinks.
    """
    for _ in range(8):
        as32 = centroids.astype(np.float32)
        _, first_pos = np.unique(as32, axis=0, return_index=True)
        if first_pos.size == as32.shape[0]:
            return centroids
        dup_mask = np.ones(as32.shape[0], dtype=bool)
        dup_mask[first_pos] = False
        dups = np.flatnonzero(dup_mask)
        labels = _assign_labels(points, centroids)
        diff = points - centroids[labels]
        dist = np.einsum("nd,nd->n", diff, diff)
        order = np.argsort(-dist, kind="stable")
        taken = {row.tobytes() for row in as32}
        cursor = 0
        for k in dups:
            while cursor < order.size:
                cand = points[order[cursor]]
                cursor += 1
                key = cand.astype(np.float32).tobytes()
                if key not in taken:
                    centroids[k] = cand
                    taken.add(key)
                    break
            else:
                break  # no distinct points left; fall through to merge
        else:
            continue
        break
    as32 = centroids.astype(np.float32)
    _, first_pos = np.unique(as32, axis=0, return_index=True)
    return centroids[np.sort(first_pos)]


def train_root(
    samples: Iterable[LatentGrid] | np.ndarray, k: int, seed: int
) -> Codebook:
    """Train a root codebook with seeded k-means++ and Lloyd iterations.

    Iterates until the relative distortion improvement drops below 1e-6 or
    200 iterations, whichever is first.
    """
    points = _stack_samples(samples)
    if k < 1:
        raise CodebookError("k must be positive")
    if points.shape[0] < k:
        raise InsufficientSamplesError(
            f"{points.shape[0]} sample vectors < k={k}"
        )
    rng = np.random.default_rng(seed)
    init = kmeanspp_init(points, k, rng)
    centroids, log = lloyd(points, init)
    centroids = _dedupe(centroids, points)
    return Codebook(centroids, parent_id=None, refine_iters=0, distortion_log=tuple(log))


def cluster_ladder(
    root: Codebook,
    sizes: Sequence[int],
    samples: Iterable[LatentGrid] | np.ndarray | None = None,
    seed: int = 0,
    refine_max_iters: int = 50,
) -> list[Codebook]:
    """Cluster the root's codewords into each requested (smaller) size.

    The root's K codewords are themselves the clustered points. When
    ``samples`` is given, each child is additionally refined with Lloyd
    iterations over the sample vectors (capped at refine_max_iters), the
    analog of fine-tuning a clustered codebook; refine_iters records how
    many refinement iterations ran.
    """
    if not sizes:
        return []
    if any(s >= root.size for s in sizes):
        raise LadderSizeError("every ladder size must be smaller than the root size")
    if any(s < 1 for s in sizes):
        raise LadderSizeError("ladder sizes must be positive")
    if any(b >= a for a, b in zip(sizes, sizes[1:])):
        raise LadderSizeError("ladder sizes must be strictly decreasing")
    root_points = root.points()
    sample_points = None if samples is None else _stack_samples(samples)
    children = []
    for s in sizes:
        rng = np.random.default_rng([seed, s])
        init = kmeanspp_init(root_points, s, rng)
        centroids, log = lloyd(root_points, init)
        refine_iters = 0
        if sample_points is not None:
            centroids, log = lloyd(sample_points, centroids, max_iters=refine_max_iters)
            refine_iters = len(log)
            centroids = _dedupe(centroids, sample_points)
        else:
            centroids = _dedupe(centroids, root_points)
        children.append(
            Codebook(
                centroids,
                parent_id=root.id,
                refine_iters=refine_iters,
                distortion_log=tuple(log),
            )
        )
    return children


def codebook_to_bytes(cb: Codebook) -> bytes:
    """Serialize to the VQCB container (f32 LE codewords, CRC32 trailer)."""
    body = (
        _CB_MAGIC
        + bytes([_CB_VERSION])
        + _CB_FIXED.pack(cb.size, cb.dim, cb.parent_id or 0, cb.refine_iters)
        + cb.codewords.astype("<f4").tobytes()
    )
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def codebook_from_bytes(data: bytes) -> Codebook:
    head = len(_CB_MAGIC) + 1 + _CB_FIXED.size
    if len(data) < head + 4:
        raise CodebookFileError("file too short")
    if data[:4] != _CB_MAGIC:
        raise CodebookFileError("bad magic (not a VQCB file)")
    if data[4] != _CB_VERSION:
        raise CodebookFileError(f"unsupported version {data[4]}")
    k, dim, parent_id, refine_iters = _CB_FIXED.unpack_from(data, 5)
    want = head + k * dim * 4 + 4
    if len(data) != want:
        raise CodebookFileError(f"expected {want} bytes, got {len(data)}")
    crc = struct.unpack_from("<I", data, want - 4)[0]
    if crc != (zlib.crc32(data[: want - 4]) & 0xFFFFFFFF):
        raise CodebookFileError("CRC mismatch")
    codewords = np.frombuffer(data, dtype="<f4", count=k * dim, offset=head)
    return Codebook(
        codewords.reshape(k, dim).copy(),
        parent_id=parent_id or None,
        refine_iters=refine_iters,
    )


def save_codebook(cb: Codebook, path) -> None:
    with open(path, "wb") as f:
        f.write(codebook_to_bytes(cb))


def load_codebook(path) -> Codebook:
    with open(path, "rb") as f:
        return codebook_from_bytes(f.read())
