"""Deterministic patch analysis/synthesis between images and latent grids.

Each 16x16 RGB patch is mapped to [-1, 1], flattened in channel-interleaved
raster order, and projected onto the leading rows of a fixed orthonormal
basis built from separable 2D DCT-II functions (one set per channel). Rows
are ranked by zig-zag frequency, interleaving the three channels at each
rank, so a truncated projection keeps the lowest frequencies of every
channel: rows 0..2 are the three channel DC terms, rows 3..5 the next
zig-zag frequency, and so on. Synthesis is the transpose, followed by the
inverse pixel mapping with half-to-even rounding.

Images whose dimensions are not multiples of 16 are padded by edge
replication on the bottom/right; callers keep the true dimensions and crop
after synthesis.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .ppm import Image

PATCH = 16
FULL_DIM = PATCH * PATCH * 3  # 768 raw dimensions per patch
BASIS_ID = "dct16-zigzag-rgb-v1"


class TransformError(Exception):
    pass


class DimensionMismatchError(TransformError):
    pass


def zigzag_order(n: int) -> list[tuple[int, int]]:
    """(u, v) frequency pairs of an n x n block in JPEG zig-zag order."""
    order = []
    for s in range(2 * n - 1):
        if s % 2 == 0:
            us = range(min(s, n - 1), max(0, s - n + 1) - 1, -1)
        else:
            us = range(max(0, s - n + 1), min(s, n - 1) + 1)
        order.extend((u, s - u) for u in us)
    return order


@lru_cache(maxsize=1)
def full_basis() -> np.ndarray:
    """The complete 768x768 orthonormal analysis basis (rows = functions)."""
    x = np.arange(PATCH)
    u = np.arange(PATCH)[:, None]
    dct = np.cos((2 * x + 1) * u * np.pi / (2 * PATCH))
    dct *= np.sqrt(2.0 / PATCH)
    dct[0] *= np.sqrt(0.5)

    basis = np.zeros((FULL_DIM, FULL_DIM))
    sample_pos = np.arange(PATCH * PATCH) * 3  # flat offsets of channel 0
    for rank, (fu, fv) in enumerate(zigzag_order(PATCH)):
        func = np.outer(dct[fu], dct[fv]).ravel()  # over (y, x)
        for c in range(3):
            basis[3 * rank + c, sample_pos + c] = func
    basis.setflags(write=False)
    return basis


@dataclass(frozen=True)
class TransformSpec:
    """Configuration of the analysis/synthesis pair.

    dim is the number of retained basis rows (1..768); patch_size is fixed.
    """

    dim: int = 64
    patch_size: int = PATCH
    basis_id: str = BASIS_ID

    def __post_init__(self):
        if self.patch_size != PATCH:
            raise TransformError(f"patch_size must be {PATCH}")
        if not 1 <= self.dim <= FULL_DIM:
            raise TransformError(f"dim must be in 1..{FULL_DIM}, got {self.dim}")
        if self.basis_id != BASIS_ID:
            raise TransformError(f"unknown basis {self.basis_id!r}")

    @property
    def basis(self) -> np.ndarray:
        return full_basis()[: self.dim]


@dataclass(frozen=True)
class LatentGrid:
    """Per-patch feature vectors: ``vectors`` has shape (grid_h, grid_w, dim)."""

    vectors: np.ndarray

    def __post_init__(self):
        v = self.vectors
        if v.ndim != 3:
            raise TransformError("vectors must be (grid_h, grid_w, dim)")
        if v.dtype != np.float64:
            raise TransformError("vectors must be float64")
        if not np.all(np.isfinite(v)):
            raise TransformError("latent vectors must be finite")
        v.setflags(write=False)

    @property
    def grid_h(self) -> int:
        return self.vectors.shape[0]

    @property
    def grid_w(self) -> int:
        return self.vectors.shape[1]

    @property
    def dim(self) -> int:
        return self.vectors.shape[2]

    def as_points(self) -> np.ndarray:
        """All cell vectors as a (grid_h*grid_w, dim) array."""
        return self.vectors.reshape(-1, self.dim)


def pad_to_patch_multiple(pixels: np.ndarray) -> np.ndarray:
    h, w = pixels.shape[:2]
    pad_h = (-h) % PATCH
    pad_w = (-w) % PATCH
    if pad_h == 0 and pad_w == 0:
        return pixels
    return np.pad(pixels, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")


def _to_patches(unit: np.ndarray) -> np.ndarray:
    """(H, W, 3) in [-1, 1] -> (gh, gw, 768) flattened patches."""
    h, w = unit.shape[:2]
    gh, gw = h // PATCH, w // PATCH
    tiles = unit.reshape(gh, PATCH, gw, PATCH, 3).transpose(0, 2, 1, 3, 4)
    return tiles.reshape(gh, gw, FULL_DIM)


def analyze(img: Image, spec: TransformSpec) -> LatentGrid:
    """Project an image onto the latent grid (one vector per 16x16 patch)."""
    padded = pad_to_patch_multiple(img.pixels)
    unit = padded.astype(np.float64) / 127.5 - 1.0
    patches = _to_patches(unit)
    vectors = patches @ spec.basis.T
    return LatentGrid(vectors)


def synthesize(grid: LatentGrid, spec: TransformSpec, out_dims: tuple[int, int]) -> Image:
    """Invert the projection and crop to (height, width).

    Missing basis rows reconstruct as zero; pixels are mapped back with
    half-to-even rounding and clamped to [0, 255].
    """
    if grid.dim != spec.dim:
        raise DimensionMismatchError(f"grid dim {grid.dim} != spec dim {spec.dim}")
    out_h, out_w = out_dims
    if out_h < 1 or out_w < 1:
        raise DimensionMismatchError("output dims must be positive")
    gh, gw = grid.grid_h, grid.grid_w
    if gh != -(-out_h // PATCH) or gw != -(-out_w // PATCH):
        raise DimensionMismatchError(
            f"grid {gh}x{gw} inconsistent with output {out_h}x{out_w}"
        )
    patches = grid.vectors @ spec.basis
    tiles = patches.reshape(gh, gw, PATCH, PATCH, 3).transpose(0, 2, 1, 3, 4)
    unit = tiles.reshape(gh * PATCH, gw * PATCH, 3)
    samples = np.rint(np.clip((unit + 1.0) * 127.5, 0.0, 255.0))
    return Image(samples[:out_h, :out_w].astype(np.uint8))
