"""Seeded procedural test images with natural-image-like statistics.

There is no bundled photo corpus, so experiments and tests synthesize
their material: smooth shaded backgrounds, multi-scale texture, a few
soft-edged shapes, and fine grain. The mix gives index maps the spatial
correlation and skewed-but-spread codeword usage that rate and
restoration experiments rely on. Everything is deterministic in the seed.
"""
from __future__ import annotations

import numpy as np

from .ppm import Image


def _box_blur(a: np.ndarray, radius: int) -> np.ndarray:
    """Separable box blur with edge clamping, via padded cumulative sums."""
    if radius < 1:
        return a
    for axis in (0, 1):
        size = 2 * radius + 1
        pad = [(0, 0), (0, 0)]
        pad[axis] = (radius + 1, radius)
        padded = np.pad(a, pad, mode="edge")
        csum = np.cumsum(padded, axis=axis)
        hi = np.take(csum, range(size, csum.shape[axis]), axis=axis)
        lo = np.take(csum, range(0, csum.shape[axis] - size), axis=axis)
        a = (hi - lo) / size
    return a


def _fractal_noise(h: int, w: int, rng: np.random.Generator) -> np.ndarray:
    """Sum of blurred noise octaves, roughly 1/f: large scales dominate."""
    out = np.zeros((h, w))
    for radius, amp in ((48, 1.0), (16, 0.55), (5, 0.3), (1, 0.15)):
        out += amp * _box_blur(rng.standard_normal((h, w)), radius)
    return out


def make_test_image(width: int, height: int, seed: int) -> Image:
    """One synthetic photograph-like RGB image, deterministic in the seed."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width]
    yn = yy / height
    xn = xx / width

    # smooth illumination gradient plus low-frequency waves
    luma = 0.15 * rng.standard_normal() + 0.5
    luma = luma + 0.35 * (rng.uniform(-1, 1) * yn + rng.uniform(-1, 1) * xn)
    for _ in range(3):
        fy, fx = rng.uniform(0.5, 3.0, size=2)
        phase = rng.uniform(0, 2 * np.pi)
        luma = luma + rng.uniform(0.05, 0.18) * np.cos(
            2 * np.pi * (fy * yn + fx * xn) + phase
        )

    texture = _fractal_noise(height, width, rng)
    texture *= rng.uniform(0.05, 0.12) / max(texture.std(), 1e-9)

    base = luma + texture
    tint = rng.uniform(-0.12, 0.12, size=3)
    chroma = _fractal_noise(height, width, rng)
    chroma *= 0.05 / max(chroma.std(), 1e-9)
    rgb = np.stack([base + tint[c] + (c - 1) * chroma for c in range(3)], axis=-1)

    # a handful of soft-edged shapes with their own colors
    for _ in range(int(rng.integers(4, 9))):
        cy, cx = rng.uniform(0, height), rng.uniform(0, width)
        ry = rng.uniform(0.04, 0.22) * height
        rx = rng.uniform(0.04, 0.22) * width
        d = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2
        soft = np.clip(1.6 - d, 0.0, 1.0) ** 2
        color = rng.uniform(-0.45, 0.45, size=3)
        rgb += soft[..., None] * color[None, None, :]

    rgb += rng.standard_normal(rgb.shape) * 0.008  # sensor grain
    samples = np.clip(rgb * 255.0, 0.0, 255.0)
    return Image(np.rint(samples).astype(np.uint8))


def make_corpus(count: int, width: int, height: int, base_seed: int) -> list[Image]:
    return [make_test_image(width, height, base_seed + i) for i in range(count)]
