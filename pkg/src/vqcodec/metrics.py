"""Rate and fidelity measurement for rate-distortion and loss experiments."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ppm import Image


class MetricsError(Exception):
    pass


@dataclass(frozen=True)
class RdPoint:
    image: str
    codebook_size: int
    bpp_payload: float
    bpp_file: float
    psnr_db: float
    alpha: float | None = None
    index_accuracy: float | None = None


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB; identical images give +inf."""
    if a.pixels.shape != b.pixels.shape:
        raise MetricsError(f"dimension mismatch {a.pixels.shape} vs {b.pixels.shape}")
    diff = a.pixels.astype(np.float64) - b.pixels.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 * 255.0 / mse)


def bpp(stream_bytes: int, payload_bytes: int, height: int, width: int) -> tuple[float, float]:
    """(bpp_file, bpp_payload) for the two rate accountings."""
    if height < 1 or width < 1:
        raise MetricsError("dimensions must be positive")
    pixels = height * width
    return 8.0 * stream_bytes / pixels, 8.0 * payload_bytes / pixels


def raw_index_bpp(k: int, grid_cells: int, height: int, width: int) -> float:
    """Fixed-length bound: ceil(log2 K) bits per index, no entropy coding."""
    bits = max(1, (k - 1).bit_length())
    return bits * grid_cells / (height * width)


def index_accuracy(truth: np.ndarray, restored: np.ndarray, mask: np.ndarray) -> float:
    """Fraction of masked cells whose restored index equals the truth.

    An empty mask counts as perfect restoration.
    """
    if truth.shape != restored.shape or truth.shape != mask.shape:
        raise MetricsError("shape mismatch")
    n = int(mask.sum())
    if n == 0:
        return 1.0
    return float(np.count_nonzero(truth[mask] == restored[mask])) / n


def _fmt(value, spec: str) -> str:
    if value is None:
        return ""
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return format(value, spec)


RD_CSV_HEADER = "image,K,alpha,bpp_payload,bpp_file,psnr_db,index_accuracy"


def rd_csv_rows(points: list[RdPoint]) -> str:
    """Render RdPoints as CSV text with the fixed column schema."""
    lines = [RD_CSV_HEADER]
    for p in points:
        lines.append(
            ",".join(
                [
                    p.image,
                    str(p.codebook_size),
                    _fmt(p.alpha, ".2f"),
                    _fmt(p.bpp_payload, ".6f"),
                    _fmt(p.bpp_file, ".6f"),
                    _fmt(p.psnr_db, ".4f"),
                    _fmt(p.index_accuracy, ".4f"),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def write_rd_csv(points: list[RdPoint], path) -> None:
    with open(path, "w", newline="") as f:
        f.write(rd_csv_rows(points))
