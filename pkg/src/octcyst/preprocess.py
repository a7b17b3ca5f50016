"""Speckle reduction by bilateral filtering.

The range parameter sigma_r is estimated from the background band at the
top of the scan (vitreous), which avoids needing the layer segmentation
that itself runs on the denoised image.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SIGMA_D = 2.0


@dataclass(frozen=True)
class BilateralParams:
    sigma_d: float
    sigma_r: float
    radius: int

    def __post_init__(self):
        if self.sigma_d <= 0 or self.sigma_r <= 0:
            raise ValueError("sigma_d and sigma_r must be > 0")
        if self.radius < 1:
            raise ValueError("radius must be >= 1")


def default_radius(sigma_d: float) -> int:
    """Conventional 2-sigma truncation of the spatial Gaussian."""
    return max(1, math.ceil(2.0 * sigma_d))


def estimate_sigma_r(image: np.ndarray, top_rows: int) -> float:
    """Population std of the top `top_rows` rows, floored at 1.0."""
    rows = image.shape[0]
    if not 1 <= top_rows <= rows:
        raise ValueError(f"top_rows must be in [1, {rows}], got {top_rows}")
    band = np.asarray(image[:top_rows], dtype=np.float64)
    return max(1.0, float(band.std()))


def background_rows(rows: int) -> int:
    """Top band used for sigma_r estimation: 10% of rows, at least 8."""
    return min(rows, max(8, rows // 10))


def bilateral_filter(image: np.ndarray, params: BilateralParams) -> np.ndarray:
    """Edge-preserving smoothing.

    Each output pixel is the normalized sum over the (2*radius+1)^2 window
    of neighbor intensities weighted by a spatial Gaussian (sigma_d) and a
    range Gaussian on intensity differences (sigma_r).  Windows are clipped
    at the borders and the normalizer is recomputed over in-bounds
    neighbors, so the filter is a convex combination everywhere.
    """
    img = np.asarray(image, dtype=np.float64)
    rows, cols = img.shape
    r = params.radius
    inv_2sd2 = 1.0 / (2.0 * params.sigma_d * params.sigma_d)
    inv_2sr2 = 1.0 / (2.0 * params.sigma_r * params.sigma_r)

    num = np.zeros_like(img)
    den = np.zeros_like(img)
    for di in range(-r, r + 1):
        for dj in range(-r, r + 1):
            w_spatial = math.exp(-(di * di + dj * dj) * inv_2sd2)
            # region of centers whose (di, dj) neighbor is in bounds
            r0, r1 = max(0, -di), rows - max(0, di)
            c0, c1 = max(0, -dj), cols - max(0, dj)
            if r0 >= r1 or c0 >= c1:
                continue
            center = img[r0:r1, c0:c1]
            neigh = img[r0 + di : r1 + di, c0 + dj : c1 + dj]
            w = w_spatial * np.exp(-((neigh - center) ** 2) * inv_2sr2)
            num[r0:r1, c0:c1] += w * neigh
            den[r0:r1, c0:c1] += w
    out = np.rint(num / den)
    return np.clip(out, 0, 255).astype(np.uint8)
