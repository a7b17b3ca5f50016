"""Network input assembly.

Scans from different devices keep their native size: the denoised image is
normalized to [0,1], the ROI indicator is computed, and both are embedded
centered in a fixed reference frame by zero-padding, then stacked into a
two-channel sample.  The padding offset and original dims ride along so
predictions can be cropped back to scan coordinates.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio.formats import atomic_write_bytes, read_float_raster, write_float_raster
from .errors import DimMismatch, TooLarge, WindowOutOfBounds
from .preprocess import (
    DEFAULT_SIGMA_D,
    BilateralParams,
    background_rows,
    bilateral_filter,
    default_radius,
    estimate_sigma_r,
)
from .retinagraph import DEFAULT_W_MIN, roi_mask, segment_layers


@dataclass(frozen=True)
class ReferenceDims:
    rows: int = 640
    cols: int = 1024

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("reference dims must be positive")


@dataclass(frozen=True)
class Sample:
    """Two-channel network input: normalized image + ROI indicator."""

    values: np.ndarray  # float32 (2, rows, cols), zeros outside the window
    offset: tuple[int, int]
    orig_dims: tuple[int, int]

    @property
    def image_channel(self) -> np.ndarray:
        return self.values[0]

    @property
    def roi_channel(self) -> np.ndarray:
        return self.values[1]


def normalize(image: np.ndarray) -> np.ndarray:
    """Min-max scale to [0,1] as float32; a constant image maps to zeros."""
    img = np.asarray(image, dtype=np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros(img.shape, dtype=np.float32)
    return ((img - lo) / (hi - lo)).astype(np.float32)


def pad_to_reference(
    image: np.ndarray, ref: ReferenceDims
) -> tuple[np.ndarray, tuple[int, int]]:
    """Embed centered (floor offsets) in a zero frame of the reference size."""
    img = np.asarray(image, dtype=np.float32)
    rows, cols = img.shape
    if rows > ref.rows or cols > ref.cols:
        raise TooLarge(f"image {rows}x{cols} exceeds reference {ref.rows}x{ref.cols}")
    row_off = (ref.rows - rows) // 2
    col_off = (ref.cols - cols) // 2
    padded = np.zeros((ref.rows, ref.cols), dtype=np.float32)
    padded[row_off : row_off + rows, col_off : col_off + cols] = img
    return padded, (row_off, col_off)


def crop_from_reference(
    padded: np.ndarray, offset: tuple[int, int], orig_dims: tuple[int, int]
) -> np.ndarray:
    """Inverse of pad_to_reference: exact window extraction."""
    rows, cols = orig_dims
    r0, c0 = offset
    if r0 < 0 or c0 < 0 or r0 + rows > padded.shape[0] or c0 + cols > padded.shape[1]:
        raise WindowOutOfBounds(
            f"window {orig_dims} at {offset} exceeds padded dims {padded.shape}"
        )
    return padded[r0 : r0 + rows, c0 : c0 + cols].copy()


def stack_channels(
    image: np.ndarray,
    roi: np.ndarray,
    offset: tuple[int, int],
    orig_dims: tuple[int, int],
) -> Sample:
    """Stack a padded normalized image and a padded {0,1} ROI into a Sample."""
    img = np.asarray(image, dtype=np.float32)
    roi = np.asarray(roi, dtype=np.float32)
    if img.shape != roi.shape:
        raise DimMismatch(f"channel dims differ: {img.shape} vs {roi.shape}")
    if not np.all((roi == 0.0) | (roi == 1.0)):
        raise ValueError("ROI channel must be a {0,1} indicator")
    return Sample(np.stack([img, roi]), tuple(offset), tuple(orig_dims))


def prepare_sample(
    image: np.ndarray,
    ref: ReferenceDims,
    sigma_d: float = DEFAULT_SIGMA_D,
    w_min: float = DEFAULT_W_MIN,
) -> Sample:
    """Full preparation: denoise, segment layers, build ROI, pad, stack."""
    img = np.asarray(image)
    rows, cols = img.shape
    sigma_r = estimate_sigma_r(img, background_rows(rows))
    params = BilateralParams(sigma_d, sigma_r, default_radius(sigma_d))
    denoised = bilateral_filter(img, params)
    ilm, ism = segment_layers(denoised, w_min)
    roi = roi_mask(ilm, ism, rows, cols)
    norm = normalize(denoised)
    padded_img, offset = pad_to_reference(norm, ref)
    padded_roi, _ = pad_to_reference(roi.mask.astype(np.float32), ref)
    return stack_channels(padded_img, padded_roi, offset, (rows, cols))


_META_RE = re.compile(r"^offset=(\d+),(\d+) orig=(\d+),(\d+)$")


def save_sample(sample: Sample, path) -> None:
    """Persist as a 2-channel OCTF raster plus a one-line .meta sidecar."""
    write_float_raster(sample.values, path)
    meta = (
        f"offset={sample.offset[0]},{sample.offset[1]} "
        f"orig={sample.orig_dims[0]},{sample.orig_dims[1]}\n"
    )
    atomic_write_bytes(str(path) + ".meta", meta.encode("utf-8"))


def load_sample(path) -> Sample:
    values = read_float_raster(path)
    if values.shape[0] != 2:
        raise DimMismatch(f"{path}: expected 2 channels, got {values.shape[0]}")
    text = Path(str(path) + ".meta").read_text(encoding="utf-8").strip()
    m = _META_RE.match(text)
    if m is None:
        raise DimMismatch(f"{path}.meta: malformed sidecar line: {text!r}")
    r0, c0, rows, cols = (int(g) for g in m.groups())
    return Sample(values, (r0, c0), (rows, cols))
