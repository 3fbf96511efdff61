"""Binary tissue masking: Otsu threshold, small-component removal, closing.

The mask pipeline is threshold -> binarize -> remove small components ->
morphological closing with a disc structuring element.  Pixels outside the
image are treated as background by all morphology.  All downstream scoring is
restricted to the resulting mask.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import cv2
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image, check_mask, check_scalar
from .errors import DegenerateImageError, EmptyMaskError
from .raster import PixelRect

__all__ = [
    "MaskConfig",
    "MaskResult",
    "otsu_threshold",
    "remove_small_components",
    "morphological_close",
    "build_tissue_mask",
    "tissue_bounding_rect",
    "TissueMasker",
]



@dataclass(frozen=True)
class MaskConfig:
    """Parameters of the tissue-mask pipeline."""

    min_component_frac: float = 0.005
    closing_radius: int = 7
    histogram_bins: int = 256

    def __post_init__(self):
        check_scalar(self.min_component_frac, "min_component_frac",
                     minimum=0.0, maximum=1.0, include_min=False, include_max=False)
        check_scalar(self.closing_radius, "closing_radius", minimum=0, integral=True)
        check_scalar(self.histogram_bins, "histogram_bins", minimum=2, integral=True)


class MaskResult(NamedTuple):
    """Tissue mask plus a flag for images with a degenerate histogram.

    ``maskless`` is also set when cleanup leaves no foreground at all, since
    such images cannot support any downstream scoring.
    """

    mask: np.ndarray
    maskless: bool


def otsu_threshold(img: np.ndarray, bins: int = 256) -> float:
    """Otsu threshold over a ``bins``-bin histogram of [0, 1] intensities.

    Returns the bin edge maximizing between-class variance; pixels strictly
    above the threshold are foreground.  Ties resolve to the lowest edge.

    Raises
    ------
    DegenerateImageError
        If all intensities fall into a single histogram bin.
    """
    img = check_image(img)
    bins = check_scalar(bins, "bins", minimum=2, integral=True)
    return _otsu_core(img, bins)


def _otsu_core(img: np.ndarray, bins: int) -> float:
    quantised = (img * bins).astype(np.int32)
    counts = np.bincount(quantised.ravel(), minlength=bins + 1)
    counts[bins - 1] += counts[bins]  # intensity 1.0 belongs to the last bin
    counts = counts[:bins]
    if np.count_nonzero(counts) < 2:
        raise DegenerateImageError("intensity histogram occupies a single bin")

    counts = counts.astype(np.float64)
    total = counts.sum()
    centers = (np.arange(bins) + 0.5) / bins
    # Split after bin t: background = bins [0..t], foreground = bins (t..].
    w0 = np.cumsum(counts)
    mass0 = np.cumsum(counts * centers)
    w1 = total - w0
    mass1 = mass0[-1] - mass0
    valid = (w0 > 0) & (w1 > 0)
    mu0 = np.where(valid, mass0 / np.where(w0 > 0, w0, 1.0), 0.0)
    mu1 = np.where(valid, mass1 / np.where(w1 > 0, w1, 1.0), 0.0)
    between = np.where(valid, w0 * w1 * (mu0 - mu1) ** 2, -np.inf)
    t = int(np.argmax(between))
    return float((t + 1) / bins)


def remove_small_components(mask: np.ndarray, min_frac: float) -> np.ndarray:
    """Clear 8-connected components smaller than ``min_frac`` of image area."""
    mask = check_mask(mask)
    min_frac = check_scalar(min_frac, "min_frac", minimum=0.0, maximum=1.0,
                            include_min=False, include_max=False)
    n, labels, stats, _ = cv2.connectedComponentsWithStats(
        mask.astype(np.uint8), connectivity=8)
    if n <= 1:
        return mask.copy()
    keep = stats[:, cv2.CC_STAT_AREA] >= min_frac * mask.size
    keep[0] = False  # background label
    return keep[labels]


def _disc_offsets(radius: int) -> np.ndarray:
    r = int(radius)
    span = np.arange(-r, r + 1)
    dx, dy = np.meshgrid(span, span)
    return (dx * dx + dy * dy) <= r * r


def morphological_close(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilation then erosion with the disc {(dx,dy): dx^2+dy^2 <= r^2}.

    The input is extended with background beyond the frame; the closing is
    computed on that extended plane and the result restricted back to the
    frame.  This keeps closing extensive and idempotent at the borders.
    Implemented with exact Euclidean distance transforms, which is equivalent
    to offset-by-offset Minkowski morphology for disc elements.  Radius 0 is
    the identity.
    """
    mask = check_mask(mask)
    radius = check_scalar(radius, "radius", minimum=0, integral=True)
    if radius == 0 or not mask.any():
        return mask.copy()

    kernel = _disc_offsets(radius).astype(np.uint8)
    # Pad by r so the dilation is never clipped by the frame; constant-0
    # borders make everything beyond the padded frame background.
    work = np.pad(mask.astype(np.uint8), radius, mode="constant")
    dilated = cv2.dilate(work, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)
    eroded = cv2.erode(dilated, kernel, borderType=cv2.BORDER_CONSTANT, borderValue=0)
    return eroded[radius:-radius, radius:-radius].astype(bool)


def build_tissue_mask(img: np.ndarray, cfg: MaskConfig = MaskConfig()) -> MaskResult:
    """Full pipeline: Otsu -> binarize -> drop small components -> closing.

    Degenerate-histogram images yield an all-false mask flagged ``maskless``
    instead of raising, so batch runs skip rather than abort.
    """
    img = check_image(img)
    try:
        t = otsu_threshold(img, cfg.histogram_bins)
    except DegenerateImageError:
        return MaskResult(np.zeros(img.shape, dtype=bool), True)
    mask = img > t
    mask = remove_small_components(mask, cfg.min_component_frac)
    mask = morphological_close(mask, cfg.closing_radius)
    if not mask.any():
        return MaskResult(mask, True)
    return MaskResult(mask, False)


def tissue_bounding_rect(mask: np.ndarray) -> PixelRect:
    """Tightest axis-aligned rectangle covering all true pixels."""
    mask = check_mask(mask)
    rows = np.flatnonzero(mask.any(axis=1))
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    cols = np.flatnonzero(mask.any(axis=0))
    y0, y1 = int(rows[0]), int(rows[-1])
    x0, x1 = int(cols[0]), int(cols[-1])
    return PixelRect(x0, y0, x1 - x0 + 1, y1 - y0 + 1)


class TissueMasker(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping grayscale images to tissue masks.

    Parameters mirror :class:`MaskConfig`.  ``transform`` accepts a single
    image or an iterable of images and returns :class:`MaskResult` values.
    """

    def __init__(self, min_component_frac=0.005, closing_radius=7, histogram_bins=256):
        self.min_component_frac = min_component_frac
        self.closing_radius = closing_radius
        self.histogram_bins = histogram_bins

    def _config(self) -> MaskConfig:
        return MaskConfig(
            min_component_frac=self.min_component_frac,
            closing_radius=self.closing_radius,
            histogram_bins=self.histogram_bins,
        )

    def fit(self, X=None, y=None):
        self._config()  # validate parameters
        return self

    def transform(self, X):
        cfg = self._config()
        if isinstance(X, np.ndarray) and X.ndim == 2:
            return build_tissue_mask(X, cfg)
        return [build_tissue_mask(img, cfg) for img in X]
