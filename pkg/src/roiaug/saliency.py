"""Saliency map: blended local variance and Laplacian-of-Gaussian energy.

Both component maps use reflect padding at the borders (edge-repeating, i.e.
``d c b a | a b c d | d c b a``).  Before blending, each
component is min-max normalised over mask pixels, because raw variance and
squared LoG response live on incompatible scales; the blend weight is then a
true mixing coefficient.  The final map is zero everywhere off the mask.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from ._validation import check_image, check_mask, check_same_shape, check_scalar
from .errors import EmptyMaskError  # noqa: F401  (re-exported for callers)

__all__ = [
    "SaliencyConfig",
    "local_variance",
    "log_kernel",
    "log_energy",
    "blend_saliency",
    "compute_saliency",
]


@dataclass(frozen=True)
class SaliencyConfig:
    """Blend weight, variance window and LoG scale."""

    lambda_blend: float = 0.6
    var_window: int = 31
    log_sigma: float = 1.5

    def __post_init__(self):
        check_scalar(self.lambda_blend, "lambda_blend", minimum=0.0, maximum=1.0)
        check_scalar(self.var_window, "var_window", minimum=3, integral=True)
        if self.var_window % 2 == 0:
            raise ValueError(f"var_window must be odd, got {self.var_window}")
        check_scalar(self.log_sigma, "log_sigma", minimum=0.0, include_min=False)


def _window_sum_pair(arr: np.ndarray, rad: int):
    """Window sums of x and x^2 over (2*rad+1)^2 neighborhoods, reflect-padded.

    Built from the integral images of the padded array (one O(HW) pass, O(1)
    per window).  numpy's "symmetric" pad is the edge-repeating reflection.
    """
    padded = np.pad(arr, rad, mode="symmetric")
    sat, sqsat = cv2.integral2(padded, sdepth=cv2.CV_64F, sqdepth=cv2.CV_64F)
    side = 2 * rad + 1
    h, w = arr.shape

    def window(s):
        return (s[side:side + h, side:side + w]
                - s[:h, side:side + w]
                - s[side:side + h, :w]
                + s[:h, :w])

    return window(sat), window(sqsat)


def local_variance(img: np.ndarray, window: int) -> np.ndarray:
    """Per-pixel population variance over a centered window x window patch.

    Computed from integral images of x and x^2 (O(1) per pixel); borders are
    reflect-padded so every pixel sees a full window.
    """
    img = check_image(img)
    window = check_scalar(window, "window", minimum=3, integral=True)
    if window % 2 == 0:
        raise ValueError(f"window must be odd, got {window}")
    rad = window // 2
    inv_n = 1.0 / (window * window)
    # Shifting by the global mean conditions the sums; variance is shift
    # invariant, and constant images come out exactly zero.
    shifted = img - img.mean()
    s1, s2 = _window_sum_pair(shifted, rad)
    np.multiply(s1, inv_n, out=s1)
    np.multiply(s1, s1, out=s1)
    np.multiply(s2, inv_n, out=s2)
    np.subtract(s2, s1, out=s2)
    # Cancellation can leave tiny negatives on constant patches.
    np.maximum(s2, 0.0, out=s2)
    return s2


def log_kernel(sigma: float) -> np.ndarray:
    """Sampled Laplacian of the normalised 2-D Gaussian, zero-mean corrected.

    The kernel is evaluated on the integer grid [-R, R]^2 with R = ceil(3*sigma)
    and has its mean subtracted so the response to constants is exactly zero.
    """
    sigma = check_scalar(sigma, "sigma", minimum=0.0, include_min=False)
    r = int(np.ceil(3.0 * sigma))
    span = np.arange(-r, r + 1, dtype=np.float64)
    xx, yy = np.meshgrid(span, span)
    s2 = sigma * sigma
    norm = 1.0 / (2.0 * np.pi * s2)
    gauss = np.exp(-(xx * xx + yy * yy) / (2.0 * s2))
    kern = norm * ((xx * xx + yy * yy - 2.0 * s2) / (s2 * s2)) * gauss
    return kern - kern.mean()


def log_energy(img: np.ndarray, sigma: float) -> np.ndarray:
    """Squared response of convolution with :func:`log_kernel`, reflect-padded.

    Evaluated separably: the raw Laplacian splits into g''(x)g(y) + g(x)g''(y)
    rank-1 terms, and the zero-mean correction is a box sum; the result equals
    direct 2-D convolution with the corrected kernel.
    """
    img = check_image(img)
    sigma = check_scalar(sigma, "sigma", minimum=0.0, include_min=False)
    r = int(np.ceil(3.0 * sigma))
    span = np.arange(-r, r + 1, dtype=np.float64)
    s2 = sigma * sigma
    g = np.exp(-span * span / (2.0 * s2))
    g2 = ((span * span - s2) / (s2 * s2)) * g
    norm = 1.0 / (2.0 * np.pi * s2)

    # The raw Laplacian is the sum of two rank-1 separable terms (the Gaussian
    # normalisation is folded into one factor of each pair); BORDER_REFLECT is
    # the edge-repeating reflection.  Kernels are symmetric, so correlation
    # equals convolution.
    g2n = norm * g2
    response = cv2.sepFilter2D(img, cv2.CV_64F, g2n, g, borderType=cv2.BORDER_REFLECT)
    response += cv2.sepFilter2D(img, cv2.CV_64F, g, g2n, borderType=cv2.BORDER_REFLECT)

    # Zero-mean correction: subtracting the raw kernel's mean is, under
    # convolution, the mean times the local box sum.
    raw_mean = 2.0 * float(np.outer(g2n, g).mean())
    box_sum = cv2.boxFilter(img, cv2.CV_64F, (2 * r + 1, 2 * r + 1),
                            normalize=False, borderType=cv2.BORDER_REFLECT)
    box_sum *= raw_mean
    response -= box_sum
    np.multiply(response, response, out=response)
    return response


def blend_saliency(var_map: np.ndarray, log_map: np.ndarray, mask: np.ndarray,
                   lambda_blend: float) -> np.ndarray:
    """Combine normalised variance and edge-energy maps, zeroed off-mask.

    Each component is min-max normalised over mask pixels (a constant
    component normalises to all zeros); the blend is
    ``lambda * variance + (1 - lambda) * energy``.
    """
    var_map = np.asarray(var_map, dtype=np.float64)
    log_map = np.asarray(log_map, dtype=np.float64)
    check_same_shape(var_map, log_map, "saliency components")
    mask = check_mask(mask, shape=var_map.shape)
    lambda_blend = check_scalar(lambda_blend, "lambda_blend", minimum=0.0, maximum=1.0)

    out = np.zeros(var_map.shape, dtype=np.float64)
    if not mask.any():
        return out

    def norm_on_mask(vals: np.ndarray) -> np.ndarray:
        lo, hi = float(vals.min()), float(vals.max())
        if hi <= lo:
            return np.zeros(vals.shape, dtype=np.float64)
        return (vals - lo) / (hi - lo)

    # Only mask pixels survive, so normalise and blend on them alone.
    v_vals = norm_on_mask(var_map[mask])
    e_vals = norm_on_mask(log_map[mask])
    out[mask] = lambda_blend * v_vals + (1.0 - lambda_blend) * e_vals
    return out


def compute_saliency(img: np.ndarray, mask: np.ndarray,
                     cfg: SaliencyConfig = SaliencyConfig()) -> np.ndarray:
    """Variance + LoG-energy blend restricted to the tissue mask."""
    v = local_variance(img, cfg.var_window)
    e = log_energy(img, cfg.log_sigma)
    return blend_saliency(v, e, mask, cfg.lambda_blend)
