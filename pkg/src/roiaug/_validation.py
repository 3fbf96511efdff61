"""Input validation helpers.

Images are plain 2-D float arrays with intensities in [0, 1]; masks are 2-D
boolean arrays.  These checks normalise dtype/layout once at API boundaries so
the numeric code can assume clean inputs.
"""

from __future__ import annotations

import numbers

import numpy as np

__all__ = ["check_image", "check_mask", "check_same_shape", "check_scalar"]


def check_image(img, name: str = "img") -> np.ndarray:
    """Validate a grayscale image: 2-D, finite, values in [0, 1].

    Returns a C-contiguous float64 view/copy of the input.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have positive dimensions, got {arr.shape}")
    lo, hi = float(arr.min()), float(arr.max())
    # NaN poisons min/max, so this single comparison also rejects non-finite.
    if not (0.0 <= lo and hi <= 1.0):
        raise ValueError(f"{name} intensities must lie in [0, 1], got [{lo}, {hi}]")
    return np.ascontiguousarray(arr)


def check_mask(mask, name: str = "mask", shape=None) -> np.ndarray:
    """Validate a binary mask: 2-D boolean, optionally of a required shape."""
    arr = np.asarray(mask)
    if arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError(f"{name} must be boolean or 0/1-valued")
        arr = arr.astype(bool)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match required {tuple(shape)}")
    return np.ascontiguousarray(arr)


def check_same_shape(a: np.ndarray, b: np.ndarray, names: str = "inputs") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{names} must share dimensions, got {a.shape} vs {b.shape}")


def check_scalar(value, name: str, *, minimum=None, maximum=None,
                 include_min: bool = True, include_max: bool = True,
                 integral: bool = False):
    """Range-check a numeric parameter and return it as int or float."""
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise ValueError(f"{name} must be a real number, got {value!r}")
    if integral:
        if float(value) != int(value):
            raise ValueError(f"{name} must be an integer, got {value!r}")
        value = int(value)
    else:
        value = float(value)
    if minimum is not None:
        ok = value >= minimum if include_min else value > minimum
        if not ok:
            op = ">=" if include_min else ">"
            raise ValueError(f"{name} must be {op} {minimum}, got {value}")
    if maximum is not None:
        ok = value <= maximum if include_max else value < maximum
        if not ok:
            op = "<=" if include_max else "<"
            raise ValueError(f"{name} must be {op} {maximum}, got {value}")
    return value
