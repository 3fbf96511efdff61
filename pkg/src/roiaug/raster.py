"""Grayscale raster I/O, normalisation, resizing and cropping.

An image is a 2-D ``float64`` array with intensities in ``[0, 1]``, row-major,
origin at the top-left, x growing right and y growing down.  Interpolation uses
half-pixel centers: output pixel ``j`` samples source coordinate
``(j + 0.5) * in / out - 0.5``.

Supported containers are PNG (8/16-bit grayscale, 8-bit RGB) and binary PGM
(P5, maxval up to 65535).  PGM is the fixture format because its byte layout is
trivially reproducible.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from ._validation import check_image
from .errors import ImageFormatError

__all__ = [
    "PixelRect",
    "load_gray",
    "save_pgm",
    "save_png",
    "resize_bilinear",
    "crop",
]

# BT.601 luminance weights, pinned for deterministic RGB conversion.
_LUMA_WEIGHTS = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class PixelRect:
    """Integer pixel rectangle: top-left inclusive, ``w``/``h`` >= 1."""

    x0: int
    y0: int
    w: int
    h: int

    def __post_init__(self):
        if self.w < 1 or self.h < 1:
            raise ValueError(f"rect sides must be >= 1, got {self.w}x{self.h}")
        if self.x0 < 0 or self.y0 < 0:
            raise ValueError(f"rect origin must be non-negative, got ({self.x0}, {self.y0})")

    def check_within(self, width: int, height: int) -> None:
        if self.x0 + self.w > width or self.y0 + self.h > height:
            raise ValueError(
                f"rect {self} exceeds image bounds {width}x{height}"
            )


def _read_pgm(path: Path) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ImageFormatError(f"{path}: not a binary PGM (magic {data[:2]!r})")
    # Header: magic, width, height, maxval; '#' comments allowed between tokens.
    tokens = []
    pos = 2
    while len(tokens) < 3:
        m = re.compile(rb"\s*(?:#[^\n]*\n)*\s*(\d+)").match(data, pos)
        if m is None:
            raise ImageFormatError(f"{path}: truncated PGM header")
        tokens.append(int(m.group(1)))
        pos = m.end()
    width, height, maxval = tokens
    pos += 1  # single whitespace byte after maxval
    if maxval < 1 or maxval > 65535:
        raise ImageFormatError(f"{path}: unsupported PGM maxval {maxval}")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    if len(data) - pos < count * dtype.itemsize:
        raise ImageFormatError(f"{path}: PGM pixel payload shorter than {width}x{height}")
    raw = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
    return raw.reshape(height, width) / np.float64(maxval)


def _read_pil(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            return np.asarray(im, dtype=np.float64) / 255.0
        if mode in ("I;16", "I;16B", "I;16L"):
            return np.asarray(im, dtype=np.float64) / 65535.0
        if mode == "I":
            arr = np.asarray(im, dtype=np.float64)
            if arr.max(initial=0.0) > 65535:
                raise ImageFormatError(f"{path}: integer image exceeds 16-bit range")
            return arr / 65535.0
        if mode == "RGB":
            arr = np.asarray(im, dtype=np.float64) / 255.0
            r, g, b = _LUMA_WEIGHTS
            return r * arr[..., 0] + g * arr[..., 1] + b * arr[..., 2]
        raise ImageFormatError(f"{path}: unsupported image mode '{mode}'")


def load_gray(path) -> np.ndarray:
    """Load a raster file as a grayscale image in ``[0, 1]``.

    Integer intensities are divided by the container's stated maximum
    (255/65535 for PNG, the header maxval for PGM).  RGB inputs are reduced by
    BT.601 luminance weighting.

    Raises
    ------
    OSError
        If the file is missing or unreadable.
    ImageFormatError
        For unsupported containers, modes or bit depths.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such image file: {path}")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P5":
        return _read_pgm(path)
    img = _read_pil(path)
    # Luminance blending can overshoot by a few ulps; clamp before validation.
    np.clip(img, 0.0, 1.0, out=img)
    return np.ascontiguousarray(img)


def save_pgm(img: np.ndarray, path, maxval: int = 255) -> None:
    """Write a [0, 1] image as binary PGM (P5), maxval 255 or 65535."""
    img = check_image(img)
    if maxval not in (255, 65535):
        raise ValueError(f"maxval must be 255 or 65535, got {maxval}")
    h, w = img.shape
    quant = np.rint(img * maxval)
    data = quant.astype(np.uint8 if maxval == 255 else ">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(data.tobytes())


def save_png(img: np.ndarray, path) -> None:
    """Write a [0, 1] image as 8-bit grayscale PNG."""
    img = check_image(img)
    Image.fromarray(np.rint(img * 255.0).astype(np.uint8), mode="L").save(path)


def crop(img: np.ndarray, rect: PixelRect) -> np.ndarray:
    """Return the subimage under ``rect`` with no resampling."""
    img = np.asarray(img)
    h, w = img.shape
    rect.check_within(w, h)
    return np.ascontiguousarray(img[rect.y0:rect.y0 + rect.h, rect.x0:rect.x0 + rect.w])


def resize_bilinear(img: np.ndarray, out_w: int, out_h: int) -> np.ndarray:
    """Resize with bilinear interpolation and half-pixel-center mapping.

    Sampling coordinates are clamped to the valid range, so border pixels are
    effectively edge-replicated.  Output intensities stay within the input's
    [min, max] envelope.
    """
    if out_w < 1 or out_h < 1:
        raise ValueError(f"target size must be >= 1, got {out_w}x{out_h}")
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    if (out_w, out_h) == (in_w, in_h):
        return img.copy()

    def axis_coords(n_out: int, n_in: int):
        src = (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1.0)
        lo = np.floor(src).astype(np.intp)
        lo = np.minimum(lo, n_in - 2) if n_in > 1 else np.zeros(n_out, dtype=np.intp)
        frac = src - lo
        return lo, frac

    if in_w > 1:
        x0, fx = axis_coords(out_w, in_w)
    else:
        x0, fx = np.zeros(out_w, dtype=np.intp), np.zeros(out_w)
    if in_h > 1:
        y0, fy = axis_coords(out_h, in_h)
    else:
        y0, fy = np.zeros(out_h, dtype=np.intp), np.zeros(out_h)

    x1 = np.minimum(x0 + 1, in_w - 1)
    y1 = np.minimum(y0 + 1, in_h - 1)
    fx = fx[np.newaxis, :]
    fy = fy[:, np.newaxis]

    top = img[y0[:, None], x0[None, :]] * (1.0 - fx) + img[y0[:, None], x1[None, :]] * fx
    bot = img[y1[:, None], x0[None, :]] * (1.0 - fx) + img[y1[:, None], x1[None, :]] * fx
    return top * (1.0 - fy) + bot * fy
