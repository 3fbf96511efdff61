"""Training-time stochastic ROI replacement.

With probability ``p_roi`` an image is replaced by a jittered crop drawn from
its ROI bank; otherwise the tissue-cropped full image passes through.  Both
paths resize to ``out_size`` squared.  Randomness comes exclusively from an
explicit :class:`~roiaug.rng.UniformStream`; the draw order per sample is
pinned (replacement gate, then per attempt: bank index, eps_w, eps_h, eps_x,
eps_y) so decision streams replay bit-identically across runs and consumers.

Evaluation pipelines must never call :func:`augment_one`; ROI replacement is a
training-only mechanism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image, check_mask, check_scalar
from .bank import BBox, RoiBank, box_pixel_rect, clip_box_to_bounds
from .errors import EmptyMaskError
from .raster import PixelRect, crop, resize_bilinear
from .rng import UniformStream
from .tissue import tissue_bounding_rect

__all__ = [
    "SamplerConfig",
    "AugmentOutcome",
    "jitter_box",
    "clip_box",
    "tissue_overlap",
    "sample_roi_crop",
    "augment_one",
    "outcome_audit_obj",
    "write_audit_log",
    "read_audit_log",
    "RoiCropSampler",
]


@dataclass(frozen=True)
class SamplerConfig:
    """Replacement probability, jitter amplitude and crop policy."""

    p_roi: float = 0.10
    alpha: float = 0.1
    out_size: int = 640
    min_tissue_overlap: float = 0.5
    max_retries: int = 5
    seed: int = 0

    def __post_init__(self):
        check_scalar(self.p_roi, "p_roi", minimum=0.0, maximum=1.0)
        check_scalar(self.alpha, "alpha", minimum=0.0, maximum=1.0, include_max=False)
        check_scalar(self.out_size, "out_size", minimum=1, integral=True)
        check_scalar(self.min_tissue_overlap, "min_tissue_overlap",
                     minimum=0.0, maximum=1.0)
        check_scalar(self.max_retries, "max_retries", minimum=0, integral=True)
        check_scalar(self.seed, "seed", integral=True)


@dataclass(frozen=True)
class AugmentOutcome:
    """Audit record of one augmentation decision plus the emitted image."""

    image: np.ndarray
    used_roi: bool
    chosen_box: Optional[BBox]
    retries_used: int

    def __post_init__(self):
        if not self.used_roi and self.chosen_box is not None:
            raise ValueError("full-image outcomes carry no chosen box")


def jitter_box(box: BBox, alpha: float, stream: UniformStream) -> BBox:
    """Perturb scale and translation by uniform draws in (-alpha, alpha).

    Exactly four draws are consumed, in the order eps_w, eps_h, eps_x, eps_y,
    even when ``alpha == 0``.  Translation offsets scale with the original box
    size.  The result is not clipped.
    """
    check_scalar(alpha, "alpha", minimum=0.0)
    eps_w = stream.symmetric(alpha)
    eps_h = stream.symmetric(alpha)
    eps_x = stream.symmetric(alpha)
    eps_y = stream.symmetric(alpha)
    return BBox(box.cx + eps_x * box.w, box.cy + eps_y * box.h,
                box.w * (1.0 + eps_w), box.h * (1.0 + eps_h))


def clip_box(box: BBox, source_w: int, source_h: int) -> BBox:
    """Clip to image bounds: cap sides, then shift the center minimally."""
    if source_w < 1 or source_h < 1:
        raise ValueError(f"image size must be positive, got {source_w}x{source_h}")
    return clip_box_to_bounds(box, 0.0, 0.0, float(source_w), float(source_h))


def tissue_overlap(box: BBox, mask: np.ndarray) -> float:
    """Fraction of the box's integer footprint covered by mask pixels."""
    mask = check_mask(mask)
    h, w = mask.shape
    rect = box_pixel_rect(box, w, h)
    window = mask[rect.y0:rect.y0 + rect.h, rect.x0:rect.x0 + rect.w]
    return float(np.count_nonzero(window)) / float(rect.w * rect.h)


def _crop_resize(img: np.ndarray, rect: PixelRect, out_size: int) -> np.ndarray:
    return resize_bilinear(crop(img, rect), out_size, out_size)


def sample_roi_crop(img: np.ndarray, mask: np.ndarray, bank: RoiBank,
                    cfg: SamplerConfig, stream: UniformStream) -> AugmentOutcome:
    """Draw one jittered ROI crop, resampling on insufficient tissue overlap.

    Each attempt consumes five draws (index + four jitter epsilons).  After
    ``max_retries`` failed redraws the unjittered, clipped best box is used.
    """
    if not bank.boxes:
        raise ValueError("cannot sample from an empty bank")
    img = check_image(img)
    h, w = img.shape
    mask = check_mask(mask, shape=img.shape)

    chosen = None
    retries = 0
    for attempt in range(cfg.max_retries + 1):
        idx = stream.index(len(bank.boxes))
        candidate = clip_box(jitter_box(bank.boxes[idx].box, cfg.alpha, stream), w, h)
        if tissue_overlap(candidate, mask) >= cfg.min_tissue_overlap:
            chosen = candidate
            retries = attempt
            break
    if chosen is None:
        chosen = clip_box(bank.boxes[0].box, w, h)
        retries = cfg.max_retries

    rect = box_pixel_rect(chosen, w, h)
    return AugmentOutcome(_crop_resize(img, rect, cfg.out_size), True, chosen, retries)


def augment_one(img: np.ndarray, mask: np.ndarray, bank: Optional[RoiBank],
                cfg: SamplerConfig, stream: UniformStream) -> AugmentOutcome:
    """One training sample: ROI replacement with probability ``p_roi``.

    The replacement gate consumes one draw.  The full-image path crops to the
    tissue bounding rectangle first (maskless images keep the whole frame),
    then resizes; it consumes no further draws.
    """
    img = check_image(img)
    h, w = img.shape
    mask = check_mask(mask, shape=img.shape)

    use_roi = stream.gate(cfg.p_roi) and bank is not None and len(bank.boxes) > 0
    if use_roi:
        return sample_roi_crop(img, mask, bank, cfg, stream)

    try:
        rect = tissue_bounding_rect(mask)
    except EmptyMaskError:
        rect = PixelRect(0, 0, w, h)
    return AugmentOutcome(_crop_resize(img, rect, cfg.out_size), False, None, 0)


# --- audit log ---------------------------------------------------------------

def outcome_audit_obj(image_id: str, sample: int, outcome: AugmentOutcome,
                      seed: int, stream: int) -> dict:
    """JSON-ready audit row for one outcome (image excluded)."""
    box = outcome.chosen_box
    return {
        "image_id": image_id,
        "sample": sample,
        "seed": int(seed),
        "stream": int(stream),
        "used_roi": outcome.used_roi,
        "chosen_box": None if box is None else
            {"cx": box.cx, "cy": box.cy, "w": box.w, "h": box.h},
        "retries_used": outcome.retries_used,
    }


def write_audit_log(rows, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")))
            fh.write("\n")


def read_audit_log(path) -> list:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


class RoiCropSampler(BaseEstimator, TransformerMixin):
    """sklearn-style wrapper over :func:`augment_one`.

    ``transform`` takes an iterable of ``(image, mask, bank)`` triples and
    yields one :class:`AugmentOutcome` per record, each on its own stream
    derived from ``seed`` and the record's position, so outcomes do not depend
    on batching or worker count.
    """

    def __init__(self, p_roi=0.10, alpha=0.1, out_size=640,
                 min_tissue_overlap=0.5, max_retries=5, seed=0):
        self.p_roi = p_roi
        self.alpha = alpha
        self.out_size = out_size
        self.min_tissue_overlap = min_tissue_overlap
        self.max_retries = max_retries
        self.seed = seed

    def config(self) -> SamplerConfig:
        return SamplerConfig(self.p_roi, self.alpha, self.out_size,
                             self.min_tissue_overlap, self.max_retries, self.seed)

    def fit(self, X=None, y=None):
        self.config()  # validate parameters
        return self

    def transform(self, X) -> list:
        cfg = self.config()
        out = []
        for i, (img, mask, bank) in enumerate(X):
            out.append(augment_one(img, mask, bank, cfg, UniformStream(cfg.seed, i)))
        return out
