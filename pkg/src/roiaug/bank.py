"""Per-image ROI banks: sliding-window proposals scored by mean saliency.

Pipeline per image: tissue mask -> saliency map -> square sliding windows ->
mean-saliency scoring (integral image) -> area/aspect filtering -> greedy NMS
-> top-K with an enlarge-the-best-box padding fallback.  Banks are
deterministic for fixed inputs and serialise to JSON lines.

Boxes are center-form ``(cx, cy, w, h)`` in source-resolution pixel
coordinates.  The canonical integer footprint of a box is every pixel its
continuous extent overlaps: columns ``floor(cx - w/2) .. ceil(cx + w/2) - 1``
and likewise for rows, clipped to the image.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image, check_scalar
from .errors import BankParseError
from .raster import PixelRect
from .saliency import SaliencyConfig, compute_saliency
from .tissue import MaskConfig, build_tissue_mask, tissue_bounding_rect

__all__ = [
    "BBox",
    "ScoredBox",
    "BankConfig",
    "RoiBank",
    "box_pixel_rect",
    "clip_box_to_bounds",
    "generate_windows",
    "SaliencyIntegral",
    "score_window",
    "filter_proposals",
    "iou",
    "nms",
    "pad_bank",
    "config_hash",
    "build_bank",
    "write_bank",
    "write_banks",
    "read_bank",
    "read_banks",
    "RoiBankGenerator",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in center form; sides must be positive."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box sides must be positive, got {self.w}x{self.h}")

    @property
    def x0(self) -> float:
        return self.cx - self.w / 2.0

    @property
    def y0(self) -> float:
        return self.cy - self.h / 2.0

    @property
    def x1(self) -> float:
        return self.cx + self.w / 2.0

    @property
    def y1(self) -> float:
        return self.cy + self.h / 2.0

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class ScoredBox:
    """Box plus its mean-saliency score (non-negative)."""

    box: BBox
    score: float

    def __post_init__(self):
        if self.score < 0:
            raise ValueError(f"score must be >= 0, got {self.score}")


@dataclass(frozen=True)
class BankConfig:
    """Window, filtering, NMS and padding parameters for bank generation."""

    window_sizes: tuple = (192, 256, 320)
    stride: int = 64
    k: int = 5
    nms_iou: float = 0.5
    min_area_frac: float = 0.01
    max_area_frac: float = 0.20
    aspect_lo: float = 0.6
    aspect_hi: float = 1.6
    pad_scale_max: float = 1.25

    def __post_init__(self):
        object.__setattr__(self, "window_sizes", tuple(int(s) for s in self.window_sizes))
        if not self.window_sizes or any(s < 1 for s in self.window_sizes):
            raise ValueError(f"window_sizes must be positive, got {self.window_sizes}")
        check_scalar(self.stride, "stride", minimum=1, integral=True)
        check_scalar(self.k, "k", minimum=1, integral=True)
        check_scalar(self.nms_iou, "nms_iou", minimum=0.0, maximum=1.0,
                     include_min=False, include_max=False)
        if not (0 < self.min_area_frac < self.max_area_frac):
            raise ValueError("need 0 < min_area_frac < max_area_frac")
        if not (self.aspect_lo <= 1.0 <= self.aspect_hi):
            raise ValueError("aspect range must bracket 1.0")
        check_scalar(self.pad_scale_max, "pad_scale_max", minimum=1.0)


@dataclass(frozen=True)
class RoiBank:
    """Ordered, scored ROI boxes for one image.

    Scores are non-increasing; ``maskless`` banks carry no boxes.
    """

    image_id: str
    source_w: int
    source_h: int
    boxes: tuple = field(default_factory=tuple)
    maskless: bool = False
    k: int = 5
    config_hash: str = ""

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if len(self.boxes) > self.k:
            raise ValueError(f"bank holds {len(self.boxes)} boxes, exceeds K={self.k}")
        scores = [sb.score for sb in self.boxes]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("bank scores must be non-increasing")
        if self.maskless and self.boxes:
            raise ValueError("maskless bank must be empty")


def box_pixel_rect(box: BBox, width: int, height: int) -> PixelRect:
    """Canonical integer footprint of a box, clipped to the image.

    Raises ``ValueError`` if the clipped footprint is empty.
    """
    x0 = max(0, int(math.floor(box.x0)))
    y0 = max(0, int(math.floor(box.y0)))
    x1 = min(width, int(math.ceil(box.x1)))
    y1 = min(height, int(math.ceil(box.y1)))
    if x1 <= x0 or y1 <= y0:
        raise ValueError(f"box {box} has an empty footprint in {width}x{height}")
    return PixelRect(x0, y0, x1 - x0, y1 - y0)


def clip_box_to_bounds(box: BBox, x_lo: float, y_lo: float,
                       x_hi: float, y_hi: float) -> BBox:
    """Clip with shift-then-shrink semantics.

    Sides are capped to the bound extents, then the center is moved the
    minimum distance that brings the box inside; the shape is preserved
    whenever it fits.
    """
    span_x = x_hi - x_lo
    span_y = y_hi - y_lo
    w = min(box.w, span_x)
    h = min(box.h, span_y)
    cx = min(max(box.cx, x_lo + w / 2.0), x_hi - w / 2.0)
    cy = min(max(box.cy, y_lo + h / 2.0), y_hi - h / 2.0)
    return BBox(cx, cy, w, h)


def generate_windows(source_w: int, source_h: int, cfg: BankConfig) -> list:
    """Square sliding windows over the frame, final position edge-clamped.

    Sizes exceeding either image dimension are skipped.  Order is fixed:
    configured size order, then row-major over positions.
    """
    boxes = []
    for size in cfg.window_sizes:
        if size > source_w or size > source_h:
            continue
        xs = list(range(0, source_w - size + 1, cfg.stride))
        if xs[-1] != source_w - size:
            xs.append(source_w - size)
        ys = list(range(0, source_h - size + 1, cfg.stride))
        if ys[-1] != source_h - size:
            ys.append(source_h - size)
        half = size / 2.0
        for y0 in ys:
            for x0 in xs:
                boxes.append(BBox(x0 + half, y0 + half, float(size), float(size)))
    return boxes


class SaliencyIntegral:
    """Integral image over a saliency map for O(1) window means."""

    def __init__(self, s_map: np.ndarray):
        s_map = np.ascontiguousarray(s_map, dtype=np.float64)
        if s_map.ndim != 2:
            raise ValueError("saliency map must be 2-D")
        self.height, self.width = s_map.shape
        self._sat = cv2.integral(s_map, sdepth=cv2.CV_64F)

    def rect_sum(self, rect: PixelRect) -> float:
        s = self._sat
        x0, y0, x1, y1 = rect.x0, rect.y0, rect.x0 + rect.w, rect.y0 + rect.h
        return float(s[y1, x1] - s[y0, x1] - s[y1, x0] + s[y0, x0])

    def box_mean(self, box: BBox) -> float:
        rect = box_pixel_rect(box, self.width, self.height)
        # The map is non-negative; SAT cancellation can dip a hair below zero.
        return max(0.0, self.rect_sum(rect) / (rect.w * rect.h))


def score_window(s_map: np.ndarray, box: BBox) -> float:
    """Mean saliency over the box's integer footprint."""
    return SaliencyIntegral(s_map).box_mean(box)


def filter_proposals(cands: list, mask_area: float, cfg: BankConfig) -> list:
    """Keep boxes whose area fraction of the mask and aspect ratio are in range."""
    if mask_area <= 0:
        raise ValueError(f"mask_area must be positive, got {mask_area}")
    kept = []
    for sb in cands:
        frac = sb.box.area / mask_area
        aspect = sb.box.w / sb.box.h
        if cfg.min_area_frac <= frac <= cfg.max_area_frac and \
                cfg.aspect_lo <= aspect <= cfg.aspect_hi:
            kept.append(sb)
    return kept


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union in continuous coordinates."""
    ix = min(a.x1, b.x1) - max(a.x0, b.x0)
    iy = min(a.y1, b.y1) - max(a.y0, b.y0)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def _nms_key(sb: ScoredBox):
    # Ties break toward smaller cy, then cx, then w, for cross-run determinism.
    return (-sb.score, sb.box.cy, sb.box.cx, sb.box.w)


def nms(cands: list, iou_thresh: float, limit: int = None) -> list:
    """Greedy non-maximum suppression; suppresses strictly above the threshold.

    ``limit`` stops the scan after that many boxes are kept; the result equals
    the unlimited run truncated to ``limit``, since greedy selections never
    depend on later ones.
    """
    cands = list(cands)
    order = sorted(range(len(cands)), key=lambda i: _nms_key(cands[i]))
    if not order:
        return []
    x0 = np.array([cands[i].box.x0 for i in order])
    y0 = np.array([cands[i].box.y0 for i in order])
    x1 = np.array([cands[i].box.x1 for i in order])
    y1 = np.array([cands[i].box.y1 for i in order])
    area = (x1 - x0) * (y1 - y0)
    alive = np.ones(len(order), dtype=bool)
    kept = []
    for pos in range(len(order)):
        if not alive[pos]:
            continue
        kept.append(cands[order[pos]])
        if limit is not None and len(kept) >= limit:
            break
        ix = np.minimum(x1[pos], x1) - np.maximum(x0[pos], x0)
        iy = np.minimum(y1[pos], y1) - np.maximum(y0[pos], y0)
        inter = np.where((ix > 0) & (iy > 0), ix * iy, 0.0)
        overlap = inter / (area[pos] + area - inter)
        alive &= ~(overlap > iou_thresh)
    return kept


def pad_bank(kept: list, mask_rect: PixelRect, cfg: BankConfig) -> list:
    """Top up a short bank by enlarging the best box, clipped to the mask rect.

    Five evenly spaced scale factors up to ``pad_scale_max`` are tried in
    order; copies nearly identical to an existing box (IoU > 0.95) are
    skipped.  Padded boxes inherit the best box's score.
    """
    if not kept:
        raise ValueError("cannot pad an empty bank")
    out = list(kept)
    best = kept[0]
    x_lo, y_lo = float(mask_rect.x0), float(mask_rect.y0)
    x_hi, y_hi = x_lo + mask_rect.w, y_lo + mask_rect.h
    for step in range(1, 6):
        if len(out) >= cfg.k:
            break
        factor = 1.0 + (cfg.pad_scale_max - 1.0) * step / 5.0
        grown = BBox(best.box.cx, best.box.cy, best.box.w * factor, best.box.h * factor)
        clipped = clip_box_to_bounds(grown, x_lo, y_lo, x_hi, y_hi)
        if any(iou(clipped, sb.box) > 0.95 for sb in out):
            continue
        out.append(ScoredBox(clipped, best.score))
    return out


def config_hash(mask_cfg: MaskConfig, sal_cfg: SaliencyConfig, bank_cfg: BankConfig) -> str:
    """Hex digest of the canonical serialisation of all three configs."""
    payload = {
        "mask": {
            "min_component_frac": mask_cfg.min_component_frac,
            "closing_radius": mask_cfg.closing_radius,
            "histogram_bins": mask_cfg.histogram_bins,
        },
        "saliency": {
            "lambda_blend": sal_cfg.lambda_blend,
            "var_window": sal_cfg.var_window,
            "log_sigma": sal_cfg.log_sigma,
        },
        "bank": {
            "window_sizes": list(bank_cfg.window_sizes),
            "stride": bank_cfg.stride,
            "k": bank_cfg.k,
            "nms_iou": bank_cfg.nms_iou,
            "min_area_frac": bank_cfg.min_area_frac,
            "max_area_frac": bank_cfg.max_area_frac,
            "aspect_lo": bank_cfg.aspect_lo,
            "aspect_hi": bank_cfg.aspect_hi,
            "pad_scale_max": bank_cfg.pad_scale_max,
        },
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def _masked_saliency(img: np.ndarray, mask: np.ndarray,
                     sal_cfg: SaliencyConfig) -> np.ndarray:
    """Saliency computed on the tissue bounding box, pasted into a zero frame.

    The box is expanded by the largest filter radius, so every mask pixel sees
    exactly the window content it would see in a full-frame computation; all
    off-mask values are zero either way.
    """
    h, w = img.shape
    margin = max(sal_cfg.var_window // 2, int(np.ceil(3.0 * sal_cfg.log_sigma)))
    rect = tissue_bounding_rect(mask)
    x0 = max(0, rect.x0 - margin)
    y0 = max(0, rect.y0 - margin)
    x1 = min(w, rect.x0 + rect.w + margin)
    y1 = min(h, rect.y0 + rect.h + margin)
    if (x1 - x0) * (y1 - y0) >= 0.8 * mask.size:
        return compute_saliency(img, mask, sal_cfg)
    sub = compute_saliency(np.ascontiguousarray(img[y0:y1, x0:x1]),
                           np.ascontiguousarray(mask[y0:y1, x0:x1]), sal_cfg)
    s_map = np.zeros(img.shape, dtype=np.float64)
    s_map[y0:y1, x0:x1] = sub
    return s_map


def build_bank(img: np.ndarray, image_id: str,
               mask_cfg: MaskConfig = MaskConfig(),
               sal_cfg: SaliencyConfig = SaliencyConfig(),
               bank_cfg: BankConfig = BankConfig()) -> RoiBank:
    """Run the full deterministic bank pipeline for one image."""
    img = check_image(img)
    source_h, source_w = img.shape
    digest = config_hash(mask_cfg, sal_cfg, bank_cfg)
    mask, maskless = build_tissue_mask(img, mask_cfg)
    if maskless:
        return RoiBank(image_id, source_w, source_h, (), True, bank_cfg.k, digest)

    s_map = _masked_saliency(img, mask, sal_cfg)
    integral = SaliencyIntegral(s_map)
    scored = [ScoredBox(b, integral.box_mean(b))
              for b in generate_windows(source_w, source_h, bank_cfg)]
    mask_area = int(np.count_nonzero(mask))
    filtered = filter_proposals(scored, mask_area, bank_cfg)
    kept = nms(filtered, bank_cfg.nms_iou, limit=bank_cfg.k)
    if kept and len(kept) < bank_cfg.k:
        kept = pad_bank(kept, tissue_bounding_rect(mask), bank_cfg)
    return RoiBank(image_id, source_w, source_h, tuple(kept), False,
                   bank_cfg.k, digest)


# --- serialisation -----------------------------------------------------------

def _score_repr(score: float) -> float:
    # Scores carry 9 significant digits in the file format.
    return float(f"{score:.9g}")


def _bank_to_obj(bank: RoiBank) -> dict:
    return {
        "image_id": bank.image_id,
        "source_w": bank.source_w,
        "source_h": bank.source_h,
        "maskless": bank.maskless,
        "boxes": [
            {"cx": sb.box.cx, "cy": sb.box.cy, "w": sb.box.w, "h": sb.box.h,
             "score": _score_repr(sb.score)}
            for sb in bank.boxes
        ],
        "k": bank.k,
        "config_hash": bank.config_hash,
    }


_BANK_KEYS = {"image_id", "source_w", "source_h", "maskless", "boxes", "k", "config_hash"}
_BOX_KEYS = {"cx", "cy", "w", "h", "score"}


def _bank_from_obj(obj: dict, line: int) -> RoiBank:
    if not isinstance(obj, dict):
        raise BankParseError("bank entry is not a JSON object", line=line)
    missing = _BANK_KEYS - obj.keys()
    if missing:
        raise BankParseError(f"missing keys {sorted(missing)}", line=line)
    extra = obj.keys() - _BANK_KEYS
    if extra:
        raise BankParseError(f"unknown keys {sorted(extra)}", line=line)
    k = obj["k"]
    boxes_raw = obj["boxes"]
    if not isinstance(boxes_raw, list):
        raise BankParseError("boxes must be a list", line=line, field="boxes")
    if len(boxes_raw) > k:
        raise BankParseError("bank exceeds K", line=line, field="boxes")
    boxes = []
    for entry in boxes_raw:
        if not isinstance(entry, dict) or entry.keys() != _BOX_KEYS:
            raise BankParseError("malformed box entry", line=line, field="boxes")
        try:
            boxes.append(ScoredBox(
                BBox(float(entry["cx"]), float(entry["cy"]),
                     float(entry["w"]), float(entry["h"])),
                float(entry["score"])))
        except (TypeError, ValueError) as exc:
            raise BankParseError(str(exc), line=line, field="boxes") from exc
    try:
        return RoiBank(str(obj["image_id"]), int(obj["source_w"]), int(obj["source_h"]),
                       tuple(boxes), bool(obj["maskless"]), int(k),
                       str(obj["config_hash"]))
    except (TypeError, ValueError) as exc:
        raise BankParseError(str(exc), line=line) from exc


def write_banks(banks, path) -> None:
    """Write banks as JSON lines, atomically (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(path.name + f".tmp{os.getpid()}")
    with open(tmp, "w", encoding="utf-8") as fh:
        for bank in banks:
            fh.write(json.dumps(_bank_to_obj(bank), separators=(",", ":")))
            fh.write("\n")
    os.replace(tmp, path)


def write_bank(bank: RoiBank, path) -> None:
    """Write a single bank as a one-line JSON-lines file."""
    write_banks([bank], path)


def read_banks(path) -> list:
    """Parse a JSON-lines bank file, enforcing all bank invariants."""
    banks = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise BankParseError(f"invalid JSON: {exc.msg}", line=lineno) from exc
            banks.append(_bank_from_obj(obj, lineno))
    return banks


def read_bank(path) -> RoiBank:
    """Read a bank file that must contain exactly one entry."""
    banks = read_banks(path)
    if len(banks) != 1:
        raise BankParseError(f"expected exactly one bank entry, found {len(banks)}")
    return banks[0]


class RoiBankGenerator(BaseEstimator, TransformerMixin):
    """sklearn-style transformer: grayscale images in, ROI banks out.

    Flattens the mask, saliency and bank configs into estimator parameters so
    the generator composes with ``get_params``/``set_params``/``clone``.
    ``transform`` accepts an iterable of ``(image_id, image)`` pairs (bare
    images get positional ids) and returns a list of :class:`RoiBank`.
    """

    def __init__(self, min_component_frac=0.005, closing_radius=7, histogram_bins=256,
                 lambda_blend=0.6, var_window=31, log_sigma=1.5,
                 window_sizes=(192, 256, 320), stride=64, k=5, nms_iou=0.5,
                 min_area_frac=0.01, max_area_frac=0.20,
                 aspect_lo=0.6, aspect_hi=1.6, pad_scale_max=1.25):
        self.min_component_frac = min_component_frac
        self.closing_radius = closing_radius
        self.histogram_bins = histogram_bins
        self.lambda_blend = lambda_blend
        self.var_window = var_window
        self.log_sigma = log_sigma
        self.window_sizes = window_sizes
        self.stride = stride
        self.k = k
        self.nms_iou = nms_iou
        self.min_area_frac = min_area_frac
        self.max_area_frac = max_area_frac
        self.aspect_lo = aspect_lo
        self.aspect_hi = aspect_hi
        self.pad_scale_max = pad_scale_max

    def configs(self):
        mask_cfg = MaskConfig(self.min_component_frac, self.closing_radius,
                              self.histogram_bins)
        sal_cfg = SaliencyConfig(self.lambda_blend, self.var_window, self.log_sigma)
        bank_cfg = BankConfig(self.window_sizes, self.stride, self.k, self.nms_iou,
                              self.min_area_frac, self.max_area_frac,
                              self.aspect_lo, self.aspect_hi, self.pad_scale_max)
        return mask_cfg, sal_cfg, bank_cfg

    def fit(self, X=None, y=None):
        self.configs()  # validate parameters
        return self

    def generate(self, img, image_id: str) -> RoiBank:
        mask_cfg, sal_cfg, bank_cfg = self.configs()
        return build_bank(img, image_id, mask_cfg, sal_cfg, bank_cfg)

    def transform(self, X) -> list:
        out = []
        for i, item in enumerate(X):
            if isinstance(item, tuple) and len(item) == 2:
                image_id, img = item
            else:
                image_id, img = str(i), item
            out.append(self.generate(img, str(image_id)))
        return out
