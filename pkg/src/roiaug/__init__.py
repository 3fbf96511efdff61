"""ROI-bank generation, stochastic crop augmentation and evaluation statistics.

The package is organised around three sklearn-style entry points —
:class:`~roiaug.bank.RoiBankGenerator`, :class:`~roiaug.augment.RoiCropSampler`
and :class:`~roiaug.cohort.PatientGroupKFold` — backed by functional modules
for raster handling, tissue masking, saliency, banking, cohort bookkeeping and
metrics.  The ``roiaug`` CLI wires them into a batch pipeline.
"""

from .augment import AugmentOutcome, RoiCropSampler, SamplerConfig, augment_one
from .bank import (
    BankConfig,
    BBox,
    RoiBank,
    RoiBankGenerator,
    ScoredBox,
    build_bank,
    read_banks,
    write_banks,
)
from .cohort import FoldAssignment, ImageRecord, PatientGroupKFold, assign_folds
from .config import RunConfig, load_config
from .metrics import (
    MetricReport,
    Prediction,
    aggregate,
    bootstrap_ci,
    fold_mean_sd,
    pr_auc,
    roc_auc,
    wilcoxon_signed_rank,
)
from .raster import PixelRect, load_gray, resize_bilinear
from .rng import UniformStream
from .saliency import SaliencyConfig, compute_saliency
from .tissue import MaskConfig, TissueMasker, build_tissue_mask

__version__ = "0.1.0"

__all__ = [
    "AugmentOutcome",
    "BankConfig",
    "BBox",
    "FoldAssignment",
    "ImageRecord",
    "MaskConfig",
    "MetricReport",
    "PatientGroupKFold",
    "PixelRect",
    "Prediction",
    "RoiBank",
    "RoiBankGenerator",
    "RoiCropSampler",
    "RunConfig",
    "SaliencyConfig",
    "SamplerConfig",
    "ScoredBox",
    "TissueMasker",
    "UniformStream",
    "aggregate",
    "assign_folds",
    "augment_one",
    "bootstrap_ci",
    "build_bank",
    "build_tissue_mask",
    "compute_saliency",
    "fold_mean_sd",
    "load_config",
    "load_gray",
    "pr_auc",
    "read_banks",
    "resize_bilinear",
    "roc_auc",
    "wilcoxon_signed_rank",
    "write_banks",
]
