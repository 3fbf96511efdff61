"""Run configuration: one TOML document covering every pipeline stage.

Defaults equal the published pipeline defaults.  Unknown keys are rejected so
config drift fails loudly.  A single top-level ``seed`` feeds all stochastic
stages; ``--set section.key=value`` overrides individual entries.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - version-dependent import
    import tomli as tomllib

from .augment import SamplerConfig
from .bank import BankConfig
from .saliency import SaliencyConfig
from .tissue import MaskConfig

__all__ = ["RunConfig", "load_config", "apply_overrides"]

_SECTION_FIELDS = {
    "mask": ("min_component_frac", "closing_radius", "histogram_bins"),
    "saliency": ("lambda_blend", "var_window", "log_sigma"),
    "bank": ("window_sizes", "stride", "k", "nms_iou", "min_area_frac",
             "max_area_frac", "aspect_lo", "aspect_hi", "pad_scale_max"),
    "sampler": ("p_roi", "alpha", "out_size", "min_tissue_overlap", "max_retries"),
    "split": ("n_folds",),
}
_TOP_KEYS = {"seed"} | set(_SECTION_FIELDS)


@dataclass(frozen=True)
class RunConfig:
    mask: MaskConfig = MaskConfig()
    saliency: SaliencyConfig = SaliencyConfig()
    bank: BankConfig = BankConfig()
    sampler: SamplerConfig = SamplerConfig(seed=0)
    n_folds: int = 4
    seed: int = 0

    def with_seed(self, seed: int) -> "RunConfig":
        sampler = SamplerConfig(self.sampler.p_roi, self.sampler.alpha,
                                self.sampler.out_size, self.sampler.min_tissue_overlap,
                                self.sampler.max_retries, seed)
        return RunConfig(self.mask, self.saliency, self.bank, sampler,
                         self.n_folds, seed)


def _check_keys(doc: dict) -> None:
    unknown = set(doc) - _TOP_KEYS
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for section, fields in _SECTION_FIELDS.items():
        entries = doc.get(section, {})
        if not isinstance(entries, dict):
            raise ValueError(f"config section [{section}] must be a table")
        bad = set(entries) - set(fields)
        if bad:
            raise ValueError(f"unknown keys in [{section}]: {sorted(bad)}")


def _build(doc: dict) -> RunConfig:
    _check_keys(doc)
    seed = int(doc.get("seed", 0))
    mask = MaskConfig(**doc.get("mask", {}))
    sal = SaliencyConfig(**doc.get("saliency", {}))
    bank = BankConfig(**doc.get("bank", {}))
    sampler = SamplerConfig(**doc.get("sampler", {}), seed=seed)
    n_folds = int(doc.get("split", {}).get("n_folds", 4))
    return RunConfig(mask, sal, bank, sampler, n_folds, seed)


def load_config(path=None, overrides=()) -> RunConfig:
    """Load a TOML config file (or pure defaults) and apply overrides."""
    if path is None:
        doc: dict = {}
    else:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    doc = apply_overrides(doc, overrides)
    return _build(doc)


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply ``section.key=value`` (or ``key=value``) strings onto a config dict.

    Values are parsed as TOML literals, falling back to bare strings.
    """
    doc = {k: (dict(v) if isinstance(v, dict) else v) for k, v in doc.items()}
    for item in overrides:
        if "=" not in item:
            raise ValueError(f"override must look like key=value, got {item!r}")
        key, raw = item.split("=", 1)
        key = key.strip()
        try:
            value = tomllib.loads(f"v = {raw.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = raw.strip()
        parts = key.split(".")
        if len(parts) == 1:
            doc[parts[0]] = value
        elif len(parts) == 2:
            doc.setdefault(parts[0], {})
            if not isinstance(doc[parts[0]], dict):
                raise ValueError(f"cannot override scalar {parts[0]!r} with a table key")
            doc[parts[0]][parts[1]] = value
        else:
            raise ValueError(f"override key must have at most one dot: {key!r}")
    return doc
