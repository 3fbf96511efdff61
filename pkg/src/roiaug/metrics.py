"""Ranking metrics, aggregation, bootstrap intervals and the paired Wilcoxon test.

ROC-AUC uses the Mann-Whitney midrank formulation; PR-AUC is average precision
with tied scores processed as one block.  Bootstrap intervals are percentile
intervals over patient resamples.  The signed-rank test is exact (full
enumeration of sign assignments) for up to 25 pairs.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import DegenerateTestError, UndefinedMetricError

__all__ = [
    "Prediction",
    "MetricReport",
    "aggregate",
    "roc_auc",
    "pr_auc",
    "bootstrap_ci",
    "fold_mean_sd",
    "wilcoxon_signed_rank",
    "read_predictions_csv",
    "write_predictions_csv",
]

PREDICTION_COLUMNS = ("unit_id", "patient_id", "side", "view", "score", "label")


@dataclass(frozen=True)
class Prediction:
    """One scored unit at some aggregation level."""

    unit_id: str
    score: float
    label: int
    patient_id: str = ""
    side: str = ""
    view: str = ""

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise ValueError(f"score must lie in [0, 1], got {self.score}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0/1, got {self.label}")


@dataclass(frozen=True)
class MetricReport:
    roc_auc: float
    pr_auc: float
    ci_low: float
    ci_high: float
    n_pos: int
    n_neg: int
    level: str


def aggregate(preds, level: str):
    """Average view scores per breast or per patient; label is the group OR.

    Output is sorted by unit id, so metric results never depend on input
    order.
    """
    if level not in ("breast", "patient"):
        raise ValueError(f"level must be breast/patient, got {level!r}")
    if not preds:
        raise ValueError("cannot aggregate an empty prediction list")
    groups: dict = {}
    for p in preds:
        if not p.patient_id:
            raise ValueError(f"prediction {p.unit_id} lacks a patient id")
        key = p.patient_id if level == "patient" else f"{p.patient_id}|{p.side}"
        groups.setdefault(key, []).append(p)
    out = []
    for key in sorted(groups):
        # Canonical member order makes the mean bitwise order-independent.
        members = sorted(groups[key], key=lambda m: m.unit_id)
        score = float(np.mean([m.score for m in members]))
        label = int(max(m.label for m in members))
        patient_id = members[0].patient_id
        side = members[0].side if level == "breast" else ""
        out.append(Prediction(key, score, label, patient_id=patient_id, side=side))
    return out


def _scores_labels(preds):
    scores = np.asarray([p.score for p in preds], dtype=np.float64)
    labels = np.asarray([p.label for p in preds], dtype=np.int64)
    return scores, labels


def roc_auc(preds) -> float:
    """Mann-Whitney ROC-AUC with midranks for tied scores."""
    scores, labels = _scores_labels(preds)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError(
            f"ROC-AUC needs both classes, got {n_pos} pos / {n_neg} neg")
    ranks = rankdata(scores, method="average")
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def pr_auc(preds) -> float:
    """Average precision over descending-score thresholds, ties as one block."""
    scores, labels = _scores_labels(preds)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise UndefinedMetricError("PR-AUC needs at least one positive")
    order = np.argsort(-scores, kind="stable")
    scores = scores[order]
    labels = labels[order]
    ap = 0.0
    tp = fp = 0
    prev_recall = 0.0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and scores[j] == scores[i]:
            j += 1
        tp += int(labels[i:j].sum())
        fp += (j - i) - int(labels[i:j].sum())
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
        i = j
    return ap


_METRICS = {"roc_auc": roc_auc, "pr_auc": pr_auc}


def bootstrap_ci(preds, metric: str = "roc_auc", n_boot: int = 1000,
                 level: float = 0.95, seed: int = 0):
    """Percentile bootstrap interval from unit resamples.

    Replicates draw units with replacement; each replicate's resampling
    stream derives from (seed, replicate index).  Single-class replicates are
    redrawn up to 10 times, then skipped with a warning.  Quantiles use the
    nearest-rank rule.
    """
    if metric not in _METRICS:
        raise ValueError(f"metric must be one of {sorted(_METRICS)}, got {metric!r}")
    fn = _METRICS[metric]
    fn(preds)  # must be computable on the full sample
    preds = list(preds)
    n = len(preds)
    values = []
    n_skipped = 0
    for rep in range(n_boot):
        rng = np.random.default_rng((seed, rep))
        value = None
        for _ in range(10):
            idx = rng.integers(0, n, size=n)
            sample = [preds[i] for i in idx]
            try:
                value = fn(sample)
            except UndefinedMetricError:
                continue
            break
        if value is None:
            n_skipped += 1
        else:
            values.append(value)
    if n_skipped:
        warnings.warn(f"{n_skipped} bootstrap replicates skipped after 10 "
                      "single-class redraws", RuntimeWarning, stacklevel=2)
    values.sort()
    m = len(values)
    if m == 0:
        raise UndefinedMetricError("all bootstrap replicates were single-class")
    alpha = (1.0 - level) / 2.0
    lo_rank = max(1, math.ceil(alpha * m))
    hi_rank = max(1, math.ceil((1.0 - alpha) * m))
    return values[lo_rank - 1], values[hi_rank - 1]


def fold_mean_sd(values):
    """Mean and sample (n-1) standard deviation of per-fold metric values."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size < 2:
        raise ValueError("sample SD needs at least two fold values")
    return float(arr.mean()), float(arr.std(ddof=1))


def wilcoxon_signed_rank(a, b, mode: str = "auto"):
    """Paired Wilcoxon signed-rank test: statistic min(W+, W-) and two-sided p.

    Zero differences are dropped; absolute differences are midranked.  For up
    to 25 informative pairs the p-value is exact over all 2^n sign
    assignments (two-sided as min(1, 2 * lower tail)); larger samples use the
    normal approximation with tie correction.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1 or a.size < 1:
        raise ValueError("inputs must be equal-length 1-D arrays")
    if mode not in ("auto", "exact", "approx"):
        raise ValueError(f"mode must be auto/exact/approx, got {mode!r}")
    d = a - b
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise DegenerateTestError("all paired differences are zero")
    ranks = rankdata(np.abs(d), method="average")
    w_pos = float(ranks[d > 0].sum())
    w_neg = float(ranks[d < 0].sum())
    w = min(w_pos, w_neg)
    exact = mode == "exact" or (mode == "auto" and n <= 25)
    if exact:
        p = _exact_two_sided_p(ranks, w)
    else:
        p = _approx_two_sided_p(ranks, w, n)
    return w, p


def _exact_two_sided_p(ranks, w: float) -> float:
    # Midranks are multiples of 1/2; double them so sums stay integral.
    weights = np.rint(ranks * 2.0).astype(np.int64)
    total = int(weights.sum())
    # counts[s] = number of sign assignments with doubled W+ equal to s;
    # the polynomial product enumerates all 2^n assignments.
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for wt in weights:
        shifted = np.zeros_like(counts)
        shifted[wt:] = counts[:counts.size - wt]
        counts = counts + shifted
    w2 = int(round(w * 2.0))
    tail = counts[:w2 + 1].sum() / counts.sum()
    return min(1.0, 2.0 * tail)


def _approx_two_sided_p(ranks, w: float, n: int) -> float:
    mean = n * (n + 1) / 4.0
    # Tie correction on the variance of W+.
    var = (ranks ** 2).sum() / 4.0
    if var == 0:
        raise DegenerateTestError("zero variance in signed ranks")
    z = (w - mean) / math.sqrt(var)
    p = 2.0 * 0.5 * math.erfc(abs(z) / math.sqrt(2.0))
    return min(1.0, p)


def read_predictions_csv(path):
    """Parse the predictions CSV (unit_id, patient_id, side, view, score, label)."""
    preds = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or tuple(reader.fieldnames) != PREDICTION_COLUMNS:
            raise ValueError(
                f"predictions header must be {list(PREDICTION_COLUMNS)}, "
                f"got {reader.fieldnames}")
        for i, row in enumerate(reader, start=2):
            try:
                preds.append(Prediction(
                    row["unit_id"], float(row["score"]), int(row["label"]),
                    patient_id=row["patient_id"], side=row["side"], view=row["view"]))
            except (TypeError, ValueError) as exc:
                raise ValueError(f"{path}: row {i}: {exc}") from exc
    return preds


def write_predictions_csv(preds, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTION_COLUMNS)
        for p in preds:
            writer.writerow([p.unit_id, p.patient_id, p.side, p.view, p.score, p.label])
