"""Dataset manifests, patient-level folds, and leakage verification.

Labels derive from a case-insensitive class token in the file path: ``cancer``
maps to 1, ``benign`` and ``normal`` both map to 0.  Fold assignment is strict
patient-level: every image of a patient lands in exactly one fold.  Patients
are stratified by their any-positive label, shuffled within stratum by a
seeded permutation, and dealt round-robin across folds in one continuous
sequence, which bounds both per-stratum and overall fold-size skew at one.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ManifestError

__all__ = [
    "ImageRecord",
    "Manifest",
    "FoldAssignment",
    "LeakageReport",
    "parse_manifest",
    "assign_folds",
    "verify_no_leakage",
    "write_fold_file",
    "read_fold_file",
    "write_manifest",
    "PatientGroupKFold",
]

_CLASS_LABELS = {"cancer": 1, "benign": 0, "normal": 0}
_SIDES = {"left", "right"}
_VIEWS = {"cc", "mlo"}
_IMAGE_SUFFIXES = {".png", ".pgm"}

MANIFEST_COLUMNS = ("image_id", "patient_id", "side", "view", "label", "path")


@dataclass(frozen=True)
class ImageRecord:
    """One image: identity, laterality, view, label and file location."""

    image_id: str
    patient_id: str
    side: str
    view: str
    label: int
    path: str

    def __post_init__(self):
        if self.side not in _SIDES:
            raise ValueError(f"side must be left/right, got {self.side!r}")
        if self.view not in ("CC", "MLO"):
            raise ValueError(f"view must be CC/MLO, got {self.view!r}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0/1, got {self.label!r}")


@dataclass(frozen=True)
class Manifest:
    records: tuple
    rejects: tuple = ()


@dataclass(frozen=True)
class FoldAssignment:
    """Patient -> fold mapping for an n-fold split."""

    n_folds: int
    mapping: dict = field(default_factory=dict)

    def fold_of(self, patient_id: str) -> int:
        return self.mapping[patient_id]

    def patients_in_fold(self, fold: int) -> list:
        return sorted(p for p, f in self.mapping.items() if f == fold)


@dataclass(frozen=True)
class LeakageReport:
    """Outcome of the leakage audit; ``passed`` iff both lists are empty."""

    multi_fold_patients: tuple
    unassigned_images: tuple

    @property
    def passed(self) -> bool:
        return not self.multi_fold_patients and not self.unassigned_images


def _parse_path_tokens(rel: Path):
    """Extract (class token, patient, side, view) from a dataset-style path."""
    parts = rel.parts
    class_idx = None
    for i, part in enumerate(parts):
        if part.lower() in _CLASS_LABELS:
            class_idx = i
            break
    if class_idx is None or class_idx + 1 >= len(parts) - 1:
        return None
    label = _CLASS_LABELS[parts[class_idx].lower()]
    patient_id = parts[class_idx + 1]
    stem_tokens = [t for t in rel.stem.replace("-", "_").split("_") if t]
    side = next((t.lower() for t in stem_tokens if t.lower() in _SIDES), None)
    view = next((t.upper() for t in stem_tokens if t.lower() in _VIEWS), None)
    if side is None or view is None:
        return None
    return label, patient_id, side, view


def _records_from_dir(root: Path) -> Manifest:
    records, rejects = [], []
    for path in sorted(root.rglob("*")):
        if not path.is_file() or path.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        rel = path.relative_to(root)
        parsed = _parse_path_tokens(rel)
        if parsed is None:
            rejects.append(str(path))
            continue
        label, patient_id, side, view = parsed
        image_id = rel.with_suffix("").as_posix()
        records.append(ImageRecord(image_id, patient_id, side, view, label, str(path)))
    return Manifest(tuple(records), tuple(rejects))


def _records_from_tsv(path: Path) -> Manifest:
    records, rejects = [], []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh, delimiter="\t")
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise ManifestError(
                f"manifest header must be {list(MANIFEST_COLUMNS)}, "
                f"got {reader.fieldnames}")
        for i, row in enumerate(reader, start=2):
            try:
                records.append(ImageRecord(
                    row["image_id"], row["patient_id"], row["side"].lower(),
                    row["view"].upper(), int(row["label"]), row["path"]))
            except (TypeError, ValueError, KeyError):
                rejects.append(f"{path}:{i}")
    return Manifest(tuple(records), tuple(rejects))


def parse_manifest(root) -> Manifest:
    """Build image records from a dataset directory or an explicit TSV.

    Records come back sorted by (patient_id, side, view, image_id); that order
    defines each record's stable stream index for augmentation.  Unparseable
    paths are collected in ``rejects`` rather than raising; an empty result is
    an error.
    """
    root = Path(root)
    if root.is_dir():
        manifest = _records_from_dir(root)
    elif root.is_file():
        manifest = _records_from_tsv(root)
    else:
        raise ManifestError(f"no such manifest or directory: {root}")
    records = sorted(manifest.records,
                     key=lambda r: (r.patient_id, r.side, r.view, r.image_id))
    if not records:
        raise ManifestError(f"no usable image records under {root}")
    seen = set()
    for r in records:
        key = (r.patient_id, r.side, r.view, r.path)
        if key in seen:
            raise ManifestError(f"duplicate record for {key}")
        seen.add(key)
    return Manifest(tuple(records), manifest.rejects)


def write_manifest(records, path) -> None:
    """Write records as the canonical TSV manifest."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(MANIFEST_COLUMNS)
        for r in records:
            writer.writerow([r.image_id, r.patient_id, r.side, r.view, r.label, r.path])


def patient_labels(records) -> dict:
    """Patient-level label: positive iff any image is positive."""
    labels: dict = {}
    for r in records:
        labels[r.patient_id] = max(labels.get(r.patient_id, 0), r.label)
    return labels


def assign_folds(records, n_folds: int = 4, seed: int = 0) -> FoldAssignment:
    """Stratified patient-level fold assignment, deterministic in the seed."""
    if n_folds < 2:
        raise ValueError(f"n_folds must be >= 2, got {n_folds}")
    labels = patient_labels(records)
    if len(labels) < n_folds:
        raise ValueError(
            f"need at least {n_folds} patients, got {len(labels)}")
    rng = np.random.default_rng(seed)
    ordered = []
    for stratum_label in (1, 0):
        stratum = sorted(p for p, lab in labels.items() if lab == stratum_label)
        perm = rng.permutation(len(stratum))
        ordered.extend(stratum[i] for i in perm)
    mapping = {patient: i % n_folds for i, patient in enumerate(ordered)}
    return FoldAssignment(n_folds, mapping)


def verify_no_leakage(records, fold_rows) -> LeakageReport:
    """Audit an assignment, including externally supplied fold files.

    ``fold_rows`` is an iterable of (patient_id, fold) pairs; duplicates with
    conflicting folds are the multi-fold violation.  Images whose patient has
    no assignment are the coverage violation.
    """
    seen: dict = {}
    multi = set()
    for patient_id, fold in fold_rows:
        if patient_id in seen and seen[patient_id] != fold:
            multi.add(patient_id)
        seen.setdefault(patient_id, fold)
    unassigned = [r.image_id for r in records if r.patient_id not in seen]
    return LeakageReport(tuple(sorted(multi)), tuple(unassigned))


def write_fold_file(assignment: FoldAssignment, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, delimiter="\t")
        writer.writerow(("patient_id", "fold"))
        for patient in sorted(assignment.mapping):
            writer.writerow((patient, assignment.mapping[patient]))


def read_fold_file(path) -> list:
    """Read raw (patient_id, fold) rows; duplicates are preserved for auditing."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh, delimiter="\t")
        header = next(reader, None)
        if header != ["patient_id", "fold"]:
            raise ManifestError(f"fold file header must be patient_id/fold, got {header}")
        for raw in reader:
            if len(raw) != 2:
                raise ManifestError(f"malformed fold row: {raw}")
            rows.append((raw[0], int(raw[1])))
    return rows


class PatientGroupKFold:
    """sklearn-style splitter built on :func:`assign_folds`.

    ``split(records)`` yields (train_indices, val_indices) per fold, with the
    guarantee that no patient crosses the boundary.
    """

    def __init__(self, n_splits: int = 4, seed: int = 0):
        self.n_splits = n_splits
        self.seed = seed

    def get_n_splits(self, X=None, y=None, groups=None) -> int:
        return self.n_splits

    def split(self, records):
        records = list(records)
        assignment = assign_folds(records, self.n_splits, self.seed)
        folds = np.array([assignment.fold_of(r.patient_id) for r in records])
        for fold in range(self.n_splits):
            val = np.flatnonzero(folds == fold)
            train = np.flatnonzero(folds != fold)
            yield train, val
