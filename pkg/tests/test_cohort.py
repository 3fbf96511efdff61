import numpy as np
import pytest

from roiaug.cohort import (
    FoldAssignment,
    ImageRecord,
    PatientGroupKFold,
    assign_folds,
    parse_manifest,
    patient_labels,
    read_fold_file,
    verify_no_leakage,
    write_fold_file,
    write_manifest,
)
from roiaug.errors import ManifestError

from synth import synthetic_cohort_records


def touch_tree(root, rel):
    p = root / rel
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_bytes(b"P5\n1 1\n255\n\x00")
    return p


class TestParseManifest:
    def test_cancer_is_positive(self, tmp_path):
        touch_tree(tmp_path, "Cancer/0123/RIGHT_CC.png")
        m = parse_manifest(tmp_path)
        assert len(m.records) == 1
        rec = m.records[0]
        assert rec.label == 1
        assert rec.patient_id == "0123"
        assert rec.side == "right" and rec.view == "CC"

    def test_benign_is_negative(self, tmp_path):
        touch_tree(tmp_path, "Benign/0456/LEFT_MLO.png")
        assert parse_manifest(tmp_path).records[0].label == 0

    def test_lowercase_tokens(self, tmp_path):
        touch_tree(tmp_path, "normal/0789/left_cc.png")
        rec = parse_manifest(tmp_path).records[0]
        assert rec.label == 0
        assert rec.side == "left" and rec.view == "CC"

    def test_unparseable_goes_to_rejects(self, tmp_path):
        touch_tree(tmp_path, "Cancer/0001/LEFT_CC.png")
        touch_tree(tmp_path, "Cancer/0002/mystery.png")
        m = parse_manifest(tmp_path)
        assert len(m.records) == 1
        assert len(m.rejects) == 1
        assert "mystery" in m.rejects[0]

    def test_empty_is_error(self, tmp_path):
        touch_tree(tmp_path, "strange/whatever.png")
        with pytest.raises(ManifestError):
            parse_manifest(tmp_path)

    def test_records_sorted_for_stream_stability(self, tmp_path):
        touch_tree(tmp_path, "Normal/02/RIGHT_CC.png")
        touch_tree(tmp_path, "Cancer/01/LEFT_MLO.png")
        touch_tree(tmp_path, "Benign/01/LEFT_CC.png")
        ids = [r.patient_id + "/" + r.view for r in parse_manifest(tmp_path).records]
        assert ids == ["01/CC", "01/MLO", "02/CC"]

    def test_tsv_roundtrip(self, tmp_path):
        recs = [ImageRecord("a/left_CC", "a", "left", "CC", 1, "/x/a.png"),
                ImageRecord("b/right_MLO", "b", "right", "MLO", 0, "/x/b.png")]
        p = tmp_path / "manifest.tsv"
        write_manifest(recs, p)
        m = parse_manifest(p)
        assert list(m.records) == recs

    def test_tsv_bad_header(self, tmp_path):
        p = tmp_path / "m.tsv"
        p.write_text("foo\tbar\n1\t2\n")
        with pytest.raises(ManifestError, match="header"):
            parse_manifest(p)


class TestAssignFolds:
    def test_exact_stratified_division(self):
        recs = []
        for i in range(8):
            label = 1 if i < 4 else 0
            recs.append(ImageRecord(f"p{i}/left_CC", f"p{i}", "left", "CC",
                                    label, f"/d/{i}.png"))
        assignment = assign_folds(recs, 4, seed=3)
        labels = patient_labels(recs)
        for f in range(4):
            fold_patients = assignment.patients_in_fold(f)
            assert len(fold_patients) == 2
            assert sum(labels[p] for p in fold_patients) == 1

    def test_2414_patients_fold_sizes(self):
        recs = synthetic_cohort_records(n_patients=2414, positives=580, seed=1)
        assignment = assign_folds(recs, 4, seed=0)
        sizes = sorted(len(assignment.patients_in_fold(f)) for f in range(4))
        assert set(sizes) <= {603, 604}
        assert sum(sizes) == 2414

    def test_deterministic(self):
        recs = synthetic_cohort_records(n_patients=100, positives=30)
        a = assign_folds(recs, 4, seed=9)
        b = assign_folds(recs, 4, seed=9)
        assert a.mapping == b.mapping
        c = assign_folds(recs, 4, seed=10)
        assert a.mapping != c.mapping

    def test_stratified_balance_within_one(self):
        recs = synthetic_cohort_records(n_patients=333, positives=77, seed=5)
        labels = patient_labels(recs)
        assignment = assign_folds(recs, 4, seed=2)
        pos_counts = [sum(labels[p] for p in assignment.patients_in_fold(f))
                      for f in range(4)]
        assert max(pos_counts) - min(pos_counts) <= 1

    def test_partition_property(self):
        recs = synthetic_cohort_records(n_patients=57, positives=13)
        assignment = assign_folds(recs, 5, seed=4)
        all_patients = {r.patient_id for r in recs}
        assigned = set(assignment.mapping)
        assert assigned == all_patients
        assert set(assignment.mapping.values()) <= set(range(5))

    def test_patient_level_label_is_or(self):
        recs = [ImageRecord("p/left_CC", "p", "left", "CC", 0, "/a"),
                ImageRecord("p/left_MLO", "p", "left", "MLO", 1, "/b")]
        assert patient_labels(recs)["p"] == 1

    def test_too_few_patients(self):
        recs = synthetic_cohort_records(n_patients=3, positives=1)
        with pytest.raises(ValueError):
            assign_folds(recs, 4)


class TestVerifyNoLeakage:
    def _records(self, n=10):
        return synthetic_cohort_records(n_patients=n, positives=3)

    def test_constructed_assignment_passes(self):
        recs = self._records()
        assignment = assign_folds(recs, 4, seed=0)
        rows = [(p, f) for p, f in assignment.mapping.items()]
        assert verify_no_leakage(recs, rows).passed

    def test_conflicting_duplicate_detected(self):
        recs = self._records()
        assignment = assign_folds(recs, 4, seed=0)
        rows = list(assignment.mapping.items())
        rows.append((rows[0][0], (rows[0][1] + 1) % 4))
        report = verify_no_leakage(recs, rows)
        assert not report.passed
        assert rows[0][0] in report.multi_fold_patients

    def test_missing_patient_detected(self):
        recs = self._records()
        assignment = assign_folds(recs, 4, seed=0)
        rows = [(p, f) for p, f in assignment.mapping.items()
                if p != recs[0].patient_id]
        report = verify_no_leakage(recs, rows)
        assert not report.passed
        assert recs[0].image_id in report.unassigned_images


class TestFoldFile:
    def test_roundtrip(self, tmp_path):
        recs = synthetic_cohort_records(n_patients=12, positives=4)
        assignment = assign_folds(recs, 4, seed=0)
        p = tmp_path / "folds.tsv"
        write_fold_file(assignment, p)
        rows = read_fold_file(p)
        assert dict(rows) == assignment.mapping

    def test_bad_header(self, tmp_path):
        p = tmp_path / "f.tsv"
        p.write_text("a\tb\nc\t0\n")
        with pytest.raises(ManifestError):
            read_fold_file(p)


class TestPatientGroupKFold:
    def test_splits_are_patient_disjoint(self):
        recs = synthetic_cohort_records(n_patients=40, positives=10)
        splitter = PatientGroupKFold(n_splits=4, seed=1)
        assert splitter.get_n_splits() == 4
        seen_val_patients = []
        for train, val in splitter.split(recs):
            train_p = {recs[i].patient_id for i in train}
            val_p = {recs[i].patient_id for i in val}
            assert not train_p & val_p
            assert len(train) + len(val) == len(recs)
            seen_val_patients.append(val_p)
        all_val = set().union(*seen_val_patients)
        assert all_val == {r.patient_id for r in recs}


class TestRecordValidation:
    def test_bad_side(self):
        with pytest.raises(ValueError):
            ImageRecord("x", "p", "up", "CC", 0, "/x")

    def test_bad_label(self):
        with pytest.raises(ValueError):
            ImageRecord("x", "p", "left", "CC", 2, "/x")
