import numpy as np
import pytest

from roiaug.errors import DegenerateTestError, UndefinedMetricError
from roiaug.metrics import (
    Prediction,
    aggregate,
    bootstrap_ci,
    fold_mean_sd,
    pr_auc,
    read_predictions_csv,
    roc_auc,
    wilcoxon_signed_rank,
    write_predictions_csv,
)

from oracles import ap_threshold_sweep, pairwise_auc

FULL_ROW = [0.9189, 0.9228, 0.9056, 0.9103]
ROI_ROW = [0.9157, 0.9249, 0.9247, 0.9072]


def preds_from(scores, labels):
    return [Prediction(f"u{i}", float(s), int(l))
            for i, (s, l) in enumerate(zip(scores, labels))]


def view_pred(patient, side, view, score, label):
    return Prediction(f"{patient}|{side}|{view}", score, label,
                      patient_id=patient, side=side, view=view)


class TestAggregate:
    def test_two_view_mean(self):
        preds = [view_pred("p1", "left", "CC", 0.2, 0),
                 view_pred("p1", "left", "MLO", 0.4, 0)]
        out = aggregate(preds, "patient")
        assert len(out) == 1
        assert out[0].score == pytest.approx(0.3)
        assert out[0].label == 0

    def test_single_view_passthrough(self):
        preds = [view_pred("p1", "left", "CC", 0.7, 1)]
        assert aggregate(preds, "patient")[0].score == 0.7

    def test_three_views_mean_and_or(self):
        preds = [view_pred("p1", "left", "CC", 0.1, 0),
                 view_pred("p1", "left", "MLO", 0.2, 0),
                 view_pred("p1", "right", "CC", 0.6, 1)]
        out = aggregate(preds, "patient")
        assert out[0].score == pytest.approx(0.3)
        assert out[0].label == 1

    def test_breast_level_grouping(self):
        preds = [view_pred("p1", "left", "CC", 0.2, 0),
                 view_pred("p1", "left", "MLO", 0.4, 0),
                 view_pred("p1", "right", "CC", 0.9, 1)]
        out = aggregate(preds, "breast")
        assert len(out) == 2
        by_id = {p.unit_id: p for p in out}
        assert by_id["p1|left"].score == pytest.approx(0.3)
        assert by_id["p1|right"].label == 1

    def test_order_independent(self, rng):
        preds = [view_pred(f"p{i % 7}", "left" if i % 2 else "right",
                           "CC" if i % 3 else "MLO", float(rng.random()), int(i % 5 == 0))
                 for i in range(40)]
        base = aggregate(preds, "patient")
        for _ in range(5):
            perm = [preds[i] for i in rng.permutation(len(preds))]
            assert aggregate(perm, "patient") == base

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            aggregate([], "patient")


class TestRocAuc:
    def test_perfect_separation(self):
        preds = preds_from([1.0] * 5 + [0.0] * 5, [1] * 5 + [0] * 5)
        assert roc_auc(preds) == 1.0

    def test_all_tied_is_half(self):
        preds = preds_from([0.5] * 8, [1, 0, 1, 0, 1, 0, 1, 0])
        assert roc_auc(preds) == 0.5

    def test_matches_pairwise_oracle(self, rng):
        for trial in range(200):
            n = int(rng.integers(2, 31))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            if trial % 2 == 0:
                scores = np.round(rng.random(n), 1)  # inject heavy ties
            else:
                scores = rng.random(n)
            preds = preds_from(scores, labels)
            assert roc_auc(preds) == pytest.approx(
                pairwise_auc(scores, labels), abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(UndefinedMetricError):
            roc_auc(preds_from([0.5, 0.6], [1, 1]))

    def test_monotone_transform_invariance(self, rng):
        n = 25
        scores = rng.random(n)
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        base = roc_auc(preds_from(scores, labels))
        for fn in (lambda s: s ** 3, lambda s: np.tanh(2 * s), lambda s: s / 2 + 0.1):
            assert roc_auc(preds_from(fn(scores), labels)) == pytest.approx(base, abs=1e-12)

    def test_label_flip_complement(self, rng):
        n = 20
        scores = rng.permutation(n) / n  # distinct, no ties
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        a = roc_auc(preds_from(scores, labels))
        b = roc_auc(preds_from(scores, 1 - labels))
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestPrAuc:
    def test_perfect_separation(self):
        preds = preds_from([0.9] * 4 + [0.1] * 6, [1] * 4 + [0] * 6)
        assert pr_auc(preds) == 1.0

    def test_single_positive_ranked_last(self):
        scores = [0.9, 0.8, 0.7, 0.65, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1]
        labels = [0] * 9 + [1]
        assert pr_auc(preds_from(scores, labels)) == pytest.approx(0.1, abs=1e-12)

    def test_matches_sweep_oracle(self, rng):
        for trial in range(200):
            n = int(rng.integers(2, 31))
            labels = rng.integers(0, 2, size=n)
            if labels.sum() == 0:
                labels[0] = 1
            if trial % 2 == 0:
                scores = np.round(rng.random(n), 1)
            else:
                scores = rng.random(n)
            preds = preds_from(scores, labels)
            assert pr_auc(preds) == pytest.approx(
                ap_threshold_sweep(scores, labels), abs=1e-12)

    def test_no_positives_rejected(self):
        with pytest.raises(UndefinedMetricError):
            pr_auc(preds_from([0.4, 0.6], [0, 0]))


class TestBootstrapCi:
    def test_degenerate_perfect_classifier(self):
        preds = preds_from([1.0] * 6 + [0.0] * 6, [1] * 6 + [0] * 6)
        lo, hi = bootstrap_ci(preds, "roc_auc", n_boot=200, seed=1)
        assert (lo, hi) == (1.0, 1.0)

    def test_deterministic(self, rng):
        scores = rng.random(40)
        labels = rng.integers(0, 2, size=40)
        labels[:2] = [0, 1]
        preds = preds_from(scores, labels)
        a = bootstrap_ci(preds, "roc_auc", n_boot=100, seed=7)
        b = bootstrap_ci(preds, "roc_auc", n_boot=100, seed=7)
        assert a == b

    def test_interval_contains_point_estimate(self, rng):
        scores = np.concatenate([rng.normal(0.6, 0.15, 50), rng.normal(0.4, 0.15, 50)])
        scores = np.clip(scores, 0, 1)
        labels = np.array([1] * 50 + [0] * 50)
        preds = preds_from(scores, labels)
        lo, hi = bootstrap_ci(preds, "roc_auc", n_boot=300, seed=2)
        point = roc_auc(preds)
        assert lo <= point <= hi

    def test_width_shrinks_with_sample_size(self, rng):
        def cohort(n):
            pos = np.clip(rng.normal(0.65, 0.12, n // 2), 0, 1)
            neg = np.clip(rng.normal(0.45, 0.12, n // 2), 0, 1)
            return preds_from(np.concatenate([pos, neg]),
                              [1] * (n // 2) + [0] * (n // 2))

        widths_small, widths_large = [], []
        for trial in range(5):
            lo, hi = bootstrap_ci(cohort(60), "roc_auc", n_boot=200, seed=trial)
            widths_small.append(hi - lo)
            lo, hi = bootstrap_ci(cohort(240), "roc_auc", n_boot=200, seed=trial)
            widths_large.append(hi - lo)
        assert np.median(widths_large) < np.median(widths_small)

    def test_pr_metric_supported(self):
        preds = preds_from([0.9, 0.8, 0.3, 0.2], [1, 0, 1, 0])
        lo, hi = bootstrap_ci(preds, "pr_auc", n_boot=50, seed=0)
        assert 0.0 <= lo <= hi <= 1.0


class TestFoldMeanSd:
    def test_full_row_table_values(self):
        mean, sd = fold_mean_sd(FULL_ROW)
        assert round(mean, 4) == 0.9144
        assert round(sd, 4) == 0.0079

    def test_roi_row_table_values(self):
        mean, sd = fold_mean_sd(ROI_ROW)
        assert round(mean, 4) == 0.9181
        assert round(sd, 4) == 0.0085

    def test_delta(self):
        assert round(fold_mean_sd(ROI_ROW)[0] - fold_mean_sd(FULL_ROW)[0], 4) == 0.0037

    def test_constant_list(self):
        mean, sd = fold_mean_sd([0.5, 0.5, 0.5])
        assert mean == 0.5 and sd == 0.0

    def test_single_value_rejected(self):
        with pytest.raises(ValueError):
            fold_mean_sd([0.9])


class TestWilcoxon:
    def test_fold_rows_exact(self):
        w, p = wilcoxon_signed_rank(ROI_ROW, FULL_ROW)
        # differences {-0.0032, +0.0021, +0.0191, -0.0031}: W+ = W- = 5
        assert w == 5.0
        assert p == 1.0

    def test_four_positive_differences(self):
        w, p = wilcoxon_signed_rank([0.6, 0.7, 0.8, 0.9], [0.5, 0.5, 0.5, 0.5])
        assert w == 0.0
        assert p == pytest.approx(0.125, abs=1e-15)

    def test_single_pair(self):
        w, p = wilcoxon_signed_rank([0.7], [0.4])
        assert w == 0.0
        assert p == 1.0

    def test_zeros_dropped(self):
        w, p = wilcoxon_signed_rank([0.5, 0.6, 0.7], [0.5, 0.5, 0.5])
        w2, p2 = wilcoxon_signed_rank([0.6, 0.7], [0.5, 0.5])
        assert (w, p) == (w2, p2)

    def test_all_zero_degenerate(self):
        with pytest.raises(DegenerateTestError):
            wilcoxon_signed_rank([0.5, 0.5], [0.5, 0.5])

    def test_p_values_live_on_dyadic_support(self, rng):
        for _ in range(30):
            n = int(rng.integers(1, 9))
            a = rng.permutation(40)[:n] / 40 + 0.5  # distinct magnitudes
            b = np.zeros(n)
            sign = rng.choice([-1.0, 1.0], size=n)
            _, p = wilcoxon_signed_rank(a * sign, b)
            scaled = p * 2 ** (n - 1)
            assert scaled == pytest.approx(round(scaled), abs=1e-9)
            assert 0.0 < p <= 1.0

    def test_matches_enumeration_oracle(self, rng):
        # brute-force over all sign assignments
        for _ in range(20):
            n = int(rng.integers(2, 9))
            d = rng.random(n) + 0.01
            sign = rng.choice([-1.0, 1.0], size=n)
            a = d * sign
            w, p = wilcoxon_signed_rank(a, np.zeros(n))
            from scipy.stats import rankdata
            ranks = rankdata(np.abs(a))
            w_obs = min(ranks[a > 0].sum(), ranks[a < 0].sum())
            count = 0
            for bits in range(2 ** n):
                wp = sum(ranks[i] for i in range(n) if (bits >> i) & 1)
                if wp <= w_obs:
                    count += 1
            expect = min(1.0, 2.0 * count / 2 ** n)
            assert w == w_obs
            assert p == pytest.approx(expect, abs=1e-12)

    def test_large_n_uses_approximation(self, rng):
        a = rng.random(40)
        b = rng.random(40)
        w, p = wilcoxon_signed_rank(a, b)
        assert 0.0 <= p <= 1.0


class TestPredictionsCsv:
    def test_roundtrip(self, tmp_path, rng):
        preds = [view_pred(f"p{i}", "left", "CC", float(np.round(rng.random(), 6)),
                           int(rng.integers(0, 2))) for i in range(10)]
        p = tmp_path / "preds.csv"
        write_predictions_csv(preds, p)
        assert read_predictions_csv(p) == preds

    def test_bad_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            read_predictions_csv(p)

    def test_bad_row_named(self, tmp_path):
        p = tmp_path / "bad2.csv"
        p.write_text("unit_id,patient_id,side,view,score,label\nu,p,left,CC,2.0,1\n")
        with pytest.raises(ValueError, match="row 2"):
            read_predictions_csv(p)

    def test_score_range_validated(self):
        with pytest.raises(ValueError):
            Prediction("u", 1.5, 0)
