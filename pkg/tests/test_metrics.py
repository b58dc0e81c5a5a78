"""Unit tests for evaluation metrics against brute-force references."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from delaylab import metrics
from delaylab.core import DomainError


def auc_pairwise(scores, labels):
    """Quadratic reference: P(pos > neg) with ties counted half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if len(pos) == 0 or len(neg) == 0:
        return None
    wins = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                wins += 1.0
            elif sp == sn:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def pr_auc_sweep(scores, labels):
    """Reference average precision from an exhaustive threshold sweep."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        return None
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(set(scores.tolist()), reverse=True):
        sel = scores >= t
        tp = int(labels[sel].sum())
        precision = tp / int(sel.sum())
        recall = tp / n_pos
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


class TestAuc:
    def test_hand_worked_example(self):
        scores = [0.1, 0.4, 0.35, 0.8]
        labels = [0, 0, 1, 1]
        assert metrics.auc(scores, labels) == pytest.approx(0.75)

    def test_perfect_and_inverted(self):
        assert metrics.auc([0.1, 0.9], [0, 1]) == 1.0
        assert metrics.auc([0.9, 0.1], [0, 1]) == 0.0

    def test_all_tied_scores(self):
        assert metrics.auc([0.3, 0.3, 0.3, 0.3], [0, 1, 0, 1]) == pytest.approx(0.5)

    def test_single_class_is_undefined(self):
        assert metrics.auc([0.2, 0.4], [1, 1]) is None
        assert metrics.auc([0.2, 0.4], [0, 0]) is None

    def test_matches_pairwise_reference(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            n = rng.integers(2, 12)
            labels = rng.integers(0, 2, size=n)
            # coarse grid forces frequent ties
            scores = rng.integers(0, 4, size=n) / 4.0
            want = auc_pairwise(scores, labels)
            got = metrics.auc(scores, labels)
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, abs=1e-12)

    @given(st.integers(0, 2**32 - 1))
    @settings(deadline=None, max_examples=60)
    def test_monotone_transform_invariance(self, seed):
        rng = np.random.default_rng(seed)
        n = 20
        labels = rng.integers(0, 2, size=n)
        scores = rng.normal(size=n)
        base = metrics.auc(scores, labels)
        mapped = metrics.auc(np.tanh(scores) * 3.0 + 1.0, labels)
        if base is None:
            assert mapped is None
        else:
            assert mapped == pytest.approx(base, abs=1e-12)

    def test_label_flip_complements(self):
        rng = np.random.default_rng(13)
        scores = rng.integers(0, 5, size=30) / 5.0
        labels = rng.integers(0, 2, size=30)
        a = metrics.auc(scores, labels)
        b = metrics.auc(scores, 1 - labels)
        assert a + b == pytest.approx(1.0, abs=1e-12)


class TestPrAuc:
    def test_hand_worked_example(self):
        scores = [0.1, 0.4, 0.35, 0.8]
        labels = [0, 0, 1, 1]
        assert metrics.pr_auc(scores, labels) == pytest.approx(5.0 / 6.0)

    def test_all_tied_scores_give_prevalence(self):
        assert metrics.pr_auc([0.3] * 4, [0, 1, 0, 1]) == pytest.approx(0.5)
        assert metrics.pr_auc([0.3] * 4, [0, 0, 0, 1]) == pytest.approx(0.25)

    def test_perfect_ranking(self):
        assert metrics.pr_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == pytest.approx(1.0)

    def test_single_class_is_undefined(self):
        assert metrics.pr_auc([0.2, 0.4], [1, 1]) is None
        assert metrics.pr_auc([0.2, 0.4], [0, 0]) is None

    def test_matches_sweep_reference(self):
        rng = np.random.default_rng(11)
        for _ in range(200):
            n = rng.integers(2, 12)
            labels = rng.integers(0, 2, size=n)
            scores = rng.integers(0, 4, size=n) / 4.0
            want = pr_auc_sweep(scores, labels)
            got = metrics.pr_auc(scores, labels)
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, abs=1e-12)

    def test_continuous_scores_match_reference(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n = rng.integers(2, 12)
            labels = rng.integers(0, 2, size=n)
            scores = rng.normal(size=n)
            want = pr_auc_sweep(scores, labels)
            got = metrics.pr_auc(scores, labels)
            if want is None:
                assert got is None
            else:
                assert got == pytest.approx(want, abs=1e-12)


class TestNll:
    def test_matches_formula(self):
        got = metrics.nll([0.5, 0.25], [1, 0])
        want = (math.log(2.0) - math.log(0.75)) / 2.0
        assert got == pytest.approx(want)

    def test_clamps_extreme_probabilities(self):
        got = metrics.nll([0.0], [1])
        assert got == pytest.approx(-math.log(metrics.NLL_EPS))
        got = metrics.nll([1.0], [0])
        assert got == pytest.approx(-math.log(metrics.NLL_EPS))

    def test_empty_is_undefined(self):
        assert metrics.nll([], []) is None


class TestValidation:
    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            metrics.auc([0.1, 0.2], [1])

    def test_non_binary_labels(self):
        with pytest.raises(DomainError):
            metrics.auc([0.1, 0.2], [1, 2])

    def test_non_finite_scores(self):
        with pytest.raises(DomainError):
            metrics.pr_auc([np.nan, 0.2], [1, 0])

    def test_two_dimensional_input(self):
        with pytest.raises(DomainError):
            metrics.nll(np.zeros((2, 2)), np.zeros((2, 2)))


class TestRelativeImprovement:
    def test_worked_triples(self):
        got = metrics.relative_improvement(0.8408, 0.8307, 0.8500)
        assert got == pytest.approx(52.33, abs=0.01)
        got = metrics.relative_improvement(0.8396, 0.8307, 0.8500)
        assert got == pytest.approx(46.11, abs=0.01)
        got = metrics.relative_improvement(0.8376, 0.8307, 0.8500)
        assert got == pytest.approx(35.75, abs=0.01)

    def test_orientation_flag_does_not_change_value(self):
        up = metrics.relative_improvement(0.45, 0.50, 0.40, higher_is_better=True)
        down = metrics.relative_improvement(0.45, 0.50, 0.40, higher_is_better=False)
        assert up == down == pytest.approx(50.0)

    def test_anchor_endpoints(self):
        assert metrics.relative_improvement(0.8307, 0.8307, 0.85) == 0.0
        assert metrics.relative_improvement(0.85, 0.8307, 0.85) == pytest.approx(100.0)

    def test_no_negative_zero(self):
        out = metrics.relative_improvement(0.5, 0.5, 0.4, higher_is_better=False)
        assert out == 0.0
        assert math.copysign(1.0, out) == 1.0

    def test_zero_gap_is_undefined(self):
        assert metrics.relative_improvement(0.9, 0.8, 0.8) is None

    def test_overshoot_and_regression(self):
        assert metrics.relative_improvement(0.90, 0.80, 0.85) == pytest.approx(200.0)
        assert metrics.relative_improvement(0.75, 0.80, 0.85) == pytest.approx(-100.0)


class TestEvaluateAndAggregate:
    def test_evaluate_bundles_metrics(self):
        rep = metrics.evaluate([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert rep.auc == pytest.approx(0.75)
        assert rep.pr_auc == pytest.approx(5.0 / 6.0)
        assert rep.count == 4
        assert rep.as_dict()["auc"] == rep.auc

    def test_evaluate_single_class(self):
        rep = metrics.evaluate([0.1, 0.2], [0, 0])
        assert rep.auc is None
        assert rep.pr_auc is None
        assert rep.nll is not None
        assert rep.count == 2

    def test_aggregate_count_weighting(self):
        r1 = metrics.MetricsReport(auc=0.6, pr_auc=0.5, nll=1.0, count=1)
        r2 = metrics.MetricsReport(auc=0.9, pr_auc=0.7, nll=0.5, count=3)
        agg = metrics.aggregate([r1, r2])
        assert agg.auc == pytest.approx(0.825)
        assert agg.pr_auc == pytest.approx(0.65)
        assert agg.nll == pytest.approx(0.625)
        assert agg.count == 4

    def test_aggregate_redistributes_undefined_hours(self):
        # the None hour keeps its count in the total but not in the mean
        r1 = metrics.MetricsReport(auc=0.8, pr_auc=None, nll=0.4, count=10)
        r2 = metrics.MetricsReport(auc=None, pr_auc=None, nll=0.6, count=30)
        agg = metrics.aggregate([r1, r2])
        assert agg.auc == pytest.approx(0.8)
        assert agg.pr_auc is None
        assert agg.nll == pytest.approx(0.55)
        assert agg.count == 40

    def test_aggregate_all_undefined(self):
        r = metrics.MetricsReport(auc=None, pr_auc=None, nll=None, count=5)
        agg = metrics.aggregate([r, r])
        assert agg.auc is None and agg.pr_auc is None and agg.nll is None
        assert agg.count == 10
