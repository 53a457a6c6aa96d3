import math

import numpy as np
import pytest

from oodseg.formats import HeatMap, LabelMap
from oodseg.metrics import (ScoredPixels, auprc, auroc, fpr_at_tpr, pr_curve,
                            quantile_summary, roc_curve)


def pairwise_auroc_oracle(scores, labels):
    """O(n^2) concordance: P(random positive outscores random negative),
    ties counted half."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (len(pos) * len(neg))


def average_precision_oracle(scores, labels):
    """Rank enumeration over distinct thresholds, naive recount each time."""
    thresholds = sorted(set(scores), reverse=True)
    n_pos = sum(labels)
    ap = 0.0
    prev_recall = 0.0
    for t in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s >= t and l)
        fp = sum(1 for s, l in zip(scores, labels) if s >= t and not l)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


def fpr_sweep_oracle(scores, labels, target):
    thresholds = sorted(set(scores), reverse=True)
    best = 1.0
    n_pos = sum(labels)
    n_neg = len(labels) - n_pos
    for t in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if s >= t and l)
        fp = sum(1 for s, l in zip(scores, labels) if s >= t and not l)
        if tp / n_pos >= target:
            best = min(best, fp / n_neg)
    return best


class TestAuroc:
    def test_perfect_separation(self):
        sp = ScoredPixels([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert auroc(sp) == 1.0

    def test_all_ties_is_half(self):
        sp = ScoredPixels([0.5] * 10, [1, 0] * 5)
        assert auroc(sp) == pytest.approx(0.5, abs=1e-15)

    def test_matches_pairwise_oracle(self):
        rng = np.random.default_rng(42)
        for trial in range(200):
            n = int(rng.integers(4, 65))
            # quantized scores force plenty of ties
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                labels[0], labels[-1] = 0, 1
            sp = ScoredPixels(scores, labels)
            expected = pairwise_auroc_oracle(scores.tolist(), labels.tolist())
            assert abs(auroc(sp) - expected) < 1e-12

    def test_complement_symmetry(self):
        rng = np.random.default_rng(5)
        scores = np.round(rng.random(60), 1)
        labels = rng.integers(0, 2, 60)
        labels[0], labels[1] = 0, 1
        a = auroc(ScoredPixels(scores, labels))
        b = auroc(ScoredPixels(-scores, labels))
        assert a + b == pytest.approx(1.0, abs=1e-12)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(6)
        scores = rng.random(50)
        labels = rng.integers(0, 2, 50)
        labels[0], labels[1] = 0, 1
        a = auroc(ScoredPixels(scores, labels))
        b = auroc(ScoredPixels(np.exp(3.0 * scores), labels))
        assert a == pytest.approx(b, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="both"):
            auroc(ScoredPixels([0.1, 0.2], [1, 1]))


class TestAuprc:
    def test_perfect_ranking(self):
        sp = ScoredPixels([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert auprc(sp) == 1.0

    def test_constant_scores_give_positive_fraction(self):
        sp = ScoredPixels([0.3] * 8, [1, 0, 0, 0, 1, 0, 0, 0])
        assert auprc(sp) == pytest.approx(0.25, abs=1e-15)

    def test_matches_rank_enumeration_oracle(self):
        rng = np.random.default_rng(43)
        for trial in range(200):
            n = int(rng.integers(4, 65))
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.sum() == 0:
                labels[0] = 1
            sp = ScoredPixels(scores, labels)
            expected = average_precision_oracle(scores.tolist(), labels.tolist())
            assert abs(auprc(sp) - expected) < 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(7)
        scores = rng.random(50)
        labels = rng.integers(0, 2, 50)
        labels[0] = 1
        a = auprc(ScoredPixels(scores, labels))
        b = auprc(ScoredPixels(scores ** 5, labels))
        assert a == pytest.approx(b, abs=1e-12)

    def test_no_positives_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            auprc(ScoredPixels([0.1, 0.2], [0, 0]))


class TestFprAtTpr:
    def test_perfect_separation_is_zero(self):
        sp = ScoredPixels([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0])
        assert fpr_at_tpr(sp) == 0.0

    def test_inverted_scores_is_one(self):
        sp = ScoredPixels([0.1, 0.2, 0.9, 0.8], [1, 1, 0, 0])
        assert fpr_at_tpr(sp) == 1.0

    def test_matches_sweep_oracle(self):
        rng = np.random.default_rng(44)
        for trial in range(100):
            n = int(rng.integers(6, 40))
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                labels[0], labels[-1] = 0, 1
            sp = ScoredPixels(scores, labels)
            expected = fpr_sweep_oracle(scores.tolist(), labels.tolist(), 0.95)
            assert fpr_at_tpr(sp) == pytest.approx(expected, abs=1e-15)


class TestQuantileSummary:
    def test_constant_scores(self):
        sp = ScoredPixels([0.4] * 6, [1, 1, 1, 0, 0, 0])
        summary = quantile_summary(sp)
        assert set(summary.positive.values()) == {0.4}

    def test_linear_interpolation(self):
        scores = np.concatenate([np.arange(100.0), [5.0, 6.0]])
        labels = np.concatenate([np.ones(100), np.zeros(2)])
        summary = quantile_summary(ScoredPixels(scores, labels))
        assert summary.positive["median"] == pytest.approx(49.5)
        assert summary.positive["p25"] == pytest.approx(24.75)

    def test_matches_sort_oracle(self):
        rng = np.random.default_rng(3)
        scores = rng.random(101)
        labels = np.concatenate([np.ones(50), np.zeros(51)])
        summary = quantile_summary(ScoredPixels(scores, labels))
        pos_sorted = np.sort(scores[:50])
        # linear interpolation at fraction f lands on index f * (n - 1)
        idx = 0.25 * (50 - 1)
        lo = math.floor(idx)
        expected = pos_sorted[lo] + (idx - lo) * (pos_sorted[lo + 1] - pos_sorted[lo])
        assert summary.positive["p25"] == pytest.approx(expected, abs=1e-12)
        assert summary.negative["min"] == scores[50:].min()
        assert summary.negative["max"] == scores[50:].max()

    def test_quantiles_monotone(self):
        rng = np.random.default_rng(9)
        sp = ScoredPixels(rng.random(40), [1] * 20 + [0] * 20)
        summary = quantile_summary(sp)
        for stats in (summary.positive, summary.negative):
            ordered = [stats[k] for k in
                       ("min", "p1", "p10", "p25", "median", "p75", "p90", "p99", "max")]
            assert ordered == sorted(ordered)


class TestScoredPixels:
    def test_from_maps_excludes_ignore(self):
        heat = HeatMap(np.array([[0.1, 0.9], [0.5, 0.7]], dtype=np.float32))
        labels = LabelMap(np.array([[0, 3], [-1, 1]]), 3)
        sp = ScoredPixels.from_maps(heat, labels)
        assert len(sp.scores) == 3           # the ignore pixel is gone
        assert sp.n_pos == 1
        assert sp.n_neg == 2

    def test_curve_shapes(self):
        rng = np.random.default_rng(10)
        sp = ScoredPixels(rng.random(30), [1] * 10 + [0] * 20)
        roc = roc_curve(sp)
        assert roc.xs[0] == 0.0 and roc.ys[0] == 0.0
        assert roc.xs[-1] == 1.0 and roc.ys[-1] == 1.0
        assert (np.diff(roc.xs) >= 0).all() and (np.diff(roc.ys) >= 0).all()
        pr = pr_curve(sp)
        assert pr.xs[-1] == 1.0
        assert len(pr.thresholds) == len(pr.xs)
