import numpy as np
import pytest

from oodseg.formats import LabelMap
from oodseg.meta import (LogisticMetaClassifier, MetaDataset, fit_logistic,
                         loo_cross_validate, remove_fp, standardize_columns)
from oodseg.metrics import ScoredPixels, auroc
from oodseg.segments import OoDPixelMask, connected_components, match_segments


class TestFitLogistic:
    def test_separable_1d_reaches_perfect_training_accuracy(self):
        X = np.array([[-2.0], [-1.5], [-1.0], [1.0], [1.5], [2.0]])
        y = np.array([0, 0, 0, 1, 1, 1])
        model = fit_logistic(X, y, l2=1e-6)
        assert np.array_equal(model.predict(X), y)

    def test_identical_features_predict_base_rate(self):
        X = np.ones((10, 3))
        y = np.array([1, 1, 1, 0, 0, 0, 0, 0, 0, 0])
        model = fit_logistic(X, y)
        probs = model.predict_proba(X)[:, 1]
        assert probs == pytest.approx(np.full(10, 0.3), abs=1e-6)

    def test_symmetric_two_points_boundary_at_midpoint(self):
        X = np.array([[-1.0], [3.0]])
        y = np.array([0, 1])
        model = fit_logistic(X, y, l2=1e-2)
        # midpoint of the two features decides at exactly 0.5
        assert model.predict_proba(np.array([[1.0]]))[0, 1] == pytest.approx(0.5, abs=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="single class"):
            fit_logistic(np.array([[0.0], [1.0]]), np.array([1, 1]))

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError, match="non-finite"):
            fit_logistic(np.array([[np.inf], [1.0]]), np.array([0, 1]))

    def test_loss_trace_monotone_decreasing(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(40, 5))
        y = (X[:, 0] + 0.3 * rng.normal(size=40) > 0).astype(int)
        model = fit_logistic(X, y, l2=1e-3)
        trace = np.array(model.loss_trace_)
        assert (np.diff(trace) <= 1e-12).all()

    def test_deterministic_across_seeds(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(30, 4))
        y = rng.integers(0, 2, 30)
        y[0], y[1] = 0, 1
        a = fit_logistic(X, y, seed=0)
        b = fit_logistic(X, y, seed=99)
        assert np.array_equal(a.coef_, b.coef_)

    def test_json_round_trip(self):
        rng = np.random.default_rng(2)
        X = rng.normal(size=(20, 3))
        y = rng.integers(0, 2, 20)
        y[0], y[1] = 0, 1
        model = fit_logistic(X, y)
        clone = LogisticMetaClassifier.from_json(model.to_json(["a", "b", "c"]))
        assert np.allclose(clone.predict_proba(X), model.predict_proba(X))


class TestLooCrossValidate:
    def test_three_separable_rows_on_correct_side(self):
        X = np.array([[-2.0], [-1.8], [2.0], [2.2]])
        y = np.array([0, 0, 1, 1])
        result = loo_cross_validate(X, y)
        assert (result.probs[:2] < 0.5).all()
        assert (result.probs[2:] > 0.5).all()
        assert not result.intercept_only.any()

    def test_duplicated_rows_near_in_sample_probability(self):
        rng = np.random.default_rng(4)
        base_X = rng.normal(size=(8, 2))
        base_y = (base_X[:, 0] > 0).astype(int)
        X = np.vstack([base_X, base_X])
        y = np.concatenate([base_y, base_y])
        result = loo_cross_validate(X, y, l2=1e-3)
        full = fit_logistic(X, y, l2=1e-3).predict_proba(X)[:, 1]
        assert result.probs == pytest.approx(full, abs=0.15)

    def test_no_signal_gives_chance_auroc(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(1000, 4))
        y = rng.integers(0, 2, 1000)
        result = loo_cross_validate(X, y, l2=1e-2)
        score = auroc(ScoredPixels(result.probs, y.astype(bool)))
        assert abs(score - 0.5) < 0.1

    def test_single_class_fold_flagged(self):
        X = np.array([[0.0], [1.0], [2.0]])
        y = np.array([0, 0, 1])
        result = loo_cross_validate(X, y)
        # removing the only positive leaves a single-class fold
        assert result.intercept_only[2]
        assert result.probs[2] == 0.0

    def test_standardization_absorbs_affine_rescale(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(25, 3))
        y = (X[:, 1] > 0.2).astype(int)
        scaled = X.copy()
        scaled[:, 1] = 40.0 * scaled[:, 1] - 7.0
        a = loo_cross_validate(X, y, l2=1e-4)
        b = loo_cross_validate(scaled, y, l2=1e-4)
        assert a.probs == pytest.approx(b.probs, abs=1e-6)

    def test_needs_three_rows(self):
        with pytest.raises(ValueError, match="at least 3"):
            loo_cross_validate(np.zeros((2, 1)), np.array([0, 1]))


def _two_segment_fixture():
    flags = np.zeros((6, 6), dtype=bool)
    flags[1, 1] = True              # lands on the GT object -> TP
    flags[4, 4] = True              # background -> FP
    mask = OoDPixelMask(flags, 0.5)
    segs = connected_components(mask)
    labels = np.zeros((6, 6), dtype=np.int32)
    labels[1, 1] = 3
    lm = LabelMap(labels, 3)
    return segs, lm


class TestRemoveFp:
    def test_all_ones_is_identity(self):
        segs, lm = _two_segment_fixture()
        match = match_segments(segs, lm)
        kept = remove_fp(segs, match, [1.0, 1.0])
        assert kept == segs

    def test_all_zeros_empties_and_creates_misses(self):
        segs, lm = _two_segment_fixture()
        match = match_segments(segs, lm)
        kept = remove_fp(segs, match, [0.0, 0.0])
        assert kept == []
        rematch = match_segments(kept, lm)
        assert rematch.fn == len(rematch.gt_segments) == 1

    def test_mixed_case_matches_hand_count(self):
        segs, lm = _two_segment_fixture()
        match = match_segments(segs, lm)
        assert (match.tp, match.fp, match.fn) == (1, 1, 0)
        kept = remove_fp(segs, match, [0.9, 0.2])
        rematch = match_segments(kept, lm)
        assert (rematch.tp, rematch.fp, rematch.fn) == (1, 0, 0)

    def test_cutoff_zero_is_identity(self):
        segs, lm = _two_segment_fixture()
        match = match_segments(segs, lm)
        assert remove_fp(segs, match, [0.1, 0.6], cutoff=0.0) == segs

    def test_misaligned_inputs_rejected(self):
        segs, lm = _two_segment_fixture()
        match = match_segments(segs, lm)
        with pytest.raises(ValueError, match="align"):
            remove_fp(segs, match, [0.5])


class TestMetaDataset:
    def test_from_rows_drops_ignored(self):
        from oodseg.features import FeatureRow
        rows = [FeatureRow(1, "a", np.array([1.0, 2.0])),
                FeatureRow(2, "a", np.array([3.0, 4.0])),
                FeatureRow(3, "a", np.array([5.0, 6.0]))]
        data = MetaDataset.from_rows(rows, ["TP", "ignored", "FP"])
        assert data.X.shape == (2, 2)
        assert data.y.tolist() == [1, 0]

    def test_standardize_constant_column_unit_divisor(self):
        X = np.array([[1.0, 5.0], [1.0, 7.0]])
        Z, means, stds = standardize_columns(X)
        assert stds[0] == 1.0
        assert (Z[:, 0] == 0.0).all()
        assert np.isfinite(Z).all()
