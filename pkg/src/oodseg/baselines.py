"""Per-pixel OoD scores from standard detection baselines.

Each method produces one raw score per pixel (higher = more likely OoD).
Raw scores are min-max normalized over the whole dataset into [0, 1] so
the thresholding and evaluation machinery applies uniformly; the map is
monotone, so ranking metrics (AUROC, AUPRC) are unaffected.
"""

import numpy as np

from .base import ParamsMixin, as_float_matrix
from .formats import FeatureMap, HeatMap

BASELINE_METHODS = ("msp", "odin", "mahalanobis", "mc_dropout")


def _scene_matrix(scene):
    values = scene.features.values if isinstance(scene.features, FeatureMap) else scene.features
    h, w, d = values.shape
    return values.reshape(-1, d).astype(np.float64), (h, w)


def msp_raw(model, scene):
    """One minus the maximum softmax probability."""
    X, shape = _scene_matrix(scene)
    probs = model.predict_proba(X)
    return (1.0 - probs.max(axis=1)).reshape(shape)


def odin_raw(model, scene, temperature=1000.0, perturbation=1e-4):
    """Temperature-scaled max-softmax score on a perturbed input.

    The input features move one signed-gradient step of size
    ``perturbation`` in the direction that increases the MAP class
    likelihood; the score is 1 - max softmax / temperature. With
    ``perturbation=0`` and ``temperature=1`` this reduces exactly to the
    plain max-softmax score.
    """
    if temperature == 0.0:
        raise ValueError("temperature must be non-zero")
    X, shape = _scene_matrix(scene)
    if perturbation != 0.0:
        grad = model.input_gradient_log_map(X)
        X = X - perturbation * np.sign(-grad)
    probs = model.predict_proba(X)
    return (1.0 - probs.max(axis=1) / temperature).reshape(shape)


def mc_dropout_raw(model, scene, n_samples=8, seed=0):
    """Sum over classes of the per-pixel softmax variance across
    ``n_samples`` stochastic forward passes (population variance, so a
    single sample yields all zeros)."""
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    X, shape = _scene_matrix(scene)
    stack = []
    for s in range(n_samples):
        rng = np.random.default_rng([int(seed), 401, s])
        stack.append(model.predict_proba(X, dropout_rng=rng))
    stack = np.stack(stack)
    return stack.var(axis=0, ddof=0).sum(axis=1).reshape(shape)


class MahalanobisScorer(ParamsMixin):
    """Minimum class-conditional Mahalanobis distance in feature space.

    Fit estimates per-class means and either a shared or per-class
    covariance of the supplied representation (typically the classifier's
    penultimate activations) on in-distribution pixels; scoring returns
    the smallest quadratic distance to any class center.
    """

    def __init__(self, shared_covariance=True, ridge=1e-6):
        self.shared_covariance = shared_covariance
        self.ridge = ridge

    def fit(self, H, y):
        H = as_float_matrix(H, "H")
        y = np.asarray(y, dtype=np.int64).ravel()
        classes = np.unique(y)
        if classes.size < 1:
            raise ValueError("no training pixels")
        dim = H.shape[1]
        self.classes_ = classes
        self.means_ = np.stack([H[y == c].mean(axis=0) for c in classes])
        loading = self.ridge * np.eye(dim)
        if self.shared_covariance:
            centered = H - self.means_[np.searchsorted(classes, y)]
            cov = centered.T @ centered / H.shape[0]
            self.precisions_ = [np.linalg.inv(cov + loading)] * classes.size
        else:
            self.precisions_ = []
            for c in classes:
                rows = H[y == c] - H[y == c].mean(axis=0)
                cov = rows.T @ rows / max(1, rows.shape[0])
                self.precisions_.append(np.linalg.inv(cov + loading))
        return self

    def score(self, H):
        if not hasattr(self, "means_"):
            raise ValueError("scorer is not fitted")
        H = as_float_matrix(H, "H")
        dists = np.empty((H.shape[0], self.classes_.size))
        for i, (mean, precision) in enumerate(zip(self.means_, self.precisions_)):
            delta = H - mean
            dists[:, i] = np.einsum("ij,jk,ik->i", delta, precision, delta)
        return dists.min(axis=1)


def fit_mahalanobis(model, train_scenes, shared_covariance=True, ridge=1e-6):
    """Fit the scorer on penultimate features of labeled training pixels."""
    feats, labels = [], []
    for scene in train_scenes:
        X, _ = _scene_matrix(scene)
        l = scene.labels.labels.reshape(-1)
        keep = (l >= 0) & (l < scene.labels.num_classes)
        feats.append(model.penultimate(X[keep]))
        labels.append(l[keep])
    return MahalanobisScorer(shared_covariance, ridge).fit(
        np.concatenate(feats), np.concatenate(labels)
    )


def mahalanobis_raw(model, scene, scorer):
    X, shape = _scene_matrix(scene)
    return scorer.score(model.penultimate(X)).reshape(shape)


def baseline_heatmaps(model, scenes, method, mahalanobis_scorer=None,
                      temperature=1000.0, perturbation=1e-4,
                      n_samples=8, seed=0):
    """Score every scene and min-max normalize jointly over the dataset."""
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline {method!r}; legal: {BASELINE_METHODS}")
    raws = []
    for scene in scenes:
        if method == "msp":
            raws.append(msp_raw(model, scene))
        elif method == "odin":
            raws.append(odin_raw(model, scene, temperature, perturbation))
        elif method == "mc_dropout":
            raws.append(mc_dropout_raw(model, scene, n_samples, seed))
        else:
            if mahalanobis_scorer is None:
                raise ValueError("mahalanobis needs a fitted scorer")
            raws.append(mahalanobis_raw(model, scene, mahalanobis_scorer))
    lo = min(float(r.min()) for r in raws)
    hi = max(float(r.max()) for r in raws)
    span = hi - lo
    heatmaps = []
    for raw in raws:
        scaled = np.zeros_like(raw) if span == 0.0 else (raw - lo) / span
        heatmaps.append(HeatMap(np.clip(scaled, 0.0, 1.0).astype(np.float32)))
    return heatmaps
