"""Segment-level meta classification: is a predicted OoD segment real?

A plain L2-regularized logistic regression on standardized segment
features separates true from false positive OoD predictions. The fit is
a damped Newton iteration (iteratively reweighted least squares with
step halving), which is deterministic and monotonically decreases the
penalized negative log-likelihood; a halved gradient step takes over
whenever the Newton system is ill-conditioned.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .base import ParamsMixin, as_binary_labels, as_float_matrix
from .segments import VERDICT_FP, VERDICT_TP


@dataclass
class MetaDataset:
    """Feature rows with binary TP/FP labels for meta classification."""

    X: np.ndarray
    y: np.ndarray
    feature_names: list = field(default_factory=list)

    @classmethod
    def from_rows(cls, rows, verdicts, feature_names=None):
        """Build from feature rows and match verdicts, dropping ignored segments."""
        keep_X, keep_y = [], []
        for row, verdict in zip(rows, verdicts):
            if verdict == VERDICT_TP:
                keep_X.append(row.values)
                keep_y.append(1)
            elif verdict == VERDICT_FP:
                keep_X.append(row.values)
                keep_y.append(0)
        X = np.vstack(keep_X) if keep_X else np.zeros((0, 0))
        return cls(X, np.array(keep_y, dtype=np.int64), list(feature_names or []))


def column_spread(X):
    """Per-column mean/std with effectively-constant columns flagged.

    A column whose std is within float rounding of zero (relative to its
    mean) counts as constant and gets a unit divisor, so standardization
    never amplifies pure representation noise.
    """
    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=0)
    constant = stds <= 1e-12 * (1.0 + np.abs(means))
    return means, np.where(constant, 1.0, stds), constant


def standardize_columns(X):
    """Per-column mean/std; constant columns get a unit divisor."""
    means, stds, _ = column_spread(X)
    return (X - means) / stds, means, stds


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _penalized_nll(Z, y, beta, l2):
    # beta = [weights..., intercept]; the intercept is not penalized
    z = Z @ beta[:-1] + beta[-1]
    nll = float(np.sum(np.logaddexp(0.0, z) - y * z))
    return nll + 0.5 * l2 * float(beta[:-1] @ beta[:-1])


def _fit_irls(Z, y, l2, tol, max_iter):
    """Damped Newton on the penalized NLL. Returns (beta, trace, n_iter)."""
    n, m = Z.shape
    design = np.hstack([Z, np.ones((n, 1))])
    penalty = np.ones(m + 1) * l2
    penalty[-1] = 0.0
    beta = np.zeros(m + 1)
    loss = _penalized_nll(Z, y, beta, l2)
    trace = [loss]
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        p = _sigmoid(design @ beta)
        grad = design.T @ (p - y) + penalty * beta
        if np.max(np.abs(grad)) <= tol:
            n_iter -= 1
            break
        w = p * (1.0 - p)
        hess = design.T @ (design * w[:, None]) + np.diag(penalty)
        try:
            step = np.linalg.solve(hess, grad)
            if not np.all(np.isfinite(step)):
                raise np.linalg.LinAlgError
        except np.linalg.LinAlgError:
            step = grad / max(1.0, np.max(np.abs(grad)))
        # the quadratic model predicts a decrease of g's/2; once that is
        # below float64 resolution of the loss, no measurable progress is
        # possible and the fit has converged as far as the arithmetic allows
        if 0.5 * float(grad @ step) <= 1e-14 * (1.0 + abs(loss)):
            n_iter -= 1
            break
        # halve until the penalized loss decreases (strictly convex target)
        scale = 1.0
        for _ in range(60):
            candidate = beta - scale * step
            new_loss = _penalized_nll(Z, y, candidate, l2)
            if new_loss <= loss:
                break
            scale *= 0.5
        else:
            break
        beta, loss = candidate, new_loss
        trace.append(loss)
    return beta, trace, n_iter


class LogisticMetaClassifier(ParamsMixin):
    """L2-regularized logistic regression over standardized features.

    Probability-of-true-positive model for predicted OoD segments. The
    default regularization is a numerical safeguard for separable data,
    not a tuning knob. ``seed`` is accepted for interface stability; the
    optimizer is deterministic (zero initialization) and does not use it.
    """

    def __init__(self, l2=1e-6, tol=1e-8, max_iter=10000, seed=0):
        self.l2 = l2
        self.tol = tol
        self.max_iter = max_iter
        self.seed = seed

    def fit(self, X, y):
        X = as_float_matrix(X)
        y = as_binary_labels(y, X.shape[0])
        if X.shape[0] < 2:
            raise ValueError("need at least 2 rows to fit")
        if np.unique(y).size < 2:
            raise ValueError("training data contains a single class")
        Z, self.means_, self.stds_ = standardize_columns(X)
        beta, trace, n_iter = _fit_irls(Z, y.astype(np.float64),
                                        self.l2, self.tol, self.max_iter)
        self.coef_ = beta[:-1]
        self.intercept_ = float(beta[-1])
        self.loss_trace_ = trace
        self.n_iter_ = n_iter
        return self

    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise ValueError("classifier is not fitted")

    def decision_function(self, X):
        self._check_fitted()
        X = as_float_matrix(X)
        Z = (X - self.means_) / self.stds_
        return Z @ self.coef_ + self.intercept_

    def predict_proba(self, X):
        p = _sigmoid(self.decision_function(X))
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(np.int64)

    def to_json(self, feature_names=None):
        self._check_fitted()
        doc = {
            "kind": "logistic-meta-classifier",
            "l2": self.l2,
            "tol": self.tol,
            "max_iter": self.max_iter,
            "intercept": self.intercept_,
            "weights": [float(v) for v in self.coef_],
            "means": [float(v) for v in self.means_],
            "stds": [float(v) for v in self.stds_],
            "n_iter": self.n_iter_,
            "final_loss": self.loss_trace_[-1],
            "feature_names": list(feature_names or []),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        doc = json.loads(text)
        model = cls(l2=doc["l2"], tol=doc["tol"], max_iter=doc["max_iter"])
        model.coef_ = np.array(doc["weights"], dtype=np.float64)
        model.intercept_ = float(doc["intercept"])
        model.means_ = np.array(doc["means"], dtype=np.float64)
        model.stds_ = np.array(doc["stds"], dtype=np.float64)
        model.n_iter_ = int(doc["n_iter"])
        model.loss_trace_ = [float(doc["final_loss"])]
        model.feature_names = list(doc.get("feature_names", []))
        return model


def fit_logistic(X, y, l2=1e-6, seed=0):
    """Fit the meta classifier; see :class:`LogisticMetaClassifier`."""
    return LogisticMetaClassifier(l2=l2, seed=seed).fit(X, y)


@dataclass
class LooResult:
    """Held-out probabilities from leave-one-out cross-validation.

    ``intercept_only`` flags rows whose training fold contained a single
    class, which are predicted by that fold's empirical rate.
    """

    probs: np.ndarray
    intercept_only: np.ndarray


def loo_cross_validate(X, y, l2=1e-6, seed=0):
    """Leave-one-out predicted TP probability for every row.

    Standardization is recomputed on each training fold so the held-out
    row never influences its own prediction.
    """
    X = as_float_matrix(X)
    y = as_binary_labels(y, X.shape[0])
    n = X.shape[0]
    if n < 3:
        raise ValueError("leave-one-out needs at least 3 rows")
    probs = np.zeros(n)
    degenerate = np.zeros(n, dtype=bool)
    for i in range(n):
        keep = np.arange(n) != i
        y_fold = y[keep]
        if np.unique(y_fold).size < 2:
            probs[i] = float(y_fold.mean())
            degenerate[i] = True
            continue
        model = LogisticMetaClassifier(l2=l2, seed=seed).fit(X[keep], y_fold)
        probs[i] = float(model.predict_proba(X[i : i + 1])[0, 1])
    return LooResult(probs, degenerate)


def remove_fp(segments, match, probs, cutoff=0.5):
    """Keep segments whose predicted TP probability reaches the cutoff.

    Error counts must be re-derived from the filtered list afterwards:
    discarding a true positive segment can turn a found ground-truth
    object into a miss.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if len(segments) != len(probs) or len(segments) != len(match.verdicts):
        raise ValueError("segments, match verdicts and probabilities must align")
    return [seg for seg, p in zip(segments, probs) if p >= cutoff]
