"""Least angle regression for ranking meta-classification features.

Classical least-squares LARS over standardized feature columns and a
centered binary response. Starting from all-zero coefficients, the
feature most correlated with the residual enters the active set; the
active coefficients then move jointly along the equiangular direction
until an inactive feature matches the active correlation, at which point
it enters too. One feature enters per step (ties broken by column
order), coefficient paths are piecewise linear between steps, and a full
path ends at the ordinary least-squares solution.

Features that enter early are the ones most correlated with the TP/FP
response, which is what makes the path useful as a feature ranking.
"""

import csv
import warnings
from dataclasses import dataclass, field

import numpy as np

from .base import as_float_matrix
from .meta import column_spread, standardize_columns


@dataclass
class LarsStep:
    index: int
    feature: str
    coefficients: np.ndarray
    l1_ratio: float = 0.0


@dataclass
class LarsPath:
    steps: list = field(default_factory=list)
    feature_names: list = field(default_factory=list)
    dropped: list = field(default_factory=list)

    @property
    def entering_order(self):
        return [s.feature for s in self.steps]

    @property
    def final_coefficients(self):
        return self.steps[-1].coefficients if self.steps else np.zeros(0)

    def write_csv(self, path):
        """Coefficient trajectory per step, one column per feature."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["step", "feature", "l1_ratio"] + list(self.feature_names))
            for s in self.steps:
                writer.writerow([s.index, s.feature, repr(s.l1_ratio)]
                                + [repr(float(c)) for c in s.coefficients])


def lars_path(X, y, feature_names=None, max_steps=None):
    """Trace the LARS coefficient path on standardized data.

    ``X`` is standardized column-wise and ``y`` centered internally;
    coefficients are reported in that standardized space. Zero-variance
    columns cannot carry correlation and are excluded with a warning.
    """
    X = as_float_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape[0] != X.shape[0]:
        raise ValueError("X and y must have equal length")
    n, m = X.shape
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(m)]
    if len(names) != m:
        raise ValueError("feature_names length must match the number of columns")

    _, _, constant = column_spread(X)
    keep = ~constant
    dropped = [names[i] for i in range(m) if not keep[i]]
    if dropped:
        warnings.warn(f"excluding zero-variance features: {dropped}")
    usable = np.nonzero(keep)[0]
    Z, _, _ = standardize_columns(X[:, usable])
    r = y - y.mean()

    limit = min(len(usable), max(n - 1, 1))
    if max_steps is not None:
        limit = min(limit, int(max_steps))

    beta = np.zeros(len(usable))
    active = []
    steps = []
    corr = Z.T @ r
    entering = int(np.argmax(np.abs(corr)))  # ties resolve to the lowest index

    while len(steps) < limit:
        active.append(entering)
        corr = Z.T @ (r - Z @ beta)
        c_max = np.max(np.abs(corr[active]))
        if c_max <= 1e-12:
            active.pop()
            break
        signs = np.sign(corr[active])
        signs[signs == 0.0] = 1.0
        Za = Z[:, active] * signs
        gram = Za.T @ Za
        try:
            w = np.linalg.solve(gram, np.ones(len(active)))
        except np.linalg.LinAlgError:
            warnings.warn("collinear active set; stopping the path early")
            active.pop()
            break
        norm = 1.0 / np.sqrt(float(np.sum(w)))
        w *= norm
        u = Za @ w
        a = Z.T @ u

        inactive = [j for j in range(len(usable)) if j not in active]
        if not inactive or len(active) == limit:
            gamma, nxt = c_max / norm, None
        else:
            gamma, nxt = None, None
            for j in inactive:
                for num, den in ((c_max - corr[j], norm - a[j]),
                                 (c_max + corr[j], norm + a[j])):
                    if den <= 1e-12:
                        continue
                    g = num / den
                    if g > 1e-12 and (gamma is None or g < gamma - 1e-12):
                        gamma, nxt = g, j
            if gamma is None:
                gamma, nxt = c_max / norm, None

        for k, j in enumerate(active):
            beta[j] += gamma * signs[k] * w[k]
        coefs = np.zeros(m)
        coefs[usable] = beta
        steps.append(LarsStep(len(steps) + 1, names[usable[entering]], coefs))
        if nxt is None:
            break
        entering = nxt

    max_l1 = max((float(np.abs(s.coefficients).sum()) for s in steps), default=0.0)
    for s in steps:
        s.l1_ratio = float(np.abs(s.coefficients).sum()) / max_l1 if max_l1 > 0 else 0.0
    return LarsPath(steps, names, dropped)
