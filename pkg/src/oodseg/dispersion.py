"""Pixel-wise dispersion measures derived from softmax probabilities.

All measures map a probability vector to a score in [0, 1] where higher
means "less confident". Natural logarithms throughout; the entropy is
normalized by log(q) so scores are comparable across class counts.
"""

import numpy as np

from .base import as_prob_vector
from .formats import HeatMap

DISPERSION_KINDS = ("entropy", "variation_ratio", "probability_margin", "max_softmax")


def _entropy_rows(rows):
    # 0 * log(0) := 0; inputs are clamped upstream so log stays finite.
    terms = np.zeros_like(rows)
    mask = rows > 0.0
    terms[mask] = rows[mask] * np.log(rows[mask])
    scores = -terms.sum(axis=1) / np.log(rows.shape[1])
    return np.clip(scores, 0.0, 1.0)


def _variation_ratio_rows(rows):
    return np.clip(1.0 - rows.max(axis=1), 0.0, 1.0)


def _margin_rows(rows):
    # argmax picks the lowest class index on ties, matching MAP prediction.
    top = rows.argmax(axis=1)
    rest = rows.copy()
    rest[np.arange(rows.shape[0]), top] = -np.inf
    second = rest.max(axis=1)
    return np.clip(1.0 - rows.max(axis=1) + second, 0.0, 1.0)


_ROW_OPS = {
    "entropy": _entropy_rows,
    "variation_ratio": _variation_ratio_rows,
    "probability_margin": _margin_rows,
    "max_softmax": _variation_ratio_rows,  # 1 - max softmax is the same formula
}


def entropy_normalized(p):
    """Shannon entropy of ``p`` scaled into [0, 1].

    The uniform vector maps to 1.0, any one-hot vector to 0.0.
    """
    p = as_prob_vector(p)
    return float(_entropy_rows(p[None, :])[0])


def variation_ratio(p):
    """One minus the largest probability."""
    p = as_prob_vector(p)
    return float(_variation_ratio_rows(p[None, :])[0])


def probability_margin(p):
    """Variation ratio plus the runner-up probability.

    Ties for the maximum are broken towards the lowest class index, so a
    two-way tie yields a margin of 1.
    """
    p = as_prob_vector(p)
    return float(_margin_rows(p[None, :])[0])


def max_softmax_score(p):
    """The common baseline score 1 - max_j p_j (identical to the variation ratio)."""
    return variation_ratio(p)


def heatmap(softmax, kind="entropy"):
    """Apply a dispersion measure to every pixel of a softmax map."""
    if kind not in _ROW_OPS:
        raise ValueError(f"unknown dispersion kind {kind!r}; legal: {DISPERSION_KINDS}")
    rows = softmax.rows().astype(np.float64)
    scores = _ROW_OPS[kind](rows)
    return HeatMap(scores.reshape(softmax.height, softmax.width).astype(np.float32))
