"""Exact pixel-score metrics: ROC / PR curves, their areas, and quantiles.

Out-of-distribution pixels are the positive class, in-distribution pixels
the negative class; ignore-labeled pixels never enter. Curves come from
exact sorted sweeps with tied scores grouped at a single threshold, so the
ROC area equals the probability that a random positive outscores a random
negative (ties counted half) and the PR area is the average precision.
"""

from dataclasses import dataclass, field

import numpy as np

from .formats import IGNORE_LABEL

_trapezoid = getattr(np, "trapezoid", None) or np.trapz

QUANTILE_POINTS = (
    ("min", 0.0),
    ("p1", 0.01),
    ("p10", 0.10),
    ("p25", 0.25),
    ("median", 0.50),
    ("p75", 0.75),
    ("p90", 0.90),
    ("p99", 0.99),
    ("max", 1.0),
)


class ScoredPixels:
    """Flat per-pixel scores with binary OoD labels."""

    def __init__(self, scores, labels):
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels, dtype=bool).ravel()
        if scores.shape != labels.shape:
            raise ValueError("scores and labels must have equal length")
        if not np.all(np.isfinite(scores)):
            raise ValueError("scores contain non-finite values")
        self.scores = scores
        self.labels = labels

    @classmethod
    def from_maps(cls, heat, label_map):
        """Gather evaluable pixels from a heatmap / label-map pair."""
        if heat.values.shape != label_map.labels.shape:
            raise ValueError("heatmap and label map dimensions differ")
        keep = label_map.labels != IGNORE_LABEL
        return cls(heat.values[keep], label_map.labels[keep] == label_map.ood_label)

    @property
    def n_pos(self):
        return int(self.labels.sum())

    @property
    def n_neg(self):
        return int((~self.labels).sum())

    def merged_with(self, other):
        return ScoredPixels(
            np.concatenate([self.scores, other.scores]),
            np.concatenate([self.labels, other.labels]),
        )


@dataclass
class Curve:
    kind: str
    xs: np.ndarray
    ys: np.ndarray
    thresholds: np.ndarray
    area: float


@dataclass
class QuantileSummary:
    positive: dict = field(default_factory=dict)
    negative: dict = field(default_factory=dict)


def _grouped_counts(sp):
    """Cumulative TP/FP counts at each distinct score, descending."""
    order = np.argsort(-sp.scores, kind="mergesort")
    scores = sp.scores[order]
    pos = sp.labels[order].astype(np.int64)
    boundaries = np.nonzero(np.diff(scores))[0]
    idx = np.concatenate([boundaries, [scores.size - 1]])
    tp = np.cumsum(pos)[idx]
    fp = (idx + 1) - tp
    return scores[idx], tp, fp


def roc_curve(sp):
    """ROC curve over grouped thresholds with a (0, 0) anchor point."""
    if sp.n_pos == 0 or sp.n_neg == 0:
        raise ValueError("ROC needs both positive and negative pixels")
    thresholds, tp, fp = _grouped_counts(sp)
    tpr = np.concatenate([[0.0], tp / sp.n_pos])
    fpr = np.concatenate([[0.0], fp / sp.n_neg])
    area = float(_trapezoid(tpr, fpr))
    return Curve("roc", fpr, tpr, thresholds, area)


def auroc(sp):
    return roc_curve(sp).area


def pr_curve(sp):
    """Precision-recall curve; area by the average-precision step sum."""
    if sp.n_pos == 0:
        raise ValueError("PR needs at least one positive pixel")
    thresholds, tp, fp = _grouped_counts(sp)
    recall = tp / sp.n_pos
    precision = tp / (tp + fp)
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    area = float(np.sum((recall - prev_recall) * precision))
    return Curve("pr", recall, precision, thresholds, area)


def auprc(sp):
    return pr_curve(sp).area


def fpr_at_tpr(sp, tpr_target=0.95):
    """Smallest false-positive rate among thresholds reaching the target TPR."""
    if sp.n_pos == 0 or sp.n_neg == 0:
        raise ValueError("FPR@TPR needs both positive and negative pixels")
    _, tp, fp = _grouped_counts(sp)
    tpr = tp / sp.n_pos
    fpr = fp / sp.n_neg
    reached = tpr >= tpr_target
    if not reached.any():
        return 1.0
    return float(fpr[reached].min())


def quantile_summary(sp):
    """Linear-interpolation quantiles of the score distribution per class."""
    if sp.n_pos == 0 or sp.n_neg == 0:
        raise ValueError("quantile summary needs both classes to be non-empty")
    summary = QuantileSummary()
    for attr, scores in (("positive", sp.scores[sp.labels]),
                         ("negative", sp.scores[~sp.labels])):
        stats = {name: float(np.quantile(scores, frac)) for name, frac in QUANTILE_POINTS}
        setattr(summary, attr, stats)
    return summary
