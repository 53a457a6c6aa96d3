"""Dataset-level evaluation: segment error tables, road miss rate, mIoU.

Works on (SoftmaxMap, LabelMap, image_id) triples. Ignore-labeled pixels
never enter any count. Segment error rows aggregate true/false positive
predictions and missed ground-truth objects over the dataset at each
threshold, optionally after meta-classifier false-positive removal, and
carry the road miss rate: the fraction of designated in-distribution
pixels (default: class 0) swallowed by the kept OoD predictions.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import dispersion, features, meta, metrics, segments
from .formats import IGNORE_LABEL


@dataclass
class SegmentErrorRow:
    threshold: float
    tp: int
    fp: int
    fn: int
    f1: float
    road_miss: float


@dataclass
class SegmentErrorTable:
    kind: str
    rows: list = field(default_factory=list)

    def as_records(self):
        return [
            {
                "threshold": r.threshold,
                "tp": r.tp,
                "fp": r.fp,
                "fn": r.fn,
                "f1": r.f1,
                "road_miss": r.road_miss,
            }
            for r in self.rows
        ]


def f1_score(tp, fp, fn):
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


def gather_scores(pairs, kind="entropy", heatmaps=None):
    """Merge evaluable pixels of the whole dataset into one score pool."""
    pool = None
    for i, (softmax, labels, _) in enumerate(pairs):
        heat = heatmaps[i] if heatmaps is not None else dispersion.heatmap(softmax, kind)
        sp = metrics.ScoredPixels.from_maps(heat, labels)
        pool = sp if pool is None else pool.merged_with(sp)
    return pool


def detect(softmax, t, kind="entropy", image_id="", heat=None):
    """Heatmap -> threshold -> components for one image."""
    if heat is None:
        heat = dispersion.heatmap(softmax, kind)
    mask = segments.threshold_mask(heat, t)
    return segments.connected_components(mask, image_id)


def _road_counts(label_map, kept_segments, road_classes):
    designated = np.isin(label_map.labels, list(road_classes))
    total = int(designated.sum())
    if total == 0:
        return 0, 0
    flagged = np.zeros(label_map.labels.shape, dtype=bool)
    for seg in kept_segments:
        flagged[seg.pixels[:, 0], seg.pixels[:, 1]] = True
    missed = int((designated & flagged).sum())
    return missed, total


def road_miss_rate(pairs, t, kind="entropy", road_classes=(0,)):
    """Fraction of designated in-distribution pixels flagged as OoD."""
    missed = total = 0
    for softmax, labels, image_id in pairs:
        segs = detect(softmax, t, kind, image_id)
        m, n = _road_counts(labels, segs, road_classes)
        missed += m
        total += n
    if total == 0:
        raise ValueError(f"no pixel carries a designated road class {road_classes}")
    return missed / total


def segment_errors(pairs, thresholds, kind="entropy", meta_model=None,
                   cutoff=0.5, road_classes=(0,)):
    """TP/FP/FN/F1 and road miss rate per threshold over the dataset.

    With a fitted meta model, predicted segments scoring below ``cutoff``
    are removed before counting, and misses are re-derived from the kept
    segments (dropping a true positive can create a miss).
    """
    per_image = []
    for softmax, labels, image_id in pairs:
        heats = {k: dispersion.heatmap(softmax, k)
                 for k in ("entropy", "variation_ratio", "probability_margin")}
        per_image.append((softmax, labels, image_id, heats))

    table = SegmentErrorTable(kind)
    for t in thresholds:
        tp = fp = fn = 0
        missed = total = 0
        for softmax, labels, image_id, heats in per_image:
            segs = detect(softmax, t, kind, image_id, heat=heats[kind])
            if meta_model is not None and segs:
                match = segments.match_segments(segs, labels)
                rows = [features.feature_row(s, softmax, heats) for s in segs]
                X = np.vstack([r.values for r in rows])
                probs = meta_model.predict_proba(X)[:, 1]
                segs = meta.remove_fp(segs, match, probs, cutoff)
            match = segments.match_segments(segs, labels)
            tp += match.tp
            fp += match.fp
            fn += match.fn
            m, n = _road_counts(labels, segs, road_classes)
            missed += m
            total += n
        miss_rate = missed / total if total else 0.0
        table.rows.append(SegmentErrorRow(float(t), tp, fp, fn,
                                          f1_score(tp, fp, fn), miss_rate))
    return table


def miou_with_ood(pairs, t, kind="entropy"):
    """Mean IoU over in-distribution classes with an extra OoD prediction.

    The per-pixel prediction is the MAP class, overridden to the OoD
    class wherever the heatmap score reaches ``t``. Per-class IoU counts
    accumulate over the dataset on evaluable pixels; classes absent from
    both prediction and ground truth drop out of the mean.
    """
    q = pairs[0][0].num_classes
    inter = np.zeros(q, dtype=np.int64)
    pred_count = np.zeros(q, dtype=np.int64)
    gt_count = np.zeros(q, dtype=np.int64)
    for softmax, labels, _ in pairs:
        heat = dispersion.heatmap(softmax, kind)
        pred = softmax.values.argmax(axis=2).astype(np.int64)
        pred[heat.values >= t] = q
        keep = labels.labels != IGNORE_LABEL
        p = pred[keep]
        g = labels.labels[keep].astype(np.int64)
        for c in range(q):
            inter[c] += int(((p == c) & (g == c)).sum())
            pred_count[c] += int((p == c).sum())
            gt_count[c] += int((g == c).sum())
    union = pred_count + gt_count - inter
    present = union > 0
    if not present.any():
        return 0.0
    return float((inter[present] / union[present]).mean())


def quantile_report(pool):
    summary = metrics.quantile_summary(pool)
    return {"positive": summary.positive, "negative": summary.negative}


def pixel_report(pool, tpr_target=0.95):
    """AUROC / AUPRC / FPR at the target TPR plus curve point counts."""
    roc = metrics.roc_curve(pool)
    pr = metrics.pr_curve(pool)
    return {
        "auroc": roc.area,
        "auprc": pr.area,
        "fpr_at_tpr": metrics.fpr_at_tpr(pool, tpr_target),
        "tpr_target": tpr_target,
        "positive_fraction": pool.n_pos / (pool.n_pos + pool.n_neg),
        "n_positive": pool.n_pos,
        "n_negative": pool.n_neg,
    }


def write_report(report, path):
    """Serialize a report dict as canonical JSON (sorted keys, 2-space indent)."""
    with open(path, "w") as f:
        json.dump(report, f, indent=2, sort_keys=True)
        f.write("\n")
