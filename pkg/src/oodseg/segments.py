"""Thresholding heatmaps into OoD masks, component extraction and matching.

A pixel is predicted out-of-distribution when its heatmap score meets the
threshold (inclusive). Maximal 8-connected components of the flagged
pixels form the OoD segment predictions; a prediction counts as a true
positive as soon as it overlaps a single ground-truth OoD pixel.
"""

from dataclasses import dataclass, field

import numpy as np

from .formats import IGNORE_LABEL, FormatError

# predecessors scanned during the first labeling pass (raster order)
_PREV4 = ((-1, -1), (-1, 0), (-1, 1), (0, -1))

VERDICT_TP = "TP"
VERDICT_FP = "FP"
VERDICT_IGNORED = "ignored"


class OoDPixelMask:
    """Boolean OoD prediction mask together with the threshold that made it."""

    def __init__(self, flags, threshold):
        flags = np.ascontiguousarray(flags, dtype=bool)
        if flags.ndim != 2:
            raise ValueError(f"mask must be (H, W), got shape {flags.shape}")
        flags.setflags(write=False)
        self.flags = flags
        self.threshold = float(threshold)

    @property
    def height(self):
        return self.flags.shape[0]

    @property
    def width(self):
        return self.flags.shape[1]


@dataclass
class OoDSegment:
    """One 8-connected component of predicted OoD pixels.

    ``pixels`` is an (n, 2) int32 array of (row, col) pairs in raster
    order; ``bbox`` is (h0, w0, h1, w1) inclusive.
    """

    segment_id: int
    pixels: np.ndarray
    bbox: tuple
    image_id: str = ""

    def __post_init__(self):
        if len(self.pixels) == 0:
            raise ValueError("a segment must contain at least one pixel")

    @property
    def size(self):
        return int(self.pixels.shape[0])


@dataclass
class MatchResult:
    """Verdicts for predicted segments and hit flags for ground-truth objects."""

    verdicts: list
    gt_found: list
    gt_segments: list = field(default_factory=list)

    @property
    def tp(self):
        return sum(1 for v in self.verdicts if v == VERDICT_TP)

    @property
    def fp(self):
        return sum(1 for v in self.verdicts if v == VERDICT_FP)

    @property
    def fn(self):
        return sum(1 for found in self.gt_found if not found)


def threshold_mask(heat, t):
    """Flag every pixel whose score is at least ``t``."""
    return OoDPixelMask(heat.values >= t, t)


def _label_components(flags):
    """Two-pass union-find labeling with 8-connectivity.

    Returns a list of (pixels, bbox) tuples ordered by the raster position
    of each component's first pixel.
    """
    h_dim, w_dim = flags.shape
    labels = np.zeros((h_dim, w_dim), dtype=np.int32)
    parent = [0]

    def find(a):
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    next_label = 1
    for h in range(h_dim):
        for w in range(w_dim):
            if not flags[h, w]:
                continue
            roots = []
            for dh, dw in _PREV4:
                hh, ww = h + dh, w + dw
                if 0 <= hh < h_dim and 0 <= ww < w_dim and labels[hh, ww]:
                    r = find(labels[hh, ww])
                    if r not in roots:
                        roots.append(r)
            if not roots:
                parent.append(next_label)
                labels[h, w] = next_label
                next_label += 1
            else:
                r0 = min(roots)
                labels[h, w] = r0
                for r in roots:
                    if r != r0:
                        parent[r] = r0

    groups = {}
    order = []
    for h in range(h_dim):
        for w in range(w_dim):
            if not labels[h, w]:
                continue
            r = find(labels[h, w])
            if r not in groups:
                groups[r] = []
                order.append(r)
            groups[r].append((h, w))

    out = []
    for r in order:
        pixels = np.array(groups[r], dtype=np.int32)
        bbox = (
            int(pixels[:, 0].min()),
            int(pixels[:, 1].min()),
            int(pixels[:, 0].max()),
            int(pixels[:, 1].max()),
        )
        out.append((pixels, bbox))
    return out


def connected_components(mask, image_id=""):
    """Split a mask's flagged pixels into maximal 8-connected components.

    Segment ids count from 1 in the raster order of each component's
    first pixel, so the partition is deterministic.
    """
    segments = []
    for i, (pixels, bbox) in enumerate(_label_components(mask.flags), start=1):
        segments.append(OoDSegment(i, pixels, bbox, image_id))
    return segments


def ground_truth_components(label_map, image_id=""):
    """8-connected components of the pixels labeled OoD in the ground truth."""
    flags = label_map.labels == label_map.ood_label
    segments = []
    for i, (pixels, bbox) in enumerate(_label_components(flags), start=1):
        segments.append(OoDSegment(i, pixels, bbox, image_id))
    return segments


def match_segments(segments, label_map):
    """Judge predicted segments against the ground truth.

    A predicted segment is a true positive when at least one of its pixels
    carries the OoD label. Segments lying entirely on ignore-labeled
    pixels are dropped from the tally (verdict ``"ignored"``); mixed
    segments are judged on their evaluable pixels only. A ground-truth
    OoD component counts as found when any predicted segment touches it.
    """
    labels = label_map.labels
    h_dim, w_dim = labels.shape
    predicted = np.zeros((h_dim, w_dim), dtype=bool)
    for seg in segments:
        if seg.bbox[2] >= h_dim or seg.bbox[3] >= w_dim:
            raise FormatError(
                f"segment {seg.segment_id} bbox {seg.bbox} exceeds "
                f"label map {h_dim}x{w_dim}"
            )
        predicted[seg.pixels[:, 0], seg.pixels[:, 1]] = True

    verdicts = []
    for seg in segments:
        values = labels[seg.pixels[:, 0], seg.pixels[:, 1]]
        evaluable = values != IGNORE_LABEL
        if not evaluable.any():
            verdicts.append(VERDICT_IGNORED)
        elif (values == label_map.ood_label).any():
            verdicts.append(VERDICT_TP)
        else:
            verdicts.append(VERDICT_FP)

    gt_segments = ground_truth_components(label_map)
    gt_found = [
        bool(predicted[gs.pixels[:, 0], gs.pixels[:, 1]].any()) for gs in gt_segments
    ]
    return MatchResult(verdicts, gt_found, gt_segments)


def segments_to_records(segments, match=None):
    """JSON-ready records: image id, segment id, pixel count, bbox, verdict."""
    records = []
    for i, seg in enumerate(segments):
        records.append(
            {
                "image_id": seg.image_id,
                "segment_id": seg.segment_id,
                "pixel_count": seg.size,
                "bbox": list(seg.bbox),
                "verdict": match.verdicts[i] if match is not None else "",
            }
        )
    return records
