"""Hand-crafted per-segment metrics feeding the meta classifier.

For every predicted OoD segment we aggregate the pixel-wise dispersion
measures (entropy E, variation ratio V, probability margin M) over the
whole segment, its interior and its boundary, record the per-class mean
softmax probabilities and their variances, geometry features (sizes,
relative sizes, geometric center), and the class profile of the
segment's immediate neighborhood.

Canonical ordering (q = number of classes):

* ``E_mean, E_var, E_int_mean, E_int_var, E_bd_mean, E_bd_var`` then the
  same six entries for ``V`` and ``M`` (18 values),
* ``S, S_in, S_bd, S_rel, S_in_rel`` (5),
* ``f_j_mean`` for j = 0..q-1, then ``f_j_var`` (2q),
* ``N_j`` neighborhood class proportions (q),
* ``C_h, C_w`` (2),
* ``int_empty`` indicator, 1 when the interior is empty (exported for
  bookkeeping, not counted in the 3q + 25 canonical features).

All variances are population variances (denominator = region size) and
are zero for regions with at most one pixel. Statistics over an empty
interior are zero with ``int_empty`` set.
"""

from dataclasses import dataclass

import numpy as np

from . import dispersion

_MEASURES = ("E", "V", "M")
_MEASURE_KINDS = {
    "E": "entropy",
    "V": "variation_ratio",
    "M": "probability_margin",
}


def feature_names(q):
    """Column names of the exported feature vector for ``q`` classes."""
    names = []
    for m in _MEASURES:
        names += [f"{m}_mean", f"{m}_var", f"{m}_int_mean", f"{m}_int_var",
                  f"{m}_bd_mean", f"{m}_bd_var"]
    names += ["S", "S_in", "S_bd", "S_rel", "S_in_rel"]
    names += [f"f_{j}_mean" for j in range(q)]
    names += [f"f_{j}_var" for j in range(q)]
    names += [f"N_{j}" for j in range(q)]
    names += ["C_h", "C_w", "int_empty"]
    return names


def num_features(q):
    """Canonical feature count, excluding the int_empty export indicator."""
    return 3 * q + 25


@dataclass
class FeatureRow:
    segment_id: int
    image_id: str
    values: np.ndarray

    def as_dict(self, q):
        return dict(zip(feature_names(q), self.values))


def _segment_canvas(segment, shape):
    canvas = np.zeros(shape, dtype=bool)
    canvas[segment.pixels[:, 0], segment.pixels[:, 1]] = True
    return canvas


def _interior_canvas(canvas):
    # a pixel is interior iff all 8 neighbors exist and belong to the
    # segment; zero padding makes image-border pixels boundary by default
    padded = np.pad(canvas, 1, constant_values=False)
    interior = canvas.copy()
    for dh in (-1, 0, 1):
        for dw in (-1, 0, 1):
            interior &= padded[1 + dh : 1 + dh + canvas.shape[0],
                               1 + dw : 1 + dw + canvas.shape[1]]
    return interior


def interior_boundary(segment, mask):
    """Split a segment into interior and boundary pixel arrays.

    Interior pixels have their full 8-neighborhood inside the segment;
    everything else, including image-border pixels, is boundary. Both
    arrays keep the segment's raster order.
    """
    shape = (mask.height, mask.width)
    canvas = _segment_canvas(segment, shape)
    interior = _interior_canvas(canvas)
    inside = interior[segment.pixels[:, 0], segment.pixels[:, 1]]
    return segment.pixels[inside], segment.pixels[~inside]


def neighborhood_profile(segment, softmax):
    """Class proportions of the pixels bordering the segment.

    Over the pixels 8-adjacent to the segment but outside it, returns the
    fraction whose maximum-a-posteriori class is j, for every class j.
    All zeros when the segment covers the whole image.
    """
    shape = (softmax.height, softmax.width)
    canvas = _segment_canvas(segment, shape)
    padded = np.pad(canvas, 1, constant_values=False)
    dilated = np.zeros(shape, dtype=bool)
    for dh in (-1, 0, 1):
        for dw in (-1, 0, 1):
            dilated |= padded[1 + dh : 1 + dh + shape[0], 1 + dw : 1 + dw + shape[1]]
    ring = dilated & ~canvas
    q = softmax.num_classes
    profile = np.zeros(q, dtype=np.float64)
    n_ring = int(ring.sum())
    if n_ring == 0:
        return profile
    map_classes = softmax.values[ring].argmax(axis=1)
    counts = np.bincount(map_classes, minlength=q)
    return counts / n_ring


def _stats(values):
    """Mean and population variance; zeros for empty or singleton regions."""
    n = values.shape[0]
    if n == 0:
        return 0.0, 0.0
    mean = float(values.mean())
    if n == 1:
        return mean, 0.0
    return mean, float(values.var(ddof=0))


def feature_row(segment, softmax, heatmaps=None):
    """Compute the full metric vector for one segment.

    ``heatmaps`` may carry precomputed dispersion heatmaps keyed by kind
    ("entropy", "variation_ratio", "probability_margin"); missing ones
    are computed on the fly.
    """
    heatmaps = dict(heatmaps) if heatmaps else {}
    for kind in _MEASURE_KINDS.values():
        if kind not in heatmaps:
            heatmaps[kind] = dispersion.heatmap(softmax, kind)

    mask_shape = (softmax.height, softmax.width)
    canvas = _segment_canvas(segment, mask_shape)
    interior = _interior_canvas(canvas)
    inside = interior[segment.pixels[:, 0], segment.pixels[:, 1]]
    int_pixels = segment.pixels[inside]
    bd_pixels = segment.pixels[~inside]

    values = []
    for m in _MEASURES:
        heat = heatmaps[_MEASURE_KINDS[m]].values
        for region in (segment.pixels, int_pixels, bd_pixels):
            scores = heat[region[:, 0], region[:, 1]].astype(np.float64)
            values.extend(_stats(scores))

    size = segment.size
    size_in = int(int_pixels.shape[0])
    size_bd = int(bd_pixels.shape[0])
    values += [float(size), float(size_in), float(size_bd),
               size / size_bd, size_in / size_bd]

    probs = softmax.values[segment.pixels[:, 0], segment.pixels[:, 1]].astype(np.float64)
    means = probs.mean(axis=0)
    variances = probs.var(axis=0, ddof=0) if size > 1 else np.zeros(softmax.num_classes)
    values += list(means)
    values += list(variances)

    values += list(neighborhood_profile(segment, softmax))

    values += [float(segment.pixels[:, 0].mean()), float(segment.pixels[:, 1].mean())]
    values.append(1.0 if size_in == 0 else 0.0)
    return FeatureRow(segment.segment_id, segment.image_id, np.array(values))


def feature_matrix(rows, q):
    """Stack feature rows into an (n, 3q + 26) design matrix."""
    if not rows:
        return np.zeros((0, num_features(q) + 1))
    return np.vstack([r.values for r in rows])


def write_features_csv(path, rows, q, labels=None):
    """Export feature rows as CSV.

    Columns: image_id, segment_id, the canonical feature names, and a
    binary ``is_tp`` column when ground-truth labels are supplied.
    Floats are written with ``repr`` so they round-trip exactly.
    """
    import csv

    names = feature_names(q)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        header = ["image_id", "segment_id"] + names
        if labels is not None:
            header.append("is_tp")
        writer.writerow(header)
        for i, row in enumerate(rows):
            record = [row.image_id, row.segment_id] + [repr(float(v)) for v in row.values]
            if labels is not None:
                record.append(int(labels[i]))
            writer.writerow(record)


def read_features_csv(path):
    """Load a feature CSV; returns (ids, names, X, labels-or-None)."""
    import csv

    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        has_labels = header and header[-1] == "is_tp"
        names = header[2 : -1 if has_labels else len(header)]
        ids, data, labels = [], [], []
        for record in reader:
            ids.append((record[0], int(record[1])))
            stop = -1 if has_labels else len(record)
            data.append([float(v) for v in record[2:stop]])
            if has_labels:
                labels.append(int(record[-1]))
    X = np.array(data, dtype=np.float64) if data else np.zeros((0, len(names)))
    return ids, names, X, (np.array(labels) if has_labels else None)
