import sys

import numpy as np
import pytest

from oodseg.formats import FormatError, HeatMap, LabelMap
from oodseg.segments import (OoDPixelMask, connected_components,
                             ground_truth_components, match_segments,
                             segments_to_records, threshold_mask)


def flood_fill_oracle(flags):
    """Recursive 8-connected flood fill; independent reference partition."""
    sys.setrecursionlimit(100000)
    h_dim, w_dim = flags.shape
    seen = np.zeros_like(flags, dtype=bool)
    components = []

    def fill(h, w, acc):
        if h < 0 or h >= h_dim or w < 0 or w >= w_dim:
            return
        if seen[h, w] or not flags[h, w]:
            return
        seen[h, w] = True
        acc.append((h, w))
        for dh in (-1, 0, 1):
            for dw in (-1, 0, 1):
                if dh or dw:
                    fill(h + dh, w + dw, acc)

    for h in range(h_dim):
        for w in range(w_dim):
            if flags[h, w] and not seen[h, w]:
                acc = []
                fill(h, w, acc)
                components.append(sorted(acc))
    return components


class TestThresholdMask:
    def test_zero_threshold_flags_everything(self):
        heat = HeatMap(np.array([[0.0, 0.4], [0.9, 1.0]], dtype=np.float32))
        mask = threshold_mask(heat, 0.0)
        assert mask.flags.all()

    def test_above_max_is_empty(self):
        heat = HeatMap(np.array([[0.0, 0.4], [0.9, 1.0]], dtype=np.float32))
        assert not threshold_mask(heat, 1.0 + 1e-6).flags.any()

    def test_inclusive_comparison_at_070(self):
        heat = HeatMap(np.array([[0.7, 0.6999], [0.701, 0.0]], dtype=np.float32))
        mask = threshold_mask(heat, np.float32(0.7))
        assert mask.flags.tolist() == [[True, False], [True, False]]

    def test_monotone_in_threshold(self):
        rng = np.random.default_rng(2)
        heat = HeatMap(rng.random((12, 12)).astype(np.float32))
        previous = threshold_mask(heat, 0.1).flags
        for t in (0.3, 0.5, 0.8):
            current = threshold_mask(heat, t).flags
            assert not (current & ~previous).any()  # shrinks pixel-wise
            previous = current


class TestConnectedComponents:
    def test_diagonal_pixels_join(self):
        flags = np.zeros((4, 4), dtype=bool)
        flags[1, 1] = flags[2, 2] = True
        segs = connected_components(OoDPixelMask(flags, 0.5))
        assert len(segs) == 1
        assert segs[0].size == 2

    def test_separated_rows_split(self):
        flags = np.zeros((5, 3), dtype=bool)
        flags[0, :] = True
        flags[2, :] = True
        segs = connected_components(OoDPixelMask(flags, 0.5))
        assert len(segs) == 2

    def test_ids_follow_raster_order(self):
        flags = np.zeros((3, 5), dtype=bool)
        flags[0, 4] = True   # first in raster order
        flags[2, 0] = True
        segs = connected_components(OoDPixelMask(flags, 0.5))
        assert [s.segment_id for s in segs] == [1, 2]
        assert tuple(segs[0].pixels[0]) == (0, 4)

    def test_matches_flood_fill_oracle_on_random_masks(self):
        rng = np.random.default_rng(77)
        for trial in range(500):
            flags = rng.random((16, 16)) < rng.uniform(0.2, 0.8)
            segs = connected_components(OoDPixelMask(flags, 0.5))
            expected = flood_fill_oracle(flags)
            assert len(segs) == len(expected)
            for seg, pixels in zip(segs, expected):
                assert [tuple(p) for p in seg.pixels] == pixels

    def test_components_partition_flagged_set(self):
        rng = np.random.default_rng(13)
        flags = rng.random((20, 20)) < 0.5
        segs = connected_components(OoDPixelMask(flags, 0.5))
        seen = np.zeros_like(flags)
        for seg in segs:
            for h, w in seg.pixels:
                assert not seen[h, w]  # pairwise disjoint
                seen[h, w] = True
        assert np.array_equal(seen, flags)  # union equals flagged set


def _segment_at(pixels):
    flags = np.zeros((8, 8), dtype=bool)
    for h, w in pixels:
        flags[h, w] = True
    return connected_components(OoDPixelMask(flags, 0.5))


class TestMatchSegments:
    def make_labels(self):
        labels = np.zeros((8, 8), dtype=np.int32)
        labels[1:3, 1:3] = 3  # one ground-truth OoD object (q=3)
        labels[6, 6] = -1
        return LabelMap(labels, 3)

    def test_fully_inside_is_tp(self):
        labels = self.make_labels()
        segs = _segment_at([(1, 1), (1, 2)])
        match = match_segments(segs, labels)
        assert (match.tp, match.fp, match.fn) == (1, 0, 0)

    def test_single_pixel_overlap_is_tp(self):
        labels = self.make_labels()
        segs = _segment_at([(2, 2), (2, 3), (2, 4)])  # one pixel on the object
        match = match_segments(segs, labels)
        assert match.verdicts == ["TP"]
        assert match.fn == 0

    def test_ignore_only_segment_dropped(self):
        labels = self.make_labels()
        segs = _segment_at([(6, 6)])
        match = match_segments(segs, labels)
        assert match.verdicts == ["ignored"]
        assert (match.tp, match.fp) == (0, 0)

    def test_miss_counts_fn(self):
        labels = self.make_labels()
        match = match_segments([], labels)
        assert match.fn == 1
        assert match.gt_found == [False]

    def test_one_prediction_spanning_two_objects(self):
        labels = np.zeros((6, 6), dtype=np.int32)
        labels[0, 0] = 3
        labels[0, 4] = 3
        lm = LabelMap(labels, 3)
        segs = _segment_at([(0, c) for c in range(5)])[:1]
        match = match_segments(segs, lm)
        assert match.tp == 1          # a single TP prediction
        assert match.gt_found == [True, True]

    def test_dimension_mismatch(self):
        labels = LabelMap(np.zeros((4, 4), dtype=np.int32), 3)
        segs = _segment_at([(6, 6)])
        with pytest.raises(FormatError, match="exceeds"):
            match_segments(segs, labels)

    def test_tp_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(8)
        heat_values = rng.random((8, 8)).astype(np.float32)
        labels = self.make_labels()
        t = 0.4
        segs_a = connected_components(threshold_mask(HeatMap(heat_values), t))
        transformed = HeatMap((heat_values ** 3).astype(np.float32))
        segs_b = connected_components(threshold_mask(transformed, t ** 3))
        match_a = match_segments(segs_a, labels)
        match_b = match_segments(segs_b, labels)
        assert match_a.verdicts == match_b.verdicts
        assert match_a.gt_found == match_b.gt_found

    def test_fn_nondecreasing_in_threshold(self):
        rng = np.random.default_rng(9)
        heat = HeatMap(rng.random((10, 10)).astype(np.float32))
        labels_arr = np.zeros((10, 10), dtype=np.int32)
        labels_arr[2:4, 2:4] = 3
        labels_arr[7:9, 6:9] = 3
        labels = LabelMap(labels_arr, 3)
        previous = -1
        for t in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
            segs = connected_components(threshold_mask(heat, t))
            fn = match_segments(segs, labels).fn
            assert fn >= previous
            previous = fn


def test_ground_truth_components_use_8_connectivity():
    labels = np.zeros((4, 4), dtype=np.int32)
    labels[0, 0] = 2
    labels[1, 1] = 2
    lm = LabelMap(labels, 2)
    assert len(ground_truth_components(lm)) == 1


def test_records_export():
    segs = _segment_at([(1, 1), (1, 2)])
    labels = LabelMap(np.zeros((8, 8), dtype=np.int32), 3)
    match = match_segments(segs, labels)
    records = segments_to_records(segs, match)
    assert records == [{
        "image_id": "", "segment_id": 1, "pixel_count": 2,
        "bbox": [1, 1, 1, 2], "verdict": "FP",
    }]
