import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trackkit.geometry import (
    BBox,
    RleMask,
    box_iou,
    mask_intersection_area,
    mask_iou,
    rle_decode,
    rle_encode,
)


def pixel_grid_iou(a: BBox, b: BBox, size: int = 16) -> float:
    """Counting oracle for integer-aligned boxes: rasterize and count pixels."""
    grid_a = np.zeros((size, size), dtype=bool)
    grid_b = np.zeros((size, size), dtype=bool)
    grid_a[int(a.y) : int(a.y + a.h), int(a.x) : int(a.x + a.w)] = True
    grid_b[int(b.y) : int(b.y + b.h), int(b.x) : int(b.x + b.w)] = True
    union = np.count_nonzero(grid_a | grid_b)
    if union == 0:
        return 0.0
    return np.count_nonzero(grid_a & grid_b) / union


def dense_iou(a: np.ndarray, b: np.ndarray) -> float:
    """Dense-grid oracle for mask IoU."""
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


class TestBoxIou:
    def test_identical(self):
        box = BBox(0, 0, 2, 2)
        assert box_iou(box, box) == 1.0

    def test_disjoint(self):
        assert box_iou(BBox(0, 0, 1, 1), BBox(5, 5, 1, 1)) == 0.0

    def test_offset_overlap_matches_pixel_oracle(self):
        a, b = BBox(0, 0, 2, 2), BBox(1, 1, 2, 2)
        expected = pixel_grid_iou(a, b)
        assert expected == pytest.approx(1 / 7)
        assert box_iou(a, b) == pytest.approx(expected)

    def test_zero_area_boxes(self):
        assert box_iou(BBox(0, 0, 0, 0), BBox(0, 0, 0, 0)) == 0.0

    def test_rejects_negative_size(self):
        with pytest.raises(ValueError):
            BBox(0, 0, -1, 2)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            BBox(float("nan"), 0, 1, 1)


# pixel-scale boxes: sizes either exactly zero or large enough to be
# representable against the coordinate magnitudes
sizes = st.one_of(st.just(0.0), st.floats(1e-6, 40))
boxes = st.builds(BBox, st.floats(-50, 50), st.floats(-50, 50), sizes, sizes)


@given(boxes, boxes)
def test_box_iou_symmetric_and_bounded(a, b):
    assert box_iou(a, b) == box_iou(b, a)
    assert 0.0 <= box_iou(a, b) <= 1.0


@given(boxes)
def test_box_iou_self_is_one(box):
    if box.area > 0:
        assert box_iou(box, box) == 1.0


class TestRleCodec:
    def test_all_zeros(self):
        rle = rle_encode(np.zeros((2, 2), dtype=bool))
        assert rle.counts == (4,)

    def test_column_major_example(self):
        # column-major pixels [0, 1, 1, 0]
        grid = np.array([[0, 1], [1, 0]], dtype=bool)
        rle = rle_encode(grid)
        assert rle.counts == (1, 2, 1)
        assert np.array_equal(rle_decode(rle), grid)

    def test_single_foreground_pixel(self):
        rle = rle_encode(np.ones((1, 1), dtype=bool))
        assert rle.counts == (0, 1)

    def test_decode_all_ones(self):
        assert np.array_equal(rle_decode(RleMask(2, 2, (0, 4))), np.ones((2, 2), dtype=bool))

    def test_decode_all_zeros(self):
        assert not rle_decode(RleMask(2, 2, (4,))).any()

    def test_counts_sum_mismatch_rejected(self):
        with pytest.raises(ValueError):
            RleMask(2, 2, (1, 2))

    def test_adjacent_zero_runs_rejected(self):
        with pytest.raises(ValueError):
            RleMask(2, 2, (2, 0, 0, 2))

    def test_leading_zero_allowed(self):
        RleMask(2, 2, (0, 4))

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            rle_encode(np.zeros((0, 3), dtype=bool))


@given(st.integers(1, 64), st.integers(1, 64), st.integers(0, 2**32 - 1))
@settings(max_examples=200)
def test_rle_round_trip(h, w, seed):
    rng = np.random.default_rng(seed)
    mask = rng.random((h, w)) < rng.random()
    assert np.array_equal(rle_decode(rle_encode(mask)), mask)


class TestMaskIou:
    def test_identical_nonempty(self):
        rle = rle_encode(np.array([[1, 0], [1, 1]], dtype=bool))
        assert mask_iou(rle, rle) == 1.0

    def test_disjoint(self):
        a = rle_encode(np.array([[1, 0], [0, 0]], dtype=bool))
        b = rle_encode(np.array([[0, 0], [0, 1]], dtype=bool))
        assert mask_iou(a, b) == 0.0

    def test_half_overlap(self):
        full = np.ones((2, 2), dtype=bool)
        left = full.copy()
        left[:, 1] = False
        expected = dense_iou(left, full)
        assert expected == 0.5
        assert mask_iou(rle_encode(left), rle_encode(full)) == expected

    def test_both_empty_is_one(self):
        empty = rle_encode(np.zeros((3, 3), dtype=bool))
        assert mask_iou(empty, empty) == 1.0

    def test_empty_vs_nonempty_is_zero(self):
        empty = rle_encode(np.zeros((2, 2), dtype=bool))
        ones = rle_encode(np.ones((2, 2), dtype=bool))
        assert mask_iou(empty, ones) == 0.0

    def test_size_mismatch_raises(self):
        a = rle_encode(np.zeros((2, 2), dtype=bool))
        b = rle_encode(np.zeros((2, 3), dtype=bool))
        with pytest.raises(ValueError):
            mask_iou(a, b)


@given(st.integers(1, 32), st.integers(1, 32), st.integers(0, 2**32 - 1))
@settings(max_examples=200)
def test_rle_iou_equals_dense_iou(h, w, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((h, w)) < rng.random()
    b = rng.random((h, w)) < rng.random()
    got = mask_iou(rle_encode(a), rle_encode(b))
    assert got == dense_iou(a, b)
    assert 0.0 <= got <= 1.0
    assert mask_intersection_area(rle_encode(a), rle_encode(b)) == np.count_nonzero(a & b)
