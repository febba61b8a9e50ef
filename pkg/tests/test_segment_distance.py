import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtglove.distance import Metric, distance_transform, dt_oracle
from virtglove.frames import BinaryMask, DepthFrame, RgbdFrame, RgbFrame
from virtglove.segment import depth_threshold, to_binary


def _frame(depth, color=None):
    depth = np.asarray(depth, np.uint16)
    if color is None:
        color = np.full((*depth.shape, 3), 200, np.uint8)
    return RgbdFrame(RgbFrame(color), DepthFrame(depth))


def test_everything_beyond_threshold():
    seg = depth_threshold(_frame(np.full((4, 5), 800)), 500)
    assert seg.mask.count() == 0
    assert not seg.color.pixels.any()


def test_near_pixels_kept():
    d = np.full((6, 6), 900)
    d[2:4, 1:5] = 400
    seg = depth_threshold(_frame(d), 500)
    assert np.array_equal(seg.mask.bits, (d == 400).astype(np.uint8))
    assert (seg.color.pixels[d == 400] == 200).all()


def test_zero_depth_is_background():
    d = np.zeros((3, 3))
    for t in (1, 500, 65535):
        assert depth_threshold(_frame(d), t).mask.count() == 0


def test_threshold_inclusive():
    seg = depth_threshold(_frame([[500, 501]]), 500)
    assert seg.mask.bits.tolist() == [[1, 0]]


def test_bad_threshold():
    with pytest.raises(ValueError):
        depth_threshold(_frame([[1]]), 0)


def test_to_binary_preserves_count():
    d = np.array([[100, 900], [300, 0]])
    m = to_binary(depth_threshold(_frame(d)))
    assert m.count() == 2
    empty = to_binary(depth_threshold(_frame(np.full((2, 2), 900))))
    assert empty.count() == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3000), st.integers(1, 3000))
def test_threshold_monotone(seed, t1, t2):
    d = np.random.default_rng(seed).integers(0, 3000, (8, 9))
    lo, hi = sorted((t1, t2))
    a = depth_threshold(_frame(d), lo).mask.bits
    b = depth_threshold(_frame(d), hi).mask.bits
    assert (a <= b).all()


def test_single_pixel():
    bits = np.zeros((5, 5), np.uint8)
    bits[2, 2] = 1
    dm = distance_transform(BinaryMask(bits))
    expect = np.zeros((5, 5))
    expect[2, 2] = 1
    assert np.array_equal(dm.values, expect)


def test_all_background():
    dm = distance_transform(BinaryMask(np.zeros((4, 7))))
    assert not dm.values.any()
    assert not dt_oracle(BinaryMask(np.zeros((4, 7)))).values.any()


def test_full_5x5_uses_border_as_background():
    dm = distance_transform(BinaryMask(np.ones((5, 5))))
    assert dm.values[2, 2] == 3
    assert dm.values[0, 0] == dm.values[0, 4] == dm.values[4, 0] == dm.values[4, 4] == 1
    assert np.array_equal(dm.values, dt_oracle(BinaryMask(np.ones((5, 5)))).values)


def test_single_pixel_image():
    assert dt_oracle(BinaryMask(np.ones((1, 1)))).values[0, 0] == 1
    assert distance_transform(BinaryMask(np.ones((1, 1)))).values[0, 0] == 1


def test_chessboard_full_5x5():
    dm = distance_transform(BinaryMask(np.ones((5, 5))), Metric.CHESSBOARD)
    assert dm.values[2, 2] == 3 and dm.values[1, 1] == 2


masks = st.tuples(st.integers(1, 20), st.integers(1, 20), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))


@settings(max_examples=200, deadline=None)
@given(masks, st.sampled_from(list(Metric)))
def test_matches_oracle(case, metric):
    h, w, p, seed = case
    bits = (np.random.default_rng(seed).random((h, w)) < p).astype(np.uint8)
    m = BinaryMask(bits)
    assert np.array_equal(distance_transform(m, metric).values, dt_oracle(m, metric).values)


@settings(max_examples=100, deadline=None)
@given(masks)
def test_city_block_is_1_lipschitz(case):
    h, w, p, seed = case
    bits = (np.random.default_rng(seed).random((h, w)) < p).astype(np.uint8)
    v = distance_transform(BinaryMask(bits)).values.astype(int)
    assert (np.abs(np.diff(v, axis=0)) <= 1).all()
    assert (np.abs(np.diff(v, axis=1)) <= 1).all()
    assert ((v > 0) == (bits > 0)).all()
