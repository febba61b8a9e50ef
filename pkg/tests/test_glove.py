import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtglove.frames import BinaryMask, RgbFrame
from virtglove.glove import (
    GloveStyle,
    area_resample,
    bresenham,
    clip_segment,
    compose_net_input,
    draw_line,
    render_glove,
)
from virtglove.hand import HandKeypoints, PalmEstimate
from virtglove.segment import SegmentedFrame

THIN = GloveStyle(line_thickness=1, palm_thickness=1)


def _black(h=100, w=100):
    return RgbFrame(np.zeros((h, w, 3), np.uint8))


def _kps(points):
    """points: {index: (row, col)} in a 100x100 frame, others at the centre."""
    lm = np.full((21, 2), 0.5)
    for i, (r, c) in points.items():
        lm[i] = (c / 100, r / 100)
    return HandKeypoints(lm)


def test_palm_circle_cardinal_points():
    out, drawn = render_glove(_black(), _kps({}), PalmEstimate(50, 50, 10, True), THIN)
    assert drawn
    for rc in ((40, 50), (60, 50), (50, 40), (50, 60)):
        assert tuple(out.pixels[rc]) == THIN.palm


def test_invalid_palm_returns_base():
    base = _black()
    out, drawn = render_glove(base, _kps({}), PalmEstimate(), THIN)
    assert out is base and not drawn
    out, drawn = render_glove(base, None, PalmEstimate(5, 5, 2, True), THIN)
    assert out is base and not drawn


def test_degenerate_segment_is_one_pixel():
    assert bresenham(7, 9, 7, 9) == [(7, 9)]
    img = np.zeros((20, 20, 3), np.uint8)
    draw_line(img, (7.0, 9.0), (7.0, 9.0), (1, 2, 3), 1)
    assert np.argwhere(img.any(axis=2)).tolist() == [[7, 9]]


def test_links_use_finger_colors_and_reach_tips():
    kps = _kps({5: (30, 30), 8: (10, 10), 17: (30, 70), 20: (10, 90)})
    out, _ = render_glove(_black(), kps, PalmEstimate(50, 50, 5, True), THIN)
    assert tuple(out.pixels[10, 10]) == THIN.index
    assert tuple(out.pixels[30, 30]) == THIN.index
    assert tuple(out.pixels[10, 90]) == THIN.pinky


def test_off_frame_landmark_is_clipped():
    kps = _kps({2: (50, -300), 4: (-50, -900)})
    out, drawn = render_glove(_black(), kps, PalmEstimate(50, 50, 5, True))
    assert drawn
    # the thumb link still enters the frame from the left edge
    assert (out.pixels[:, 0] == GloveStyle().thumb).all(axis=1).any()


@settings(max_examples=200, deadline=None)
@given(*[st.floats(-500, 500) for _ in range(4)], st.integers(1, 7))
def test_lines_never_write_out_of_bounds(r0, c0, r1, c1, t):
    img = np.zeros((30, 40, 3), np.uint8)
    draw_line(img, (r0, c0), (r1, c1), (255, 255, 255), t)  # must not raise
    seg = clip_segment((r0, c0), (r1, c1), 0, 29, 0, 39)
    if seg is not None:
        for r, c in seg:
            assert -1e-6 <= r <= 29 + 1e-6 and -1e-6 <= c <= 39 + 1e-6


def test_bresenham_endpoints_and_connectivity():
    pts = bresenham(0, 0, 5, 13)
    assert pts[0] == (0, 0) and pts[-1] == (5, 13)
    steps = np.abs(np.diff(np.array(pts), axis=0))
    assert (steps.max(axis=1) == 1).all()


def test_palette_distinct():
    assert len(set(GloveStyle().palette())) == 6
    with pytest.raises(ValueError):
        GloveStyle(thumb=(255, 255, 0))


def test_render_is_deterministic():
    kps = _kps({8: (5, 5), 12: (3, 50), 16: (5, 95)})
    a, _ = render_glove(_black(), kps, PalmEstimate(60, 50, 15, True))
    b, _ = render_glove(_black(), kps, PalmEstimate(60, 50, 15, True))
    assert a == b


def _seg(depth, mask, t=500):
    h, w = mask.shape
    return SegmentedFrame(RgbFrame(np.zeros((h, w, 3), np.uint8)), BinaryMask(mask), t, np.asarray(depth, np.uint16))


def test_black_glove_empty_mask_is_zero():
    m = np.zeros((64, 64))
    x = compose_net_input(_black(64, 64), _seg(np.zeros((64, 64)), m))
    assert x.data.shape == (4, 64, 64) and x.data.dtype == np.float32
    assert not x.data.any()


def test_depth_channel_is_nearness():
    m = np.zeros((64, 64))
    m[16:48, 16:48] = 1
    x = compose_net_input(_black(64, 64), _seg(np.full((64, 64), 250), m))
    assert np.allclose(x.data[3][m == 1], 0.5)
    assert not x.data[3][m == 0].any()


def test_area_mean_of_block():
    grid = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert area_resample(grid, 1)[0, 0] == pytest.approx(0.5)


def test_area_resample_preserves_mean():
    g = np.random.default_rng(0).random((3, 480, 640))
    out = area_resample(g, 64)
    assert out.shape == (3, 64, 64)
    assert np.allclose(out.mean(axis=(1, 2)), g.mean(axis=(1, 2)))
    # integer factors reduce to block means
    blocks = g[:, :64, :64].reshape(3, 8, 8, 8, 8).mean(axis=(2, 4))
    assert np.allclose(area_resample(g[:, :64, :64], 8), blocks)
