"""Virtual glove rasterization and classifier input composition."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .frames import RgbFrame
from .hand import FINGER_NAMES, HandKeypoints, PalmEstimate
from .segment import SegmentedFrame

Color = tuple[int, int, int]

# (knuckle, fingertip) landmark per finger; the thumb's knuckle is its MCP
LINKS = {
    "thumb": (2, 4),
    "index": (5, 8),
    "middle": (9, 12),
    "ring": (13, 16),
    "pinky": (17, 20),
}

DEFAULT_INPUT_SIZE = 64


@dataclass(frozen=True)
class GloveStyle:
    palm: Color = (255, 255, 0)
    thumb: Color = (255, 0, 0)
    index: Color = (0, 255, 0)
    middle: Color = (0, 0, 255)
    ring: Color = (255, 0, 255)
    pinky: Color = (0, 255, 255)
    line_thickness: int = 3
    palm_thickness: int = 2

    def __post_init__(self):
        colors = self.palette()
        if len(set(colors)) != len(colors):
            raise ValueError("glove colours must be mutually distinct")
        for c in colors:
            if len(c) != 3 or any(not 0 <= v <= 255 for v in c):
                raise ValueError(f"bad colour {c!r}")
        if self.line_thickness < 1 or self.palm_thickness < 1:
            raise ValueError("thickness must be at least 1 px")

    def palette(self) -> tuple[Color, ...]:
        return (self.palm,) + tuple(self.finger(name) for name in FINGER_NAMES)

    def finger(self, name: str) -> Color:
        return tuple(getattr(self, name))

    @classmethod
    def from_dict(cls, doc: dict) -> "GloveStyle":
        kw = {k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()
              if k in cls.__dataclass_fields__}
        return cls(**kw)


@dataclass(frozen=True, eq=False)
class NetInput:
    """(4, S, S) float32: glove RGB in channels 0-2, near-ness of depth in channel 3."""

    data: np.ndarray

    @property
    def size(self) -> int:
        return self.data.shape[-1]


# --- rasterization ---------------------------------------------------------


def bresenham(r0: int, c0: int, r1: int, c1: int) -> list[tuple[int, int]]:
    """Integer points of the segment, both endpoints included."""
    pts = []
    dr, dc = abs(r1 - r0), abs(c1 - c0)
    sr = 1 if r1 >= r0 else -1
    sc = 1 if c1 >= c0 else -1
    err = dc - dr
    r, c = r0, c0
    while True:
        pts.append((r, c))
        if r == r1 and c == c1:
            return pts
        e2 = 2 * err
        if e2 > -dr:
            err -= dr
            c += sc
        if e2 < dc:
            err += dc
            r += sr


def midpoint_circle(rc: int, cc: int, radius: int) -> list[tuple[int, int]]:
    if radius <= 0:
        return [(rc, cc)]
    pts = set()
    x, y = radius, 0
    err = 1 - radius
    while x >= y:
        for dx, dy in ((x, y), (y, x), (-y, x), (-x, y), (-x, -y), (-y, -x), (y, -x), (x, -y)):
            pts.add((rc + dy, cc + dx))
        y += 1
        if err < 0:
            err += 2 * y + 1
        else:
            x -= 1
            err += 2 * (y - x) + 1
    return sorted(pts)


def clip_segment(p0, p1, rmin, rmax, cmin, cmax):
    """Liang-Barsky clip of a float segment to a box; None when it misses."""
    (r0, c0), (r1, c1) = p0, p1
    dr, dc = r1 - r0, c1 - c0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dc, c0 - cmin), (dc, cmax - c0), (-dr, r0 - rmin), (dr, rmax - r0)):
        if p == 0:
            if q < 0:
                return None
            continue
        t = q / p
        if p < 0:
            if t > t1:
                return None
            t0 = max(t0, t)
        else:
            if t < t0:
                return None
            t1 = min(t1, t)
    return (r0 + t0 * dr, c0 + t0 * dc), (r0 + t1 * dr, c0 + t1 * dc)


def _brush(thickness: int) -> np.ndarray:
    """Offsets of a round brush of the given diameter."""
    if thickness <= 1:
        return np.zeros((1, 2), dtype=np.int64)
    rad = (thickness - 1) / 2
    k = int(math.ceil(rad))
    dr, dc = np.mgrid[-k:k + 1, -k:k + 1]
    keep = dr * dr + dc * dc <= rad * rad + 0.5
    return np.stack([dr[keep], dc[keep]], axis=1)


def _stamp(img: np.ndarray, pts, color: Color, thickness: int):
    if not pts:
        return
    h, w = img.shape[:2]
    base = np.asarray(pts, dtype=np.int64)
    all_pts = (base[:, None, :] + _brush(thickness)[None, :, :]).reshape(-1, 2)
    ok = (all_pts[:, 0] >= 0) & (all_pts[:, 0] < h) & (all_pts[:, 1] >= 0) & (all_pts[:, 1] < w)
    all_pts = all_pts[ok]
    img[all_pts[:, 0], all_pts[:, 1]] = color


def draw_line(img: np.ndarray, p0, p1, color: Color, thickness: int = 1):
    """Draw a clipped segment between two (row, col) points in place."""
    h, w = img.shape[:2]
    pad = thickness // 2
    clipped = clip_segment(p0, p1, -pad, h - 1 + pad, -pad, w - 1 + pad)
    if clipped is None:
        return
    (r0, c0), (r1, c1) = clipped
    pts = bresenham(_round(r0), _round(c0), _round(r1), _round(c1))
    _stamp(img, pts, color, thickness)


def draw_circle(img: np.ndarray, center, radius: int, color: Color, thickness: int = 1):
    pts = midpoint_circle(int(center[0]), int(center[1]), int(radius))
    _stamp(img, pts, color, thickness)


def _round(v: float) -> int:
    return math.floor(v + 0.5)


def depth_gray(seg: SegmentedFrame) -> RgbFrame:
    """Grey rendering of the segmented hand, nearer = brighter."""
    img = np.zeros((seg.mask.height, seg.mask.width, 3), dtype=np.uint8)
    if seg.depth_mm is None:
        img[seg.mask.bits.astype(bool)] = 255
        return RgbFrame(img)
    near = _nearness(seg.depth_mm, seg.mask.bits, seg.threshold_mm)
    img[:] = np.rint(64 + 191 * near)[..., None].astype(np.uint8) * seg.mask.bits[..., None]
    return RgbFrame(img)


def render_glove(base: RgbFrame, kps: HandKeypoints | None, palm: PalmEstimate,
                 style: GloveStyle = GloveStyle()) -> tuple[RgbFrame, bool]:
    """Paint the palm circle and the palm->knuckle->tip links over ``base``.

    Returns the rendered frame and whether a glove was drawn; with no valid
    palm or no keypoints the base comes back unchanged.
    """
    if not palm.valid or kps is None:
        return base, False
    img = np.array(base.pixels, copy=True)
    h, w = img.shape[:2]
    draw_circle(img, palm.center, palm.radius, style.palm, style.palm_thickness)
    for name in FINGER_NAMES:
        knuckle, tip = LINKS[name]
        color = style.finger(name)
        k_rc = _landmark_px(kps, knuckle, w, h)
        t_rc = _landmark_px(kps, tip, w, h)
        draw_line(img, palm.center, k_rc, color, style.line_thickness)
        draw_line(img, k_rc, t_rc, color, style.line_thickness)
    return RgbFrame(img), True


def _landmark_px(kps: HandKeypoints, index: int, width: int, height: int):
    x, y = kps.landmarks[index]
    # float keeps far off-frame landmarks exact until clipping
    return (float(y) * height, float(x) * width)


# --- net input -------------------------------------------------------------


def _nearness(depth: np.ndarray, mask: np.ndarray, threshold_mm: int) -> np.ndarray:
    near = np.clip(1.0 - depth.astype(np.float64) / float(threshold_mm), 0.0, 1.0)
    return np.where(mask.astype(bool), near, 0.0)


def _area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix averaging equal-width input spans."""
    edges = np.arange(n_out + 1) * (n_in / n_out)
    lo, hi = edges[:-1, None], edges[1:, None]
    px = np.arange(n_in)[None, :]
    overlap = np.clip(np.minimum(hi, px + 1) - np.maximum(lo, px), 0.0, None)
    return overlap / (n_in / n_out)


_AREA_CACHE: dict[tuple[int, int], np.ndarray] = {}


def area_resample(grid: np.ndarray, size: int) -> np.ndarray:
    """Area-average (..., H, W) to (..., size, size)."""
    h, w = grid.shape[-2:]
    mats = []
    for n_in in (h, w):
        key = (n_in, size)
        if key not in _AREA_CACHE:
            _AREA_CACHE[key] = _area_matrix(n_in, size)
        mats.append(_AREA_CACHE[key])
    ry, rx = mats
    lead = grid.shape[:-2]
    k = math.prod(lead)
    # two plain 2-D products; batched broadcasting matmul misses BLAS
    cols = np.ascontiguousarray(grid).reshape(k * h, w) @ rx.T  # (k*h, size)
    cols = cols.reshape(k, h, size).transpose(1, 0, 2).reshape(h, k * size)
    out = (ry @ cols).reshape(size, k, size).transpose(1, 0, 2)
    return out.reshape(*lead, size, size)


def compose_net_input(glove: RgbFrame, seg: SegmentedFrame, threshold_mm: int | None = None,
                      size: int = DEFAULT_INPUT_SIZE) -> NetInput:
    if (glove.height, glove.width) != (seg.mask.height, seg.mask.width):
        raise ValueError("glove and segmentation sizes differ")
    if threshold_mm is None:
        threshold_mm = seg.threshold_mm
    rgb = glove.pixels.astype(np.float64).transpose(2, 0, 1) / 255.0
    if seg.depth_mm is None:
        near = np.zeros(seg.mask.bits.shape)
    else:
        near = _nearness(seg.depth_mm, seg.mask.bits, threshold_mm)
    stacked = np.concatenate([rgb, near[None]], axis=0)
    out = np.clip(area_resample(stacked, size), 0.0, 1.0).astype(np.float32)
    return NetInput(out)
