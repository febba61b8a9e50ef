"""Integer distance transforms of binary masks.

Pixels outside the image count as background, so a foreground pixel on the
frame edge has distance 1.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .frames import BinaryMask


class Metric(str, enum.Enum):
    CITY_BLOCK = "city-block"  # 4-connected steps
    CHESSBOARD = "chessboard"  # 8-connected steps


@dataclass(frozen=True, eq=False)
class DistanceMap:
    values: np.ndarray  # (height, width) int32
    metric: Metric = Metric.CITY_BLOCK

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DistanceMap):
            return NotImplemented
        return self.metric == other.metric and np.array_equal(self.values, other.values)


def distance_transform(mask: BinaryMask, metric: Metric = Metric.CITY_BLOCK) -> DistanceMap:
    """Two-pass chamfer scan with unit weights.

    The forward pass propagates from the upper-left neighbours, the backward
    pass from the lower-right ones.  Within a row the horizontal recurrence
    ``d[j] = min(t[j], d[j-1] + 1)`` is solved in one shot as a running
    minimum of ``t[j] - j``, so each row costs a handful of vector ops.
    """
    metric = Metric(metric)
    h, w = mask.bits.shape
    big = h + w + 2
    # one-pixel background ring stands in for the outside of the image
    d = np.zeros((h + 2, w + 2), dtype=np.int64)
    d[1:-1, 1:-1] = np.where(mask.bits.astype(bool), big, 0)
    cols = np.arange(w + 2)
    diag = metric is Metric.CHESSBOARD

    for i in range(1, h + 1):
        prev = d[i - 1]
        t = np.minimum(d[i], prev + 1)
        if diag:
            t[1:] = np.minimum(t[1:], prev[:-1] + 1)
            t[:-1] = np.minimum(t[:-1], prev[1:] + 1)
        d[i] = np.minimum.accumulate(t - cols) + cols

    rev = cols[::-1]
    for i in range(h, 0, -1):
        nxt = d[i + 1]
        t = np.minimum(d[i], nxt + 1)
        if diag:
            t[1:] = np.minimum(t[1:], nxt[:-1] + 1)
            t[:-1] = np.minimum(t[:-1], nxt[1:] + 1)
        # same running minimum, scanned right to left
        d[i] = (np.minimum.accumulate((t - rev)[::-1]) + cols)[::-1]

    return DistanceMap(d[1:-1, 1:-1].astype(np.int32), metric)


def dt_oracle(mask: BinaryMask, metric: Metric = Metric.CITY_BLOCK) -> DistanceMap:
    """Brute force: for every pixel, minimum over all background positions.

    Quadratic in the pixel count; meant for masks up to about 32x32.
    """
    metric = Metric(metric)
    bits = mask.bits.astype(bool)
    h, w = bits.shape
    padded = np.zeros((h + 2, w + 2), dtype=bool)
    padded[1:-1, 1:-1] = bits
    br, bc = np.nonzero(~padded)  # never empty: the ring is background
    rows, cols = np.mgrid[1 : h + 1, 1 : w + 1]
    dr = np.abs(rows.reshape(-1, 1) - br.reshape(1, -1))
    dc = np.abs(cols.reshape(-1, 1) - bc.reshape(1, -1))
    dist = np.maximum(dr, dc) if metric is Metric.CHESSBOARD else dr + dc
    out = dist.min(axis=1).reshape(h, w)
    return DistanceMap(out.astype(np.int32), metric)
