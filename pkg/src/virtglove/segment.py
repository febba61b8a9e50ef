"""Depth-threshold region-of-interest segmentation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .frames import BinaryMask, RgbdFrame, RgbFrame

DEFAULT_THRESHOLD_MM = 500


@dataclass(frozen=True, eq=False)
class SegmentedFrame:
    color: RgbFrame  # background pixels zeroed
    mask: BinaryMask
    threshold_mm: int
    depth_mm: np.ndarray | None = None  # source depth, kept for the net input

    def __post_init__(self):
        if (self.color.height, self.color.width) != (self.mask.height, self.mask.width):
            raise ValueError("mask and colour dimensions differ")


def depth_threshold(frame: RgbdFrame, threshold_mm: int = DEFAULT_THRESHOLD_MM) -> SegmentedFrame:
    """Keep pixels with a depth reading no further than ``threshold_mm``.

    Zero depth means the sensor returned nothing and is treated as background.
    The comparison is inclusive so a pixel sitting exactly on the threshold
    stays in the hand.
    """
    if threshold_mm <= 0:
        raise ValueError(f"threshold must be positive, got {threshold_mm}")
    depth = frame.depth.depths
    keep = (depth > 0) & (depth <= threshold_mm)
    color = np.where(keep[..., None], frame.color.pixels, 0).astype(np.uint8)
    return SegmentedFrame(RgbFrame(color), BinaryMask(keep), threshold_mm, depth)


def to_binary(seg: SegmentedFrame) -> BinaryMask:
    return seg.mask
