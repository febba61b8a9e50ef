"""Hand landmarks, keypoint providers and palm estimation."""

from __future__ import annotations

import enum
import json
import math
import os
from collections import deque
from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

from .distance import DistanceMap

N_LANDMARKS = 21
WRIST = 0
# (MCP-or-CMC ... TIP) landmark indices per finger
FINGERS = {
    "thumb": (1, 2, 3, 4),
    "index": (5, 6, 7, 8),
    "middle": (9, 10, 11, 12),
    "ring": (13, 14, 15, 16),
    "pinky": (17, 18, 19, 20),
}
FINGER_NAMES = tuple(FINGERS)


class GestureLabel(enum.IntEnum):
    ONE_FINGER = 0
    TWO_FINGERS = 1
    THUMB = 2
    SHAKA = 3
    OK = 4

    @property
    def title(self) -> str:
        return _TITLES[self]


_TITLES = {
    GestureLabel.ONE_FINGER: "One Finger",
    GestureLabel.TWO_FINGERS: "Two Finger",
    GestureLabel.THUMB: "Thumb",
    GestureLabel.SHAKA: "Shaka",
    GestureLabel.OK: "OK",
}


class KeypointError(ValueError):
    pass


class StreamError(LookupError):
    pass


@dataclass(frozen=True, eq=False)
class HandKeypoints:
    """21 landmarks as (x, y), normalised to frame width and height."""

    landmarks: np.ndarray  # (21, 2) float64
    frame_id: int | None = None

    def __post_init__(self):
        lm = np.array(self.landmarks, dtype=np.float64)
        if lm.shape != (N_LANDMARKS, 2):
            raise KeypointError(f"expected {N_LANDMARKS} (x, y) landmarks, got shape {lm.shape}")
        if not np.isfinite(lm).all():
            raise KeypointError("landmark coordinates must be finite")
        lm.setflags(write=False)
        object.__setattr__(self, "landmarks", lm)

    @property
    def off_frame(self) -> np.ndarray:
        lm = self.landmarks
        return ((lm < 0.0) | (lm > 1.0)).any(axis=1)

    def pixel(self, index: int, width: int, height: int) -> tuple[int, int]:
        """(row, col) of a landmark in a width x height image."""
        x, y = self.landmarks[index]
        return math.floor(y * height + 0.5), math.floor(x * width + 0.5)

    def to_json(self) -> str:
        doc = {"frame_id": self.frame_id, "landmarks": [[float(x), float(y)] for x, y in self.landmarks]}
        return json.dumps(doc) + "\n"

    def __eq__(self, other):
        if not isinstance(other, HandKeypoints):
            return NotImplemented
        return self.frame_id == other.frame_id and np.array_equal(self.landmarks, other.landmarks)


def parse_keypoints(text: str | bytes) -> HandKeypoints:
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise KeypointError(f"keypoint file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict) or "landmarks" not in doc:
        raise KeypointError("keypoint file needs a 'landmarks' list")
    pts = doc["landmarks"]
    if not isinstance(pts, list) or len(pts) != N_LANDMARKS:
        n = len(pts) if isinstance(pts, list) else "no"
        raise KeypointError(f"expected {N_LANDMARKS} landmarks, found {n}")
    coords = []
    for i, p in enumerate(pts):
        if not (isinstance(p, list) and len(p) == 2):
            raise KeypointError(f"landmark {i} must be an [x, y] pair")
        for v in p:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise KeypointError(f"landmark {i} has a non-numeric coordinate {v!r}")
        coords.append(p)
    frame_id = doc.get("frame_id")
    return HandKeypoints(np.array(coords, dtype=np.float64), None if frame_id is None else int(frame_id))


def _reject_constant(name):
    raise KeypointError(f"non-finite coordinate {name}")


def load_keypoints(path) -> HandKeypoints:
    with open(os.fspath(path), "rb") as fh:
        return parse_keypoints(fh.read())


def keypoint_stream(source, frame_ids: Iterable[int] | None = None) -> Iterator[HandKeypoints]:
    """Yield keypoints in frame order from a manifest or (frame_id, keypoints) pairs.

    Without ``frame_ids`` the source must cover a gap-free run of ids.  With
    ``frame_ids`` the stream follows that order and fails on the first id the
    source cannot supply.
    """
    if hasattr(source, "records"):
        table = {r.frame_id: (lambda r=r: _with_id(load_keypoints(source.resolve(r.keypoints_path)), r.frame_id))
                 for r in source.records}
    else:
        table = {int(fid): (lambda k=k, fid=fid: _with_id(k, int(fid))) for fid, k in source}

    if frame_ids is None:
        ids = sorted(table)
        if ids:
            missing = sorted(set(range(ids[0], ids[-1] + 1)) - set(ids))
            if missing:
                raise StreamError(f"keypoint stream is missing frame_id {missing[0]}")
    else:
        ids = list(frame_ids)
    for fid in ids:
        if fid not in table:
            raise StreamError(f"no keypoints for frame_id {fid}")
        yield table[fid]()


def _with_id(kps: HandKeypoints, frame_id: int) -> HandKeypoints:
    if kps.frame_id == frame_id:
        return kps
    return HandKeypoints(kps.landmarks, frame_id)


# --- palm ----------------------------------------------------------------


@dataclass(frozen=True)
class PalmEstimate:
    row: int = 0
    col: int = 0
    radius: int = 0
    valid: bool = False

    @property
    def center(self) -> tuple[int, int]:
        return self.row, self.col


NO_PALM = PalmEstimate()


def estimate_palm(dmap: DistanceMap) -> PalmEstimate:
    """Deepest point of the distance map; ties go to the first in row-major order."""
    flat = dmap.values.ravel()
    idx = int(np.argmax(flat))
    peak = int(flat[idx])
    if peak <= 0:
        return NO_PALM
    row, col = divmod(idx, dmap.width)
    return PalmEstimate(row, col, peak, True)


class SmootherState:
    """Trailing window of the most recent valid palm estimates."""

    def __init__(self, window: int = 5):
        if window < 1:
            raise ValueError("smoothing window must be at least 1")
        self.window = window
        self.buffer: deque[PalmEstimate] = deque(maxlen=window)

    def __len__(self):
        return len(self.buffer)

    def reset(self):
        self.buffer.clear()


def _mean_half_up(values) -> int:
    n = len(values)
    return (2 * sum(values) + n) // (2 * n)


def smooth_palm(state: SmootherState, est: PalmEstimate) -> PalmEstimate:
    """Push ``est`` and return the window mean, rounded half-up.

    An invalid estimate empties the window so the palm never drifts across a
    frame where the hand vanished.
    """
    if not est.valid:
        state.reset()
        return NO_PALM
    state.buffer.append(est)
    buf = state.buffer
    return PalmEstimate(
        _mean_half_up([e.row for e in buf]),
        _mean_half_up([e.col for e in buf]),
        _mean_half_up([e.radius for e in buf]),
        True,
    )
