"""Synthetic RGB-D hands for the five static gestures.

A hand is a palm disc, a forearm stub and one capsule per finger segment,
all rendered flat at a single depth plane in front of a far background.
Landmarks are taken straight from the construction geometry, so they are
exact ground truth for the rendered frame.
"""

from __future__ import annotations

import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import Manifest, ManifestRecord
from .frames import BinaryMask, DepthFrame, RgbdFrame, RgbFrame, encode_depth, encode_rgb
from .hand import GestureLabel, HandKeypoints

__all__ = [
    "EXTENDED",
    "GenerationError",
    "HandPose",
    "SynthParams",
    "SynthSample",
    "frame_rng",
    "render_hand",
    "sample_pose",
    "split_counts",
    "synth_clip",
    "synth_dataset",
    "synth_frame",
    "synth_sample",
]

EXTENDED = {
    GestureLabel.ONE_FINGER: {"index"},
    GestureLabel.TWO_FINGERS: {"index", "middle"},
    GestureLabel.THUMB: {"thumb"},
    GestureLabel.SHAKA: {"thumb", "pinky"},
    GestureLabel.OK: {"middle", "ring", "pinky"},
}

# rim angle of each MCP (deg clockwise from "up"), extension direction, length factor
_FINGER_GEOMETRY = {
    "index": (-33.0, -12.0, 0.95),
    "middle": (-11.0, -3.0, 1.0),
    "ring": (11.0, 5.0, 0.95),
    "pinky": (33.0, 16.0, 0.75),
}
_THUMB_CMC = (0.6, -100.0)
_THUMB_MCP = (0.9, -72.0)
_THUMB_DIR = -52.0
_THUMB_LEN = 0.75
_MCP_RIM = 0.9
_JOINT_FRACTIONS = (0.45, 0.75, 1.0)
_OK_RING_CENTER = (1.45, -50.0)
_OK_RING_RADIUS = 0.5
_FOREARM_LEN = 2.0
_FOREARM_HALF_WIDTH = 0.7

_TAG_FRAME, _TAG_CLIP, _TAG_SPLIT = 1, 2, 3


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class SynthParams:
    width: int = 640
    height: int = 480
    palm_radius: tuple[float, float] = (36.0, 48.0)
    finger_length: tuple[float, float] = (75.0, 100.0)
    finger_width: tuple[float, float] = (16.0, 22.0)
    rotation_deg: tuple[float, float] = (-30.0, 30.0)
    translation_px: tuple[float, float] = (100.0, 50.0)  # max |dx|, |dy| of the palm from centre
    scale: tuple[float, float] = (0.85, 1.15)
    hand_depth_mm: tuple[int, int] = (300, 450)
    background_depth_mm: tuple[int, int] = (800, 2000)
    depth_noise_mm: float = 2.0
    threshold_mm: int = 500
    margin_mm: int = 20
    seed: int = 0

    def validate(self):
        for name in ("palm_radius", "finger_length", "finger_width", "rotation_deg",
                     "scale", "hand_depth_mm", "background_depth_mm"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise GenerationError(f"{name} range is reversed: {lo} > {hi}")
        if self.width < 1 or self.height < 1:
            raise GenerationError("image size must be positive")
        if self.palm_radius[0] <= 0 or self.finger_width[0] <= 0 or self.scale[0] <= 0:
            raise GenerationError("palm radius, finger width and scale must be positive")
        if self.hand_depth_mm[0] <= 0:
            raise GenerationError("hand depth must be positive")
        if self.hand_depth_mm[1] > self.threshold_mm - self.margin_mm:
            raise GenerationError(
                f"hand depth up to {self.hand_depth_mm[1]} mm is not clear of the "
                f"{self.threshold_mm} mm threshold by {self.margin_mm} mm"
            )
        if self.background_depth_mm[0] <= self.threshold_mm:
            raise GenerationError("background must lie beyond the threshold")
        if self.background_depth_mm[1] > 0xFFFF:
            raise GenerationError("background depth exceeds 16 bits")
        reach = self.max_reach()
        tx, ty = self.translation_px
        if self.width / 2 - tx - reach < 0 or self.height / 2 - ty - reach < 0:
            raise GenerationError(
                f"a hand reaching {reach:.0f} px does not fit a {self.width}x{self.height} "
                f"image with translation up to ({tx}, {ty}) px"
            )

    def max_reach(self) -> float:
        return _reach(self.palm_radius[1], self.finger_length[1], self.finger_width[1]) * self.scale[1]

    def resized(self, width: int, height: int) -> "SynthParams":
        """Same hand proportions in a ``width`` x ``height`` frame."""
        k = min(width / self.width, height / self.height)

        def sc(pair):
            return (pair[0] * k, pair[1] * k)

        return replace(self, width=width, height=height, palm_radius=sc(self.palm_radius),
                       finger_length=sc(self.finger_length), finger_width=sc(self.finger_width),
                       translation_px=sc(self.translation_px))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SynthParams":
        known = {f for f in cls.__dataclass_fields__}
        kw = {}
        for k, v in doc.items():
            if k in known:
                kw[k] = tuple(v) if isinstance(v, list) else v
        return cls(**kw)


def _reach(palm_r, length, width):
    return max(
        _MCP_RIM * palm_r + length + width / 2,
        (_FOREARM_LEN + _FOREARM_HALF_WIDTH) * palm_r,
        (_OK_RING_CENTER[0] + _OK_RING_RADIUS) * palm_r + width / 2,
    )


@dataclass(frozen=True)
class HandPose:
    cx: float
    cy: float
    rotation_deg: float
    scale: float
    palm_radius: float
    finger_length: float
    finger_width: float
    depth_mm: float
    skin: tuple[int, int, int]
    backdrop: tuple[int, int, int]


@dataclass(frozen=True, eq=False)
class SynthSample:
    frame: RgbdFrame
    keypoints: HandKeypoints
    label: GestureLabel
    mask: BinaryMask
    pose: HandPose


def frame_rng(seed: int, frame_id: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, _TAG_FRAME, frame_id]))


def sample_pose(params: SynthParams, rng: np.random.Generator) -> HandPose:
    def u(pair):
        return float(rng.uniform(pair[0], pair[1]))

    tx, ty = params.translation_px
    cx = (params.width - 1) / 2 + float(rng.uniform(-tx, tx))
    cy = (params.height - 1) / 2 + float(rng.uniform(-ty, ty))
    skin = tuple(int(v) for v in rng.integers(0, 40, 3) + np.array([180, 130, 100]))
    backdrop = tuple(int(v) for v in rng.integers(20, 120, 3))
    return HandPose(
        cx, cy, u(params.rotation_deg), u(params.scale), u(params.palm_radius),
        u(params.finger_length), u(params.finger_width), u(params.hand_depth_mm),
        skin, backdrop,
    )


def _jitter(pose: HandPose, params: SynthParams, rng: np.random.Generator) -> HandPose:
    """Small frame-to-frame wobble for clips of one held gesture."""
    lo_r, hi_r = params.rotation_deg
    lo_d, hi_d = params.hand_depth_mm
    return replace(
        pose,
        cx=pose.cx + float(rng.normal(0, 1.5)),
        cy=pose.cy + float(rng.normal(0, 1.5)),
        rotation_deg=float(np.clip(pose.rotation_deg + rng.normal(0, 1.0), lo_r, hi_r)),
        depth_mm=float(np.clip(pose.depth_mm + rng.normal(0, 2.0), lo_d, hi_d)),
    )


def _polar(r, angle_deg):
    a = math.radians(angle_deg)
    return np.array([r * math.sin(a), r * math.cos(a)])


def _hand_geometry(label: GestureLabel, pose: HandPose):
    """Landmarks and primitives in hand-local units (x right, y up, palm at origin)."""
    R = pose.palm_radius
    L = pose.finger_length
    hw = pose.finger_width / 2
    extended = EXTENDED[label]
    lm = np.zeros((21, 2))
    capsules = []  # (p, q, half_width)
    annuli = []  # (centre, radius, half_width)

    lm[0] = _polar(1.25 * R, 180.0)
    capsules.append((np.zeros(2), _polar(_FOREARM_LEN * R, 180.0), _FOREARM_HALF_WIDTH * R))

    # thumb
    cmc = _polar(_THUMB_CMC[0] * R, _THUMB_CMC[1])
    mcp = _polar(_THUMB_MCP[0] * R, _THUMB_MCP[1])
    if "thumb" in extended:
        d = _polar(1.0, _THUMB_DIR)
        ip = mcp + 0.5 * _THUMB_LEN * L * d
        tip = mcp + _THUMB_LEN * L * d
        capsules += [(cmc, mcp, hw), (mcp, ip, hw), (ip, tip, hw * 0.95)]
    elif label is GestureLabel.OK:
        ip = tip = None  # set with the ring below
    else:
        # folded across the palm
        ip = _polar(0.75 * R, -50.0)
        tip = _polar(0.55 * R, -25.0)
        capsules += [(cmc, mcp, hw), (mcp, ip, hw)]
    thumb = [cmc, mcp, ip, tip]

    fingers = {}
    for name, (rim, direction, factor) in _FINGER_GEOMETRY.items():
        base = _polar(_MCP_RIM * R, rim)
        if name in extended:
            d = _polar(1.0, direction)
            joints = [base + f * factor * L * d for f in _JOINT_FRACTIONS]
            pts = [base] + joints
            for p, q in zip(pts[:-1], pts[1:]):
                capsules.append((p, q, hw))
        else:
            # curled: knuckle pokes past the rim, the rest folds onto the palm
            joints = [_polar(1.15 * R, rim), _polar(0.85 * R, rim), _polar(0.6 * R, rim)]
            capsules.append((base, joints[0], hw))
        fingers[name] = [base] + joints

    if label is GestureLabel.OK:
        centre = _polar(_OK_RING_CENTER[0] * R, _OK_RING_CENTER[1])
        rr = _OK_RING_RADIUS * R

        def on_ring(alpha):
            return centre + _polar(rr, alpha)

        base = fingers["index"][0]
        fingers["index"] = [base, on_ring(40.0), on_ring(0.0), on_ring(-40.0)]
        capsules.append((base, fingers["index"][1], hw))
        thumb = [cmc, mcp, on_ring(-120.0), on_ring(-60.0)]
        capsules += [(cmc, mcp, hw), (mcp, thumb[2], hw)]
        annuli.append((centre, rr, hw))

    lm[1:5] = thumb
    for name, start in (("index", 5), ("middle", 9), ("ring", 13), ("pinky", 17)):
        lm[start:start + 4] = fingers[name]
    return lm, capsules, annuli


def _to_image(points: np.ndarray, pose: HandPose) -> np.ndarray:
    """Local (x right, y up) -> image (row, col) floats."""
    a = math.radians(pose.rotation_deg)
    c, s = math.cos(a), math.sin(a)
    x, y = points[..., 0], points[..., 1]
    xr = x * c + y * s
    yr = -x * s + y * c
    return np.stack([pose.cy - pose.scale * yr, pose.cx + pose.scale * xr], axis=-1)


def _seg_distance(rows, cols, p, q):
    d = q - p
    denom = float(d @ d)
    pr = rows - p[0]
    pc = cols - p[1]
    if denom == 0.0:
        return np.hypot(pr, pc)
    t = np.clip((pr * d[0] + pc * d[1]) / denom, 0.0, 1.0)
    return np.hypot(pr - t * d[0], pc - t * d[1])


def render_hand(label: GestureLabel, pose: HandPose, params: SynthParams,
                rng: np.random.Generator, frame_id: int = 0) -> SynthSample:
    label = GestureLabel(label)
    h, w = params.height, params.width
    lm_local, capsules, annuli = _hand_geometry(label, pose)
    lm_img = _to_image(lm_local, pose)
    if not ((lm_img[:, 0] >= 0) & (lm_img[:, 0] <= h - 1) & (lm_img[:, 1] >= 0) & (lm_img[:, 1] <= w - 1)).all():
        raise GenerationError("hand landmarks fall outside the image")

    reach = _reach(pose.palm_radius, pose.finger_length, pose.finger_width) * pose.scale + 2
    r0, r1 = max(0, int(pose.cy - reach)), min(h, int(pose.cy + reach) + 2)
    c0, c1 = max(0, int(pose.cx - reach)), min(w, int(pose.cx + reach) + 2)
    rows, cols = np.mgrid[r0:r1, c0:c1].astype(np.float64)

    centre = _to_image(np.zeros(2), pose)
    sc = pose.scale
    inside = np.hypot(rows - centre[0], cols - centre[1]) <= pose.palm_radius * sc
    for p, q, hw in capsules:
        pi, qi = _to_image(p, pose), _to_image(q, pose)
        inside |= _seg_distance(rows, cols, pi, qi) <= hw * sc
    for cen, rr, hw in annuli:
        ci = _to_image(cen, pose)
        inside |= np.abs(np.hypot(rows - ci[0], cols - ci[1]) - rr * sc) <= hw * sc

    mask = np.zeros((h, w), dtype=bool)
    mask[r0:r1, c0:c1] = inside

    lo_b, hi_b = params.background_depth_mm
    depth = rng.integers(lo_b, hi_b + 1, size=(h, w), dtype=np.int64)
    lo_h, hi_h = params.hand_depth_mm
    n_hand = int(mask.sum())
    hand_depth = pose.depth_mm + rng.normal(0.0, params.depth_noise_mm, n_hand) if params.depth_noise_mm > 0 \
        else np.full(n_hand, pose.depth_mm)
    depth[mask] = np.clip(np.rint(hand_depth), lo_h, hi_h).astype(np.int64)

    color = np.empty((h, w, 3), dtype=np.int64)
    color[:] = pose.backdrop
    color += rng.integers(-15, 16, size=(h, w, 3))
    shade = rng.integers(-8, 9, size=(n_hand, 1))
    color[mask] = np.array(pose.skin) + shade
    color = np.clip(color, 0, 255).astype(np.uint8)

    frame = RgbdFrame(RgbFrame(color), DepthFrame(depth.astype(np.uint16)), frame_id)
    norm = np.stack([lm_img[:, 1] / w, lm_img[:, 0] / h], axis=1)
    kps = HandKeypoints(norm, frame_id)
    return SynthSample(frame, kps, label, BinaryMask(mask), pose)


def synth_sample(label: GestureLabel, params: SynthParams, rng: np.random.Generator,
                 frame_id: int = 0) -> SynthSample:
    params.validate()
    pose = sample_pose(params, rng)
    return render_hand(label, pose, params, rng, frame_id)


def synth_frame(label: GestureLabel, params: SynthParams, rng: np.random.Generator,
                frame_id: int = 0) -> tuple[RgbdFrame, HandKeypoints, GestureLabel]:
    s = synth_sample(label, params, rng, frame_id)
    return s.frame, s.keypoints, s.label


def synth_clip(label: GestureLabel, params: SynthParams, n_frames: int, seed: int,
               clip: int = 0, first_frame_id: int = 0) -> list[SynthSample]:
    """A held gesture: one base pose with small per-frame wobble."""
    params.validate()
    base = sample_pose(params, np.random.default_rng(np.random.SeedSequence([seed, _TAG_CLIP, clip])))
    out = []
    for k in range(n_frames):
        fid = first_frame_id + k
        rng = frame_rng(seed, fid)
        pose = _jitter(base, params, rng) if n_frames > 1 else base
        out.append(render_hand(label, pose, params, rng, fid))
    return out


def split_counts(n: int, fractions: tuple[float, float, float]) -> tuple[int, int, int]:
    n_train = int(round(fractions[0] * n))
    n_val = int(round(fractions[1] * n))
    n_val = min(n_val, n - n_train)
    return n_train, n_val, n - n_train - n_val


def _check_fractions(fractions):
    if len(fractions) != 3 or any(f < 0 for f in fractions) or sum(fractions) > 1 + 1e-9:
        raise ValueError(f"split fractions must be three non-negative numbers summing to <= 1, got {fractions}")


def synth_dataset(counts, params: SynthParams, seed: int, out_dir,
                  split: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  clip_length: int = 1) -> Path:
    """Render a labelled dataset to ``out_dir`` and return the manifest path.

    ``counts`` is either one int for every label or a mapping label -> count.
    Frames are grouped into clips of ``clip_length`` consecutive frames of the
    same gesture; train/validation/test membership is assigned per clip.
    Fractions need not sum to one; whatever is left over goes to test.
    """
    params = replace(params, seed=seed)
    params.validate()
    _check_fractions(split)
    if clip_length < 1:
        raise ValueError("clip_length must be >= 1")
    if isinstance(counts, int):
        counts = {label: counts for label in GestureLabel}
    counts = {GestureLabel(k): int(v) for k, v in counts.items()}

    out = Path(os.fspath(out_dir))
    (out / "frames").mkdir(parents=True, exist_ok=True)
    records = []
    frame_id = 0
    clip_id = 0
    for label in GestureLabel:
        n = counts.get(label, 0)
        n_clips = -(-n // clip_length)
        split_rng = np.random.default_rng(np.random.SeedSequence([seed, _TAG_SPLIT, int(label)]))
        order = split_rng.permutation(n_clips)
        n_train, n_val, _ = split_counts(n_clips, split)
        clip_split = {}
        for rank, k in enumerate(order):
            clip_split[int(k)] = "train" if rank < n_train else ("validation" if rank < n_train + n_val else "test")
        remaining = n
        for k in range(n_clips):
            length = min(clip_length, remaining)
            remaining -= length
            for s in synth_clip(label, params, length, seed, clip_id, frame_id):
                stem = f"frames/{s.frame.frame_id:06d}"
                (out / f"{stem}_color.ppm").write_bytes(encode_rgb(s.frame.color))
                (out / f"{stem}_depth.pgm").write_bytes(encode_depth(s.frame.depth))
                (out / f"{stem}_kps.json").write_text(s.keypoints.to_json(), encoding="utf-8")
                records.append(ManifestRecord(
                    frame_id=s.frame.frame_id,
                    color_path=f"{stem}_color.ppm",
                    depth_path=f"{stem}_depth.pgm",
                    keypoints_path=f"{stem}_kps.json",
                    label=int(label),
                    split=clip_split[k],
                    clip=clip_id,
                ))
            frame_id += length
            clip_id += 1

    doc_params = params.to_dict()
    doc_params.update(split=list(split), clip_length=clip_length,
                      counts={label.name: counts.get(label, 0) for label in GestureLabel})
    manifest = Manifest(records, out, doc_params, seed)
    path = out / "manifest.json"
    path.write_text(manifest.to_json(), encoding="utf-8")
    return path
