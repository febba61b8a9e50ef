"""End-to-end frame pipeline, evaluation tables and latency benchmarking.

Per frame: decode -> depth threshold -> binary mask -> distance transform ->
palm estimate + smoothing -> keypoint fetch -> glove render -> net input ->
CNN.  Every stage is timed with ``time.perf_counter_ns``.  File reads happen
before the clock starts; decoding the bytes is its own stage.
"""

from __future__ import annotations

import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Iterable, Iterator

import numpy as np

from .dataset import Manifest, ManifestRecord
from .distance import Metric, distance_transform
from .frames import RgbdFrame, RgbFrame, decode_depth, decode_rgb, encode_depth, encode_rgb
from .glove import DEFAULT_INPUT_SIZE, GloveStyle, NetInput, compose_net_input, render_glove
from .hand import GestureLabel, HandKeypoints, PalmEstimate, SmootherState, estimate_palm, load_keypoints, smooth_palm
from .net import ClassificationResult, GestureModel, TrainConfig, forward, train_arrays
from .segment import DEFAULT_THRESHOLD_MM, depth_threshold, to_binary
from .synth import SynthParams, synth_clip

log = logging.getLogger(__name__)

STAGES = ("decode", "threshold", "distance", "palm", "keypoints", "glove", "compose", "inference")
LATENCY_BUDGET_MS = 135.0
REACTION_MS = 180.0


class FrameError(RuntimeError):
    """A stage failed; carries the frame id, the original error is ``__cause__``."""

    def __init__(self, frame_id: int, exc: BaseException):
        super().__init__(f"frame_id {frame_id}: {type(exc).__name__}: {exc}")
        self.frame_id = frame_id


@dataclass(frozen=True)
class PipelineConfig:
    threshold_mm: int = DEFAULT_THRESHOLD_MM
    smooth_window: int = 5
    input_size: int = DEFAULT_INPUT_SIZE
    metric: Metric = Metric.CITY_BLOCK
    style: GloveStyle = field(default_factory=GloveStyle)
    seed: int = 42


@dataclass
class StageTimings:
    decode: float = 0.0
    threshold: float = 0.0
    distance: float = 0.0
    palm: float = 0.0
    keypoints: float = 0.0
    glove: float = 0.0
    compose: float = 0.0
    inference: float = 0.0
    total: float = 0.0

    def stages(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in STAGES}

    def as_dict(self) -> dict[str, float]:
        return {**self.stages(), "total": self.total}


@dataclass(frozen=True, eq=False)
class StreamItem:
    """One frame as it enters the pipeline: undecoded bytes plus a keypoint source."""

    frame_id: int
    color: bytes
    depth: bytes
    keypoints: Callable[[], HandKeypoints] | HandKeypoints | None
    label: int | None = None
    clip: int | None = None


@dataclass(frozen=True, eq=False)
class FrameResult:
    frame_id: int
    result: ClassificationResult
    timings: StageTimings
    palm: PalmEstimate
    net_input: NetInput | None = None
    glove: RgbFrame | None = None
    label: int | None = None


class _Clock:
    def __init__(self, timings: StageTimings):
        self.t = timings
        self.last = time.perf_counter_ns()

    def lap(self, stage: str):
        now = time.perf_counter_ns()
        setattr(self.t, stage, getattr(self.t, stage) + (now - self.last) / 1e6)
        self.last = now


def _fetch(kp) -> HandKeypoints | None:
    return kp() if callable(kp) else kp


def process_frame(item: StreamItem, smoother: SmootherState, model: GestureModel | None,
                  config: PipelineConfig, keep_glove: bool = False) -> FrameResult:
    timings = StageTimings()
    start = time.perf_counter_ns()
    clock = _Clock(timings)
    frame = RgbdFrame(decode_rgb(item.color), decode_depth(item.depth), item.frame_id)
    clock.lap("decode")
    seg = depth_threshold(frame, config.threshold_mm)
    mask = to_binary(seg)
    clock.lap("threshold")
    dmap = distance_transform(mask, config.metric)
    clock.lap("distance")
    palm = smooth_palm(smoother, estimate_palm(dmap))
    clock.lap("palm")

    if not palm.valid:
        timings.total = (time.perf_counter_ns() - start) / 1e6
        return FrameResult(item.frame_id, ClassificationResult(None, None, timings.as_dict()),
                           timings, palm, label=item.label)

    kps = _fetch(item.keypoints)
    clock.lap("keypoints")
    black = RgbFrame(np.zeros((frame.height, frame.width, 3), dtype=np.uint8))
    glove, _ = render_glove(black, kps, palm, config.style)
    clock.lap("glove")
    x = compose_net_input(glove, seg, config.threshold_mm, config.input_size)
    clock.lap("compose")
    if model is not None:
        probs = forward(model, x)
        label = GestureLabel(int(np.argmax(probs)))
    else:
        probs, label = None, None
    clock.lap("inference")
    timings.total = (time.perf_counter_ns() - start) / 1e6
    result = ClassificationResult(probs, label, timings.as_dict())
    return FrameResult(item.frame_id, result, timings, palm, x, glove if keep_glove else None, item.label)


def run_pipeline(items: Iterable[StreamItem], model: GestureModel | None,
                 config: PipelineConfig = PipelineConfig(), keep_glove: bool = False) -> Iterator[FrameResult]:
    """Stream frames through the pipeline with one palm smoother per clip.

    Items without a clip id form a single stream.  With ``model=None`` the
    classifier is skipped and results carry only the composed net input.
    """
    smoother = SmootherState(config.smooth_window)
    current_clip = object()
    for item in items:
        if item.clip != current_clip:
            smoother.reset()
            current_clip = item.clip
        try:
            result = process_frame(item, smoother, model, config, keep_glove)
        except Exception as exc:
            raise FrameError(item.frame_id, exc) from exc
        yield result


# --- sources ---------------------------------------------------------------


def manifest_items(manifest: Manifest, records: Iterable[ManifestRecord] | None = None) -> Iterator[StreamItem]:
    if records is None:
        records = manifest.records
    for rec in records:
        color = manifest.resolve(rec.color_path).read_bytes()
        depth = manifest.resolve(rec.depth_path).read_bytes()
        kp_path = manifest.resolve(rec.keypoints_path)
        yield StreamItem(rec.frame_id, color, depth, lambda p=kp_path: load_keypoints(p), rec.label, rec.clip)


def synthetic_items(n_frames: int, params: SynthParams = SynthParams(), seed: int = 0,
                    clip_length: int = 10) -> list[StreamItem]:
    """In-memory encoded synthetic frames, cycling through the gestures per clip."""
    items = []
    fid = 0
    for clip in itertools.count():
        if fid >= n_frames:
            break
        label = GestureLabel(clip % len(GestureLabel))
        n = min(clip_length, n_frames - fid)
        for s in synth_clip(label, params, n, seed, clip, fid):
            items.append(StreamItem(s.frame.frame_id, encode_rgb(s.frame.color), encode_depth(s.frame.depth),
                                    s.keypoints, int(label), clip))
        fid += n
    return items


def _clip_groups(records: list[ManifestRecord]) -> list[list[ManifestRecord]]:
    groups = []
    for _, grp in itertools.groupby(records, key=lambda r: (r.clip, r.frame_id) if r.clip is None else r.clip):
        groups.append(list(grp))
    return groups


def _run_groups(manifest, records, model, config, workers: int) -> list[FrameResult]:
    groups = _clip_groups(records)

    def one(group):
        return list(run_pipeline(manifest_items(manifest, group), model, config))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            chunks = list(pool.map(one, groups))
    else:
        chunks = [one(g) for g in groups]
    return [r for chunk in chunks for r in chunk]


# --- training --------------------------------------------------------------


def prepare_arrays(manifest: Manifest, split: str, config: PipelineConfig = PipelineConfig(),
                   workers: int = 1):
    """Net inputs and labels for one split; frames with no hand are dropped."""
    records = manifest.split(split)
    results = _run_groups(manifest, records, None, config, workers)
    kept = [r for r in results if r.net_input is not None]
    if len(kept) < len(results):
        log.warning("%d of %d %s frames had no hand and were skipped", len(results) - len(kept), len(results), split)
    size = config.input_size
    x = np.stack([r.net_input.data for r in kept]) if kept else np.zeros((0, 4, size, size), np.float32)
    y = np.array([r.label for r in kept], dtype=np.int64)
    return x, y


def train(manifest: Manifest, cfg: TrainConfig = TrainConfig(), config: PipelineConfig = PipelineConfig(),
          workers: int = 1, progress=None) -> GestureModel:
    x, y = prepare_arrays(manifest, "train", config, workers)
    xv, yv = prepare_arrays(manifest, "validation", config, workers)
    model = train_arrays(x, y, cfg, xv, yv, input_size=config.input_size, progress=progress)
    model.meta["pipeline"] = {
        "threshold_mm": config.threshold_mm,
        "smooth_window": config.smooth_window,
        "input_size": config.input_size,
        "metric": config.metric.value,
    }
    return model


# --- evaluation ------------------------------------------------------------


@dataclass(frozen=True)
class AccuracyTable:
    correct: tuple[int, ...]
    attempted: tuple[int, ...]

    @classmethod
    def from_counts(cls, correct, attempted) -> "AccuracyTable":
        correct = tuple(int(c) for c in correct)
        attempted = tuple(int(a) for a in attempted)
        if len(correct) != len(attempted) or any(c > a or c < 0 for c, a in zip(correct, attempted)):
            raise ValueError("correct counts must be between 0 and attempted")
        return cls(correct, attempted)

    @property
    def accuracy(self) -> tuple[float, ...]:
        return tuple(_pct(c, a) for c, a in zip(self.correct, self.attempted))

    @property
    def total_correct(self) -> int:
        return sum(self.correct)

    @property
    def total_attempted(self) -> int:
        return sum(self.attempted)

    @property
    def overall(self) -> float:
        return _pct(self.total_correct, self.total_attempted)

    def rows(self) -> list[list[str]]:
        header = ["-"] + [label.title for label in GestureLabel] + ["Total"]
        return [
            header,
            ["Correct"] + [str(c) for c in self.correct] + [str(self.total_correct)],
            ["Attempted"] + [str(a) for a in self.attempted] + [str(self.total_attempted)],
            ["Accuracy"] + [_fmt_pct(v) for v in self.accuracy] + [_fmt_pct(self.overall)],
        ]

    def render(self) -> str:
        return _grid(self.rows())

    def to_dict(self) -> dict:
        return {
            "classes": [label.name for label in GestureLabel],
            "correct": list(self.correct),
            "attempted": list(self.attempted),
            "accuracy_pct": [round(v, 2) for v in self.accuracy],
            "overall": {"correct": self.total_correct, "attempted": self.total_attempted,
                        "accuracy_pct": round(self.overall, 2)},
        }


def _pct(c, a):
    return 100.0 * c / a if a else float("nan")


def _fmt_pct(v):
    return "n/a" if v != v else f"{v:.2f}%"


def _grid(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    line = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    out = [line]
    for row in rows:
        out.append("| " + " | ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(row, widths))) + " |")
        out.append(line)
    return "\n".join(out)


@dataclass(frozen=True, eq=False)
class EvalReport:
    table: AccuracyTable
    confusion: np.ndarray  # (5, 5) true x predicted, frames with a hand
    no_hand: np.ndarray  # (5,) frames per true class where no hand was found
    results: list = field(default_factory=list, repr=False)

    def render(self) -> str:
        names = [label.title for label in GestureLabel]
        rows = [["true \\ predicted"] + names + ["No hand"]]
        for i, name in enumerate(names):
            rows.append([name] + [str(int(v)) for v in self.confusion[i]] + [str(int(self.no_hand[i]))])
        return self.table.render() + "\n\nConfusion matrix\n" + _grid(rows)

    def to_dict(self) -> dict:
        return {**self.table.to_dict(), "confusion": self.confusion.tolist(), "no_hand": self.no_hand.tolist()}


def tally(true_labels, predicted) -> EvalReport:
    """Build the table from (true, predicted-or-None) pairs; None counts as wrong."""
    confusion = np.zeros((len(GestureLabel), len(GestureLabel)), dtype=np.int64)
    no_hand = np.zeros(len(GestureLabel), dtype=np.int64)
    for t, p in zip(true_labels, predicted):
        if p is None:
            no_hand[int(t)] += 1
        else:
            confusion[int(t), int(p)] += 1
    attempted = confusion.sum(axis=1) + no_hand
    table = AccuracyTable.from_counts(np.diag(confusion), attempted)
    return EvalReport(table, confusion, no_hand)


def evaluate(model: GestureModel, manifest: Manifest, split: str = "test",
             config: PipelineConfig = PipelineConfig(), workers: int = 1) -> EvalReport:
    records = manifest.split(split)
    if not records:
        raise ValueError(f"split {split!r} is empty")
    results = _run_groups(manifest, records, model, config, workers)
    report = tally([r.label for r in results], [r.result.label for r in results])
    return replace(report, results=results)


# --- benchmark -------------------------------------------------------------


def _summary(values) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {"mean": float(v.mean()), "median": float(np.median(v)), "p95": float(np.percentile(v, 95))}


def bench(items: Iterable[StreamItem], model: GestureModel, n_frames: int = 100, warmup: int = 5,
          config: PipelineConfig = PipelineConfig()) -> dict:
    """Per-stage and end-to-end latency over ``n_frames`` after ``warmup`` frames."""
    if n_frames < 30:
        raise ValueError("bench needs at least 30 measured frames")
    timings = []
    for k, res in enumerate(run_pipeline(items, model, config)):
        if k >= warmup:
            timings.append(res.timings)
        if len(timings) == n_frames:
            break
    if len(timings) < n_frames:
        raise ValueError(f"stream ran out after {len(timings)} measured frames")
    stages = {name: _summary([getattr(t, name) for t in timings]) for name in STAGES}
    total = _summary([t.total for t in timings])
    return {
        "frames": n_frames,
        "warmup": warmup,
        "metric": config.metric.value,
        "threshold_mm": config.threshold_mm,
        "stages": stages,
        "total": total,
        "per_frame_total_ge_max_stage": all(t.total >= max(t.stages().values()) for t in timings),
        "budget_ms": LATENCY_BUDGET_MS,
        "reaction_ms": REACTION_MS,
        "within_budget": total["median"] <= LATENCY_BUDGET_MS,
        "within_reaction": total["median"] <= REACTION_MS,
    }


def render_bench(report: dict) -> str:
    rows = [["stage", "mean ms", "median ms", "p95 ms"]]
    for name, s in list(report["stages"].items()) + [("total", report["total"])]:
        rows.append([name] + [f"{s[k]:.2f}" for k in ("mean", "median", "p95")])
    flags = (
        f"median {report['total']['median']:.1f} ms "
        f"{'<=' if report['within_budget'] else '>'} {report['budget_ms']:.0f} ms budget; "
        f"{'<=' if report['within_reaction'] else '>'} {report['reaction_ms']:.0f} ms reaction bound"
    )
    setup = f"{report['frames']} frames, metric {report['metric']}, threshold {report['threshold_mm']} mm"
    return setup + "\n" + _grid(rows) + "\n" + flags


def report_json(report) -> str:
    return json.dumps(report, indent=2, sort_keys=False)
