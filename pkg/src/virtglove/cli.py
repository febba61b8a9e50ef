"""Command-line entry point: ``virtglove <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .dataset import ManifestError, load_manifest
from .distance import Metric, distance_transform
from .frames import DecodeError, PairingError, encode_gray, encode_rgb, load_frame_pair
from .glove import GloveStyle, depth_gray, render_glove
from .hand import KeypointError, StreamError, estimate_palm, load_keypoints
from .net import ModelError, TrainConfig, TrainingError, init_model, load_model, save_model
from .pipeline import (
    FrameError,
    PipelineConfig,
    bench,
    evaluate,
    manifest_items,
    render_bench,
    run_pipeline,
    synthetic_items,
    train,
)
from .segment import depth_threshold
from .synth import GenerationError, SynthParams, synth_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

DATA_ERRORS = (
    DecodeError, PairingError, KeypointError, StreamError, ManifestError, ModelError,
    GenerationError, TrainingError, FileNotFoundError, IsADirectoryError, PermissionError,
)

log = logging.getLogger("virtglove")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags() -> argparse.ArgumentParser:
    g = argparse.ArgumentParser(add_help=False)
    S = argparse.SUPPRESS
    g.add_argument("--threshold-mm", type=int, default=S, help="depth cut-off in mm (default 500)")
    g.add_argument("--smooth-window", type=int, default=S, help="palm moving-average window (default 5)")
    g.add_argument("--input-size", type=int, default=S, help="classifier input side S (default 64)")
    g.add_argument("--seed", type=int, default=S, help="random seed (default 42)")
    g.add_argument("--config", type=Path, default=S, help="JSON file overriding defaults")
    g.add_argument("-v", "--verbose", action="store_true", default=S)
    return g


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    p = _Parser(prog="virtglove", description="Virtual-glove gesture recognition pipeline", parents=[common])
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic RGB-D dataset")
    s.add_argument("--out", type=Path, required=True)
    s.add_argument("--per-label", type=int, default=300)
    s.add_argument("--size", default=None, help="WIDTHxHEIGHT, default 640x480; hand size scales along")
    s.add_argument("--split", default="0.8,0.1,0.1", help="train,validation,test fractions")
    s.add_argument("--clip-length", type=int, default=1, help="frames per held-gesture clip")
    s.add_argument("--noise-mm", type=float, default=None)

    for name, help_ in (("segment", "dump the depth-threshold mask and segmented colour"),
                        ("dt", "dump the distance transform as 8-bit PGM"),
                        ("glove", "dump the virtual glove over the grey depth image")):
        d = sub.add_parser(name, parents=[common], help=help_)
        d.add_argument("--color", type=Path, required=True)
        d.add_argument("--depth", type=Path, required=True)
        d.add_argument("--out", type=Path, required=True)
        if name == "segment":
            d.add_argument("--out-color", type=Path, default=None)
        if name == "dt":
            d.add_argument("--metric", choices=[m.value for m in Metric], default=None)
        if name == "glove":
            d.add_argument("--keypoints", type=Path, required=True)

    t = sub.add_parser("train", parents=[common], help="train the classifier on a manifest")
    t.add_argument("--manifest", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)

    e = sub.add_parser("eval", parents=[common], help="accuracy table and confusion matrix")
    e.add_argument("--manifest", type=Path, required=True)
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--split", default="test")
    e.add_argument("--json", type=Path, default=None, help="also write the report as JSON")
    e.add_argument("--workers", type=int, default=1)

    b = sub.add_parser("bench", parents=[common], help="per-stage latency on synthetic frames")
    b.add_argument("--model", type=Path, default=None, help="checkpoint (default: untrained weights)")
    b.add_argument("--frames", type=int, default=100)
    b.add_argument("--warmup", type=int, default=5)
    b.add_argument("--size", default=None, help="WIDTHxHEIGHT, default 640x480; hand size scales along")
    b.add_argument("--json", type=Path, default=None)

    r = sub.add_parser("run", parents=[common], help="stream frames through the full pipeline")
    r.add_argument("--model", type=Path, required=True)
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--manifest", type=Path)
    src.add_argument("--synthetic", type=int, metavar="N", help="N in-memory synthetic frames")
    r.add_argument("--split", default="all")
    r.add_argument("--glove-dir", type=Path, default=None, help="write each glove frame as PPM here")
    return p


# --- configuration ---------------------------------------------------------


def load_settings(args) -> dict:
    cfg = {}
    path = getattr(args, "config", None)
    if path is not None:
        try:
            cfg = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise UsageError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    for flag in ("threshold_mm", "smooth_window", "input_size", "seed"):
        if hasattr(args, flag):
            cfg[flag] = getattr(args, flag)
    return cfg


def pipeline_config(settings: dict) -> PipelineConfig:
    try:
        style = GloveStyle.from_dict(settings.get("style", {}))
        cfg = PipelineConfig(
            threshold_mm=int(settings.get("threshold_mm", 500)),
            smooth_window=int(settings.get("smooth_window", 5)),
            input_size=int(settings.get("input_size", 64)),
            metric=Metric(settings.get("metric", Metric.CITY_BLOCK.value)),
            style=style,
            seed=int(settings.get("seed", 42)),
        )
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad configuration: {exc}") from exc
    if cfg.threshold_mm <= 0 or cfg.smooth_window < 1 or cfg.input_size < 4 or cfg.input_size % 4:
        raise UsageError("threshold must be > 0, smooth window >= 1, input size a positive multiple of 4")
    return cfg


def synth_params(settings: dict, size: str | None = None) -> SynthParams:
    try:
        params = SynthParams.from_dict(settings.get("synth", {}))
    except TypeError as exc:
        raise UsageError(f"bad synth configuration: {exc}") from exc
    if "threshold_mm" in settings:
        params = replace(params, threshold_mm=int(settings["threshold_mm"]))
    if size:
        w, h = _parse_size(size)
        if w < 1 or h < 1:
            raise UsageError(f"size must be positive, got {size!r}")
        params = params.resized(w, h)
    return params


def _parse_size(text: str) -> tuple[int, int]:
    try:
        w, h = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise UsageError(f"size must look like 640x480, got {text!r}") from None
    return w, h


# --- commands ----------------------------------------------------------------


def cmd_synth(args, settings):
    params = synth_params(settings, args.size)
    if args.noise_mm is not None:
        params = replace(params, depth_noise_mm=args.noise_mm)
    try:
        split = tuple(float(v) for v in args.split.split(","))
    except ValueError:
        raise UsageError(f"bad --split {args.split!r}") from None
    if len(split) != 3:
        raise UsageError("--split needs three fractions")
    seed = int(settings.get("seed", 42))
    path = synth_dataset(args.per_label, params, seed, args.out, split, args.clip_length)
    print(f"wrote {path} ({args.per_label * 5} frames, seed {seed})")


def _segment(args, cfg):
    frame = load_frame_pair(args.color, args.depth)
    return frame, depth_threshold(frame, cfg.threshold_mm)


def cmd_segment(args, settings):
    cfg = pipeline_config(settings)
    _, seg = _segment(args, cfg)
    args.out.write_bytes(encode_gray(seg.mask.bits.astype(np.int64) * 255))
    if args.out_color:
        args.out_color.write_bytes(encode_rgb(seg.color))
    print(f"mask: {seg.mask.count()} hand pixels of {seg.mask.width}x{seg.mask.height} "
          f"at {cfg.threshold_mm} mm")


def cmd_dt(args, settings):
    cfg = pipeline_config(settings)
    metric = Metric(args.metric) if args.metric else cfg.metric
    _, seg = _segment(args, cfg)
    dmap = distance_transform(seg.mask, metric)
    args.out.write_bytes(encode_gray(dmap.values))
    palm = estimate_palm(dmap)
    print(f"metric {metric.value}; max distance {int(dmap.values.max())}; "
          f"palm {'(%d, %d) r=%d' % (palm.row, palm.col, palm.radius) if palm.valid else 'not found'}")


def cmd_glove(args, settings):
    cfg = pipeline_config(settings)
    _, seg = _segment(args, cfg)
    kps = load_keypoints(args.keypoints)
    palm = estimate_palm(distance_transform(seg.mask, cfg.metric))
    img, drawn = render_glove(depth_gray(seg), kps, palm, cfg.style)
    args.out.write_bytes(encode_rgb(img))
    print("glove drawn" if drawn else "no glove: no hand found")


def cmd_train(args, settings):
    cfg = pipeline_config(settings)
    t = settings.get("train", {})
    try:
        tc = TrainConfig(
            lr=args.lr if args.lr is not None else float(t.get("lr", TrainConfig.lr)),
            batch_size=args.batch_size if args.batch_size is not None else int(t.get("batch_size", TrainConfig.batch_size)),
            epochs=args.epochs if args.epochs is not None else int(t.get("epochs", TrainConfig.epochs)),
            seed=cfg.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    manifest = load_manifest(args.manifest)

    def progress(epoch, loss, acc):
        msg = f"epoch {epoch + 1}/{tc.epochs} loss {loss:.4f}"
        print(msg + (f" val_acc {acc:.3f}" if acc is not None else ""), flush=True)

    model = train(manifest, tc, cfg, progress=progress)
    save_model(model, args.out)
    print(f"saved {args.out} (crc32 of weights {model.checksum():08x})")


def cmd_eval(args, settings):
    cfg = pipeline_config(settings)
    model = load_model(args.model)
    _check_input_size(model, cfg)
    report = evaluate(model, load_manifest(args.manifest), args.split, cfg, args.workers)
    print(f"split {args.split}, metric {cfg.metric.value}, threshold {cfg.threshold_mm} mm")
    print(report.render())
    if args.json:
        doc = {**report.to_dict(), "metric": cfg.metric.value, "threshold_mm": cfg.threshold_mm}
        args.json.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def _check_input_size(model, cfg):
    if model.input_size != cfg.input_size:
        raise UsageError(f"model expects input size {model.input_size}, pipeline is set to {cfg.input_size}")


def cmd_bench(args, settings):
    cfg = pipeline_config(settings)
    model = load_model(args.model) if args.model else init_model(cfg.seed, cfg.input_size)
    _check_input_size(model, cfg)
    params = synth_params(settings, args.size)
    items = synthetic_items(args.frames + args.warmup, params, cfg.seed)
    try:
        report = bench(items, model, args.frames, args.warmup, cfg)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    print(render_bench(report))
    if args.json:
        args.json.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")


def cmd_run(args, settings):
    cfg = pipeline_config(settings)
    model = load_model(args.model)
    _check_input_size(model, cfg)
    if args.manifest:
        manifest = load_manifest(args.manifest)
        items = manifest_items(manifest, manifest.split(args.split))
    else:
        items = synthetic_items(args.synthetic, synth_params(settings), cfg.seed)
    if args.glove_dir:
        args.glove_dir.mkdir(parents=True, exist_ok=True)
    for res in run_pipeline(items, model, cfg, keep_glove=args.glove_dir is not None):
        label = res.result.label.name if res.result.hand else "NO_HAND"
        conf = f"{float(res.result.probabilities.max()):.3f}" if res.result.hand else "-"
        truth = "" if res.label is None else f" true={res.label}"
        print(f"{res.frame_id}\t{label}\t{conf}\t{res.timings.total:.1f}ms{truth}")
        if args.glove_dir and res.glove is not None:
            (args.glove_dir / f"{res.frame_id:06d}_glove.ppm").write_bytes(encode_rgb(res.glove))


COMMANDS = {
    "synth": cmd_synth, "segment": cmd_segment, "dt": cmd_dt, "glove": cmd_glove,
    "train": cmd_train, "eval": cmd_eval, "bench": cmd_bench, "run": cmd_run,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        settings = load_settings(args)
        COMMANDS[args.command](args, settings)
    except UsageError as exc:
        print(f"virtglove: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except FrameError as exc:
        print(f"virtglove: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.__cause__, DATA_ERRORS) else EXIT_INTERNAL
    except DATA_ERRORS as exc:
        print(f"virtglove: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # noqa: BLE001
        log.debug("internal error", exc_info=True)
        print(f"virtglove: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
