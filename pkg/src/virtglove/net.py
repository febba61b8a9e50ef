"""Small convolutional gesture classifier written directly against numpy.

Architecture (input 4 x S x S, S divisible by 4):

    conv 3x3x8 (pad 1) -> ReLU -> maxpool 2 -> conv 3x3x16 (pad 1) -> ReLU
    -> maxpool 2 -> flatten -> dense 32 -> ReLU -> dense 5 -> softmax

Activations are kept NHWC internally.  Weights live in one flat float32
vector; every layer reads a view of it.  The same code runs in float64 for
gradient checking.
"""

from __future__ import annotations

import json
import logging
import math
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .glove import DEFAULT_INPUT_SIZE, NetInput
from .hand import GestureLabel

log = logging.getLogger(__name__)

N_CLASSES = len(GestureLabel)
MAGIC = b"GLVC"
FORMAT_VERSION = 1


class ModelError(ValueError):
    """Bad checkpoint or a model/input mismatch."""


class TrainingError(RuntimeError):
    pass


def architecture(input_size: int = DEFAULT_INPUT_SIZE) -> dict:
    if input_size < 4 or input_size % 4:
        raise ModelError(f"input size must be a positive multiple of 4, got {input_size}")
    flat = (input_size // 4) ** 2 * 16
    return {
        "input": [4, input_size, input_size],
        "layout": "NHWC activations, conv weights (out, in, kh, kw), flatten order (h, w, c)",
        "layers": [
            {"type": "conv", "in": 4, "out": 8, "kernel": 3, "stride": 1, "pad": 1},
            {"type": "relu"},
            {"type": "maxpool", "size": 2},
            {"type": "conv", "in": 8, "out": 16, "kernel": 3, "stride": 1, "pad": 1},
            {"type": "relu"},
            {"type": "maxpool", "size": 2},
            {"type": "flatten"},
            {"type": "dense", "in": flat, "out": 32},
            {"type": "relu"},
            {"type": "dense", "in": 32, "out": N_CLASSES},
            {"type": "softmax"},
        ],
        "params": [
            ["conv1.w", [8, 4, 3, 3]], ["conv1.b", [8]],
            ["conv2.w", [16, 8, 3, 3]], ["conv2.b", [16]],
            ["dense1.w", [32, flat]], ["dense1.b", [32]],
            ["dense2.w", [N_CLASSES, 32]], ["dense2.b", [N_CLASSES]],
        ],
        "classes": [label.name for label in GestureLabel],
    }


def param_count(arch: dict) -> int:
    return sum(math.prod(shape) for _, shape in arch["params"])


@dataclass(eq=False)
class GestureModel:
    arch: dict
    weights: np.ndarray  # flat float32
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.ascontiguousarray(self.weights, dtype=np.float32).ravel()
        n = param_count(self.arch)
        if self.weights.size != n:
            raise ModelError(f"architecture needs {n} weights, got {self.weights.size}")
        if not np.isfinite(self.weights).all():
            raise ModelError("model contains non-finite weights")

    @property
    def input_size(self) -> int:
        return int(self.arch["input"][-1])

    def params(self, dtype=np.float32) -> dict[str, np.ndarray]:
        return unpack(self.arch, self.weights.astype(dtype, copy=False))

    def checksum(self) -> int:
        return zlib.crc32(self.weights.tobytes())

    def __eq__(self, other):
        if not isinstance(other, GestureModel):
            return NotImplemented
        return (
            self.arch == other.arch
            and self.meta == other.meta
            and self.weights.tobytes() == other.weights.tobytes()
        )


def unpack(arch: dict, flat: np.ndarray) -> dict[str, np.ndarray]:
    out, pos = {}, 0
    for name, shape in arch["params"]:
        n = math.prod(shape)
        out[name] = flat[pos:pos + n].reshape(shape)
        pos += n
    return out


def init_model(seed: int = 42, input_size: int = DEFAULT_INPUT_SIZE) -> GestureModel:
    """He (fan-in) normal weights; hidden biases start at 0.01, output bias at 0."""
    arch = architecture(input_size)
    rng = np.random.default_rng(seed)
    flat = np.empty(param_count(arch), dtype=np.float32)
    p = unpack(arch, flat)
    for name, shape in arch["params"]:
        if name.endswith(".w"):
            fan_in = math.prod(shape[1:])
            p[name][...] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=shape)
        else:
            p[name][...] = 0.0 if name.startswith("dense2") else 0.01
    return GestureModel(arch, flat, {"seed": seed})


# --- layers ----------------------------------------------------------------


def _conv_forward(x, w, b):
    n, h, wd, c = x.shape
    f = w.shape[0]
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    cols = sliding_window_view(xp, (3, 3), axis=(1, 2)).reshape(n * h * wd, c * 9)
    wm = w.reshape(f, c * 9)
    out = (cols @ wm.T + b).reshape(n, h, wd, f)
    return out, cols


def _conv_backward(dout, cols, w, x_shape, need_dx=True):
    n, h, wd, c = x_shape
    f = w.shape[0]
    dflat = dout.reshape(-1, f)
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dflat @ w.reshape(f, c * 9)).reshape(n, h, wd, c, 3, 3)
    dxp = np.zeros((n, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i:i + h, j:j + wd, :] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1, :], dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    win = x.reshape(n, h // 2, 2, w // 2, 2, c).transpose(0, 1, 3, 5, 2, 4).reshape(n, h // 2, w // 2, c, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _pool_backward(dout, idx):
    n, h2, w2, c = dout.shape
    d = np.zeros((n, h2, w2, c, 4), dtype=dout.dtype)
    np.put_along_axis(d, idx[..., None], dout[..., None], axis=-1)
    return d.reshape(n, h2, w2, c, 2, 2).transpose(0, 1, 4, 2, 5, 3).reshape(n, h2 * 2, w2 * 2, c)


def _softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _as_batch(x, size, dtype):
    if isinstance(x, NetInput):
        x = x.data
    x = np.asarray(x)
    if x.ndim == 3:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != (4, size, size):
        raise ModelError(f"expected input of shape (N, 4, {size}, {size}), got {x.shape}")
    return np.ascontiguousarray(x.transpose(0, 2, 3, 1), dtype=dtype)


def _forward(p, x):
    """Logits and the cache needed for backprop.  ``x`` is NHWC."""
    z1, cols1 = _conv_forward(x, p["conv1.w"], p["conv1.b"])
    a1 = np.maximum(z1, 0)
    m1, idx1 = _pool_forward(a1)
    z2, cols2 = _conv_forward(m1, p["conv2.w"], p["conv2.b"])
    a2 = np.maximum(z2, 0)
    m2, idx2 = _pool_forward(a2)
    flat = m2.reshape(m2.shape[0], -1)
    z3 = flat @ p["dense1.w"].T + p["dense1.b"]
    a3 = np.maximum(z3, 0)
    logits = a3 @ p["dense2.w"].T + p["dense2.b"]
    cache = (x.shape, cols1, z1, idx1, m1.shape, cols2, z2, idx2, m2.shape, flat, z3, a3)
    return logits, cache


def _backward(p, dlogits, cache):
    x_shape, cols1, z1, idx1, m1_shape, cols2, z2, idx2, m2_shape, flat, z3, a3 = cache
    g = {}
    g["dense2.w"] = dlogits.T @ a3
    g["dense2.b"] = dlogits.sum(axis=0)
    dz3 = (dlogits @ p["dense2.w"]) * (z3 > 0)
    g["dense1.w"] = dz3.T @ flat
    g["dense1.b"] = dz3.sum(axis=0)
    dm2 = (dz3 @ p["dense1.w"]).reshape(m2_shape)
    dz2 = _pool_backward(dm2, idx2) * (z2 > 0)
    dm1, g["conv2.w"], g["conv2.b"] = _conv_backward(dz2, cols2, p["conv2.w"], m1_shape)
    dz1 = _pool_backward(dm1, idx1) * (z1 > 0)
    _, g["conv1.w"], g["conv1.b"] = _conv_backward(dz1, cols1, p["conv1.w"], x_shape, need_dx=False)
    return g


def loss_and_grad(model: GestureModel, x, y, dtype=np.float32):
    """Mean cross-entropy over the batch and its gradient as a flat vector."""
    p = model.params(dtype)
    xb = _as_batch(x, model.input_size, dtype)
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    logits, cache = _forward(p, xb)
    loss, dlogits = _cross_entropy(logits, y)
    g = _backward(p, dlogits, cache)
    flat = np.concatenate([g[name].ravel() for name, _ in model.arch["params"]]).astype(dtype, copy=False)
    return loss, flat


def _cross_entropy(logits, y):
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsum - shifted[np.arange(n), y]))
    probs = np.exp(shifted - logsum[:, None])
    probs[np.arange(n), y] -= 1
    return loss, probs / n


def loss_value(model: GestureModel, x, y, dtype=np.float32, weights=None) -> float:
    arch = model.arch
    w = model.weights if weights is None else weights
    p = unpack(arch, np.asarray(w).astype(dtype, copy=False))
    xb = _as_batch(x, model.input_size, dtype)
    logits, _ = _forward(p, xb)
    return _cross_entropy(logits, np.atleast_1d(np.asarray(y, dtype=np.int64)))[0]


def logits(model: GestureModel, x, dtype=np.float32) -> np.ndarray:
    xb = _as_batch(x, model.input_size, dtype)
    return _forward(model.params(dtype), xb)[0]


def forward(model: GestureModel, x) -> np.ndarray:
    """Class probabilities, shape (5,) for one input or (N, 5) for a batch."""
    single = isinstance(x, NetInput) or np.asarray(x).ndim == 3
    z = logits(model, x).astype(np.float64)
    probs = _softmax(z)
    return probs[0] if single else probs


@dataclass(frozen=True)
class ClassificationResult:
    probabilities: np.ndarray | None
    label: GestureLabel | None  # None when no hand was found
    timings_ms: dict | None = None

    @property
    def hand(self) -> bool:
        return self.label is not None


def predict(model: GestureModel, x) -> ClassificationResult:
    probs = forward(model, x)
    # np.argmax returns the first maximum, i.e. the lowest class code on ties
    return ClassificationResult(probs, GestureLabel(int(np.argmax(probs))))


# --- training --------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 0.1
    batch_size: int = 32
    epochs: int = 30
    seed: int = 42
    train_fraction: float = 0.8
    val_fraction: float = 0.1

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch size must be >= 1 and epochs >= 0")
        if self.train_fraction < 0 or self.val_fraction < 0 or self.train_fraction + self.val_fraction > 1:
            raise ValueError("split fractions must be non-negative and sum to at most 1")


def accuracy(model: GestureModel, x, y, batch: int = 256) -> float:
    y = np.asarray(y)
    if len(y) == 0:
        return float("nan")
    hits = 0
    for s in range(0, len(y), batch):
        hits += int((logits(model, x[s:s + batch]).argmax(axis=1) == y[s:s + batch]).sum())
    return hits / len(y)


def mean_loss(model: GestureModel, x, y, batch: int = 256) -> float:
    total = 0.0
    for s in range(0, len(y), batch):
        total += loss_value(model, x[s:s + batch], y[s:s + batch]) * len(y[s:s + batch])
    return total / len(y)


def train_arrays(x: np.ndarray, y: np.ndarray, cfg: TrainConfig = TrainConfig(),
                 x_val=None, y_val=None, require_all_classes: bool = True,
                 input_size: int | None = None, progress=None) -> GestureModel:
    """Mini-batch SGD on mean cross-entropy.

    ``x`` is (N, 4, S, S) float32, ``y`` integer class codes.  Shuffling and
    initialisation share one generator seeded from ``cfg.seed``, so a fixed
    seed reproduces the weights bit for bit on the same platform.
    """
    x = np.ascontiguousarray(x, dtype=np.float32)
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise TrainingError("no training samples")
    counts = np.bincount(y, minlength=N_CLASSES)
    if require_all_classes and (counts == 0).any():
        empty = [GestureLabel(i).name for i in np.flatnonzero(counts == 0)]
        raise TrainingError(f"no training samples for class(es) {', '.join(empty)}")
    size = input_size or x.shape[-1]
    model = init_model(cfg.seed, size)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    initial = mean_loss(model, x, y)
    losses = []
    val_acc = []
    w = model.weights
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(y))
        total = 0.0
        for s in range(0, len(y), cfg.batch_size):
            idx = order[s:s + cfg.batch_size]
            loss, grad = loss_and_grad(model, x[idx], y[idx])
            if not math.isfinite(loss) or not np.isfinite(grad).all():
                raise TrainingError(
                    f"non-finite loss/gradient at epoch {epoch}, batch starting {s}: "
                    f"loss={loss}, |w|max={float(np.abs(w).max()):.3g}"
                )
            w -= np.float32(cfg.lr) * grad
            total += loss * len(idx)
        losses.append(total / len(y))
        if x_val is not None and len(y_val):
            val_acc.append(accuracy(model, x_val, y_val))
        log.info("epoch %d loss %.4f%s", epoch + 1, losses[-1],
                 f" val_acc {val_acc[-1]:.3f}" if val_acc else "")
        if progress:
            progress(epoch, losses[-1], val_acc[-1] if val_acc else None)

    model.meta = {
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "lr": cfg.lr,
        "batch_size": cfg.batch_size,
        "optimizer": "sgd",
        "n_train": int(len(y)),
        "initial_loss": initial,
        "losses": losses,
        "val_accuracy": val_acc,
    }
    return model


# --- gradient check ----------------------------------------------------------


def _check_indices(model: GestureModel, per_layer: int, rng) -> np.ndarray:
    picks, pos = [], 0
    for _, shape in model.arch["params"]:
        n = math.prod(shape)
        if n <= per_layer:
            picks.append(np.arange(pos, pos + n))
        else:
            picks.append(pos + np.sort(rng.choice(n, per_layer, replace=False)))
        pos += n
    return np.concatenate(picks)


def _pattern(cache):
    """ReLU signs and pool winners: the piece of the piecewise-smooth loss we are on."""
    _, _, z1, idx1, _, _, z2, idx2, _, _, z3, _ = cache
    return (z1 > 0, idx1, z2 > 0, idx2, z3 > 0)


def _loss_and_pattern(model, xb, y, w64):
    p = unpack(model.arch, w64)
    logits_, cache = _forward(p, xb)
    return _cross_entropy(logits_, y)[0], _pattern(cache)


def _same(pa, pb):
    return all(np.array_equal(a, b) for a, b in zip(pa, pb))


def grad_check(model: GestureModel, x, y, h: float = 1e-4, per_layer: int = 300,
               seed: int = 0, min_h: float = 1e-8, return_details: bool = False):
    """Max relative error between backprop and central differences, in float64.

    Up to ``per_layer`` weights are drawn from every parameter tensor (all of
    them when the tensor is smaller): 1,061 checked weights for the default
    architecture.

    ReLU and max-pool make the loss piecewise smooth.  When ``w +- h`` lands on
    a different piece (some ReLU sign or pool winner flips) the difference
    quotient straddles a kink and says nothing about the derivative, so the
    step is divided by 10 until both probes stay on the base piece.  Weights
    still straddling a kink at ``min_h`` are left out of the maximum and
    reported in the details.
    """
    rng = np.random.default_rng(seed)
    idx = _check_indices(model, per_layer, rng)
    xb = _as_batch(x, model.input_size, np.float64)
    yb = np.atleast_1d(np.asarray(y, dtype=np.int64))
    w64 = model.weights.astype(np.float64)
    _, base = _loss_and_pattern(model, xb, yb, w64)
    _, analytic = loss_and_grad(model, x, y, dtype=np.float64)
    analytic = analytic[idx]
    numeric = np.empty(len(idx))
    steps = np.empty(len(idx))
    smooth = np.ones(len(idx), dtype=bool)
    for k, i in enumerate(idx):
        orig = w64[i]
        step = h
        while True:
            w64[i] = orig + step
            up, pu = _loss_and_pattern(model, xb, yb, w64)
            w64[i] = orig - step
            down, pd = _loss_and_pattern(model, xb, yb, w64)
            w64[i] = orig
            if (_same(pu, base) and _same(pd, base)) or step / 10 < min_h:
                break
            step /= 10
        numeric[k] = (up - down) / (2 * step)
        steps[k] = step
        smooth[k] = _same(pu, base) and _same(pd, base)
    rel = relative_error(analytic, numeric)
    worst = float(rel[smooth].max()) if smooth.any() else float("nan")
    if return_details:
        return worst, {"indices": idx, "analytic": analytic, "numeric": numeric,
                       "steps": steps, "smooth": smooth, "relative_error": rel}
    return worst


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> np.ndarray:
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero pairs from dividing by ~0."""
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


# --- checkpoints -----------------------------------------------------------


def save_model(model: GestureModel, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(model_bytes(model))


def model_bytes(model: GestureModel) -> bytes:
    desc = json.dumps({"arch": model.arch, "meta": model.meta}, sort_keys=True).encode("utf-8")
    body = b"".join([
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<I", len(desc)),
        desc,
        struct.pack("<Q", model.weights.size),
        model.weights.astype("<f4").tobytes(),
    ])
    return body + struct.pack("<I", zlib.crc32(body))


def load_model(path) -> GestureModel:
    with open(os.fspath(path), "rb") as fh:
        return model_from_bytes(fh.read())


def model_from_bytes(data: bytes) -> GestureModel:
    if data[:4] != MAGIC:
        raise ModelError(f"bad checkpoint magic {data[:4]!r}")
    if len(data) < 4 + 4 + 4 + 8 + 4:
        raise ModelError("checkpoint truncated")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != FORMAT_VERSION:
        raise ModelError(f"unsupported checkpoint version {version}")
    (stored_crc,) = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise ModelError("checkpoint CRC mismatch")
    (dlen,) = struct.unpack_from("<I", data, 8)
    pos = 12
    try:
        desc = json.loads(data[pos:pos + dlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelError(f"checkpoint descriptor unreadable: {exc}") from exc
    pos += dlen
    (count,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    arch = desc["arch"]
    expected = param_count(arch)
    if count != expected:
        raise ModelError(f"checkpoint declares {count} weights, architecture needs {expected}")
    if len(data) - 4 - pos != 4 * count:
        raise ModelError("checkpoint weight payload has the wrong length")
    weights = np.frombuffer(data, dtype="<f4", count=count, offset=pos).astype(np.float32)
    if not np.isfinite(weights).all():
        raise ModelError("checkpoint contains non-finite weights")
    return GestureModel(arch, weights, desc.get("meta", {}))
