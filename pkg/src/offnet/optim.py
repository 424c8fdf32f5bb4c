"""Losses, L2 penalty, AMSGrad/Adam, the training loop and checkpoint files."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .core import RngStream
from .data_eval import macro_f1
from .layers import EVAL, TRAIN
from .models import Model, ModelSpec, build_model, decide

log = logging.getLogger(__name__)

EPS = 1e-12


class NumericError(ArithmeticError):
    """Training produced a non-finite loss or parameter."""


# ---------------------------------------------------------------------------
# losses


def binary_cross_entropy(pred, gold):
    """Mean BCE over the batch and its gradient wrt ``pred``."""
    p = np.clip(np.asarray(pred, dtype=np.float64), EPS, 1.0 - EPS)
    y = np.asarray(gold, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"prediction shape {p.shape} != gold shape {y.shape}")
    n = p.size
    value = -np.sum(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)) / n
    grad = (-(y / p) + (1.0 - y) / (1.0 - p)) / n
    return float(value), grad


def categorical_cross_entropy(pred, gold):
    """Mean ``-ln p[gold]`` over rows of ``pred``; ``gold`` holds class indices."""
    p = np.asarray(pred, dtype=np.float64)
    if p.ndim == 1:
        p = p[None]
    y = np.atleast_1d(np.asarray(gold, dtype=np.int64))
    if len(y) != len(p):
        raise ValueError(f"{len(p)} predictions vs {len(y)} gold labels")
    rows = np.arange(len(y))
    picked = np.maximum(p[rows, y], EPS)
    grad = np.zeros_like(p)
    grad[rows, y] = -1.0 / picked / len(y)
    return float(-np.mean(np.log(picked))), grad.reshape(np.shape(pred))


def loss(kind, pred, gold):
    if kind == "binary_cross_entropy":
        return binary_cross_entropy(pred, gold)
    if kind == "categorical_cross_entropy":
        return categorical_cross_entropy(pred, gold)
    raise ValueError(f"unknown loss {kind!r}")


def loss_for_head(head):
    return "binary_cross_entropy" if head == "binary" else "categorical_cross_entropy"


def l2_penalty(kernels: dict, lam):
    """``lam * sum ||W||^2`` over ``kernels`` and the matching gradients ``2 lam W``."""
    if lam < 0:
        raise ValueError(f"L2 coefficient must be non-negative, got {lam}")
    value = float(sum(lam * np.sum(w * w) for w in kernels.values()))
    return value, {k: 2.0 * lam * w for k, w in kernels.items()}


# ---------------------------------------------------------------------------
# optimisers


class Amsgrad:
    """AMSGrad without bias correction.

    ``m <- b1 m + (1-b1) g``; ``v <- b2 v + (1-b2) g^2``;
    ``v_hat <- max(v_hat, v)``; ``theta <- theta - lr m / (sqrt(v_hat) + eps)``.
    Parameters are updated in place.
    """

    def __init__(self, lr=0.01, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.v_hat = {}

    def step(self, params: dict, grads: dict):
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if np.shape(g) != p.shape:
                raise ValueError(f"{name}: gradient shape {list(np.shape(g))} != parameter shape {list(p.shape)}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
                self.v_hat[name] = np.zeros_like(p)
            m, v, vh = self.m[name], self.v[name], self.v_hat[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            np.maximum(vh, v, out=vh)
            p -= self.lr * m / (np.sqrt(vh) + self.eps)


AmsgradState = Amsgrad


def amsgrad_step(state: Amsgrad, params: dict, grads: dict):
    state.step(params, grads)
    return params, state


class Adam:
    """Adam with the usual bias correction."""

    def __init__(self, lr=2e-5, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, p in params.items():
            g = grads.get(name)
            if g is None:
                continue
            if np.shape(g) != p.shape:
                raise ValueError(f"{name}: gradient shape {list(np.shape(g))} != parameter shape {list(p.shape)}")
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def make_optimizer(name, lr):
    if name == "amsgrad":
        return Amsgrad(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}; expected 'amsgrad' or 'adam'")


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 128
    lr: float = 0.01
    l2_lambda: float = 0.01
    patience: int = 3
    lr_reduction_factor: float = 0.5
    min_lr: float = 1e-5
    seed: int = 0
    optimizer: str = "amsgrad"

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.l2_lambda < 0:
            raise ValueError("l2_lambda must be non-negative")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if not 0 < self.lr_reduction_factor <= 1:
            raise ValueError("lr_reduction_factor must lie in (0, 1]")
        if self.optimizer not in ("amsgrad", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}; expected 'amsgrad' or 'adam'")


@dataclass
class EncodedSet:
    """Model-ready arrays: ``x`` ids ``[n, L]`` or vectors ``[n, L, D]``, mask, class indices."""

    x: np.ndarray
    mask: np.ndarray
    y: np.ndarray | None = None
    ids: list | None = None

    def __len__(self):
        return len(self.x)

    def subset(self, idx):
        return EncodedSet(self.x[idx], self.mask[idx], None if self.y is None else self.y[idx],
                          None if self.ids is None else [self.ids[i] for i in idx])


@dataclass
class TrainHistory:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    val_macro_f1: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def __len__(self):
        return len(self.train_loss)

    def append(self, train_loss, val_loss, val_f1, lr):
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_macro_f1.append(val_f1)
        self.lr.append(lr)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["epoch", "train_loss", "val_loss", "val_macro_f1", "lr"])
        for i in range(len(self)):
            w.writerow([i + 1, repr(self.train_loss[i]), repr(self.val_loss[i]),
                        repr(self.val_macro_f1[i]), repr(self.lr[i])])
        return buf.getvalue()


class EarlyStopping:
    """Validation-loss bookkeeping for checkpointing, lr reduction and stopping.

    Training stops once ``patience`` consecutive epochs fail to improve on
    the best loss. Every ``patience - 1`` non-improving epochs the learning
    rate is multiplied by ``factor`` (never below ``min_lr``).
    """

    def __init__(self, patience=3, factor=0.5, min_lr=1e-5):
        self.patience = patience
        self.factor = factor
        self.min_lr = min_lr
        self.best = math.inf
        self.best_epoch = 0
        self.wait = 0
        self.epoch = 0

    def update(self, val_loss, lr):
        """Record one epoch; returns ``(improved, stop, new_lr)``."""
        self.epoch += 1
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = self.epoch
            self.wait = 0
            return True, False, lr
        self.wait += 1
        if self.wait >= self.patience:
            return False, True, lr
        if self.patience > 1 and self.wait % (self.patience - 1) == 0:
            lr = max(lr * self.factor, self.min_lr)
        return False, False, lr


def iter_batches(n, batch_size, rng: RngStream | None = None):
    """Index arrays covering ``range(n)`` in ``ceil(n / batch_size)`` batches."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def _check_labels(model: Model, data: EncodedSet, what):
    if len(data) == 0:
        raise ValueError(f"{what} set is empty")
    if data.y is None:
        raise ValueError(f"{what} set has no labels")
    y = np.asarray(data.y)
    if y.min() < 0 or y.max() >= model.spec.n_classes:
        raise ValueError(
            f"{what} labels span [{y.min()}, {y.max()}] but the {model.spec.head} head has "
            f"{model.spec.n_classes} classes"
        )


def evaluate(model: Model, data: EncodedSet, batch_size=256):
    """Mean data loss and macro-F1 in eval mode."""
    kind = loss_for_head(model.spec.head)
    total = 0.0
    preds = []
    for idx in iter_batches(len(data), batch_size):
        probs = model.predict(data.x[idx], data.mask[idx])
        total += loss(kind, probs, data.y[idx])[0] * len(idx)
        preds.append(decide(probs))
    pred = np.concatenate(preds)
    return total / len(data), macro_f1(data.y, pred, model.spec.n_classes)


def train_step(model: Model, batch: EncodedSet, optimizer, l2_lambda, rng: RngStream):
    """One forward/backward/update; returns the batch objective."""
    probs, traces = model.forward(batch.x, batch.mask, TRAIN, rng)
    value, g = loss(loss_for_head(model.spec.head), probs, batch.y)
    grads = model.backward(traces, g)
    params = model.params()
    if l2_lambda > 0:
        penalty, pg = l2_penalty({k: params[k] for k in model.regularized()}, l2_lambda)
        value += penalty
        for k, v in pg.items():
            grads[k] = grads[k] + v
    if not math.isfinite(value):
        raise NumericError(f"non-finite training loss {value}")
    optimizer.step(params, grads)
    return value


def train(model: Model, train_set: EncodedSet, val_set: EncodedSet, config: TrainConfig = None,
          *, checkpoint_path=None, checkpoint_meta=None, callback=None):
    """Mini-batch training with early stopping on validation loss.

    Shuffles each epoch under ``config.seed``, keeps the weights of the
    epoch with the lowest validation loss (also written to
    ``checkpoint_path`` whenever it improves) and restores them before
    returning. ``callback(epoch, model, history)`` runs after every epoch;
    a truthy return ends training.

    Returns ``(model, history)``; the model is updated in place.
    """
    config = config or TrainConfig()
    _check_labels(model, train_set, "training")
    _check_labels(model, val_set, "validation")
    shuffle_rng = RngStream(config.seed, 1)
    layer_rng = RngStream(config.seed, 2)
    lr = config.lr
    opt = make_optimizer(config.optimizer, lr)
    stopper = EarlyStopping(config.patience, config.lr_reduction_factor, config.min_lr)
    history = TrainHistory()
    best = model.get_weights()

    for epoch in range(1, config.epochs + 1):
        opt.lr = lr
        total = 0.0
        for idx in iter_batches(len(train_set), config.batch_size, shuffle_rng):
            total += train_step(model, train_set.subset(idx), opt, config.l2_lambda, layer_rng) * len(idx)
        val_loss, val_f1 = evaluate(model, val_set)
        if not math.isfinite(val_loss):
            raise NumericError(f"non-finite validation loss at epoch {epoch}")
        history.append(total / len(train_set), val_loss, val_f1, lr)
        improved, stop, lr = stopper.update(val_loss, lr)
        log.info("epoch %d train_loss=%.5f val_loss=%.5f val_f1=%.4f lr=%g",
                 epoch, history.train_loss[-1], val_loss, val_f1, history.lr[-1])
        if improved:
            best = model.get_weights()
            history.best_epoch = epoch
            if checkpoint_path is not None:
                save_checkpoint(model, checkpoint_path, checkpoint_meta)
        if callback is not None and callback(epoch, model, history):
            break
        if stop:
            history.stopped_early = True
            break
    model.set_weights(best)
    return model, history


# ---------------------------------------------------------------------------
# checkpoints
#
# Layout (all integers little-endian):
#   8 bytes   magic b"OFFNETCK"
#   4 bytes   uint32 format version (1)
#   8 bytes   uint64 header length H
#   H bytes   UTF-8 JSON header: {"spec", "digest", "params": [{"name", "shape",
#             "offset", "count"}], "meta"}; offsets are in bytes from the
#             start of the payload
#   payload   every parameter as little-endian float64, row-major, in header order
#   4 bytes   uint32 CRC-32 of everything before it

MAGIC = b"OFFNETCK"
VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(model: Model, path, meta=None):
    params = model.params()
    entries, chunks, offset = [], [], 0
    for name, p in params.items():
        data = np.ascontiguousarray(p, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(p.shape), "offset": offset, "count": int(p.size)})
        chunks.append(data)
        offset += len(data)
    header = json.dumps({
        "spec": model.spec.to_dict(),
        "digest": model.spec.digest(),
        "params": entries,
        "meta": meta or {},
    }, sort_keys=True).encode("utf-8")
    body = MAGIC + struct.pack("<IQ", VERSION, len(header)) + header + b"".join(chunks)
    blob = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        with open(tmp, "wb") as fh:
            fh.write(blob)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.remove(tmp)


def read_checkpoint_header(blob):
    if len(blob) < 20:
        raise CheckpointError(f"corrupt checkpoint: truncated at offset {len(blob)} (header needs 20 bytes)")
    if blob[:8] != MAGIC:
        raise CheckpointError("corrupt checkpoint: bad magic at offset 0")
    version, hlen = struct.unpack_from("<IQ", blob, 8)
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version} at offset 8")
    if len(blob) < 20 + hlen:
        raise CheckpointError(f"corrupt checkpoint: truncated at offset {len(blob)} inside the header "
                              f"(needs {20 + hlen} bytes)")
    try:
        header = json.loads(blob[20:20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint: unreadable header at offset 20 ({exc})") from None
    return header, 20 + hlen


def load_checkpoint(path, spec: ModelSpec | None = None):
    """Rebuild the model stored at ``path``; returns ``(model, meta)``.

    Passing ``spec`` asserts the file holds that architecture.
    """
    with open(path, "rb") as fh:
        blob = fh.read()
    header, start = read_checkpoint_header(blob)
    file_spec = ModelSpec.from_dict(header["spec"])
    if spec is not None and spec.digest() != header["digest"]:
        raise CheckpointError(
            f"spec mismatch: checkpoint digest {header['digest']} vs expected {spec.digest()}"
        )
    payload_len = sum(8 * e["count"] for e in header["params"])
    end = start + payload_len
    if len(blob) < end + 4:
        raise CheckpointError(f"corrupt checkpoint: truncated at offset {len(blob)} "
                              f"(expected {end + 4} bytes)")
    if len(blob) > end + 4:
        raise CheckpointError(f"corrupt checkpoint: {len(blob) - end - 4} trailing bytes at offset {end + 4}")
    (crc,) = struct.unpack_from("<I", blob, end)
    if crc != zlib.crc32(blob[:end]) & 0xFFFFFFFF:
        raise CheckpointError(f"corrupt checkpoint: checksum mismatch over bytes [0, {end})")
    model = build_model(file_spec, RngStream(0))
    weights = {}
    for e in header["params"]:
        off = start + e["offset"]
        weights[e["name"]] = np.frombuffer(blob, dtype="<f8", count=e["count"], offset=off).reshape(e["shape"])
    model.set_weights(weights)
    return model, header.get("meta", {})
