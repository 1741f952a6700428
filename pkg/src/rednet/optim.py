"""Training objective, update rules and the minibatch loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError, ShapeError
from .tensor import check_same_shape

log = logging.getLogger(__name__)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Batch mean of per-sample squared Frobenius norms.

    The sum runs over every pixel of a sample and is divided by the batch
    size only, so the value scales with patch area.
    """
    check_same_shape(pred, target, "prediction and target")
    n = pred.shape[0]
    diff = pred - target
    d64 = diff.astype(np.float64, copy=False).ravel()
    loss = float(np.dot(d64, d64)) / n
    return loss, (diff * (2.0 / n)).astype(pred.dtype, copy=False)


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def _check_aligned(params, grads):
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        check_same_shape(p, g, "parameter and gradient")


def adam_step(params, grads, state: AdamState):
    """One bias-corrected Adam update, applied to ``params`` in place."""
    _check_aligned(params, grads)
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if m.shape != p.shape:
            raise ShapeError("Adam moment shape does not match its parameter")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


def sgd_step(params, grads, lr: float):
    if lr <= 0:
        raise ConfigError(f"lr must be > 0, got {lr}")
    _check_aligned(params, grads)
    for p, g in zip(params, grads):
        p -= lr * g
    return params


@dataclass
class TrainConfig:
    optimizer: str = "adam"
    lr: float = 1e-4
    iterations: int = 1000
    batch_size: int = 16
    seed: int = 0
    log_interval: int = 1
    init: str = "he"  # weight init used when a command builds a fresh net

    def __post_init__(self):
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.log_interval < 1:
            raise ConfigError(f"log_interval must be >= 1, got {self.log_interval}")
        if self.init not in ("he", "xavier", "zero"):
            raise ConfigError(f"init must be 'he', 'xavier' or 'zero', got {self.init!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown train keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from None


def train_loop(net, dataset, cfg: TrainConfig, progress=None):
    """Train ``net`` in place on ``dataset`` (anything with ``inputs`` and
    ``targets`` arrays shaped (N, C, p, p)).

    Minibatches are drawn without replacement within a batch from a
    generator seeded by ``cfg.seed``. Returns ``(net, trace)`` where trace
    is a list of ``(iteration, loss)`` pairs, 1-based.
    """
    inputs, targets = np.asarray(dataset.inputs), np.asarray(dataset.targets)
    if len(inputs) == 0:
        raise DataError("training set is empty")
    if inputs.shape != targets.shape:
        raise DataError(f"inputs {inputs.shape} and targets {targets.shape} differ")
    inputs = inputs.astype(net.dtype, copy=False)
    targets = targets.astype(net.dtype, copy=False)
    rng = np.random.default_rng(cfg.seed)
    params = net.parameters()
    state = AdamState(lr=cfg.lr)
    n = len(inputs)
    trace = []
    for it in range(1, cfg.iterations + 1):
        idx = np.sort(rng.choice(n, size=cfg.batch_size, replace=cfg.batch_size > n))
        x, y = inputs[idx], targets[idx]
        out, cache = net.forward_cached(x)
        loss, grad = mse_loss(out, y)
        grads = net.backward_cached(cache, grad)
        if cfg.optimizer == "adam":
            adam_step(params, grads, state)
        else:
            sgd_step(params, grads, cfg.lr)
        if it % cfg.log_interval == 0:
            trace.append((it, loss))
        if progress is not None:
            progress(it, loss)
        if not np.isfinite(loss):
            raise FloatingPointError(f"loss diverged at iteration {it}")
    return net, trace


def write_trace(trace, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["iteration", "loss"])
        for it, loss in trace:
            w.writerow([it, repr(float(loss))])
