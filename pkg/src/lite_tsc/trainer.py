"""Adam with reduce-on-plateau scheduling and best-epoch checkpointing."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .architectures import ModelState, backward, forward

log = logging.getLogger(__name__)

IMPROVEMENT_EPS = 1e-8


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1500
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    plateau_factor: float = 0.5
    plateau_patience: int = 50
    min_learning_rate: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.plateau_patience < 1:
            raise ValueError("plateau_patience must be >= 1")
        if not 0 < self.plateau_factor < 1:
            raise ValueError("plateau_factor must lie in (0, 1)")
        if self.min_learning_rate > self.learning_rate:
            raise ValueError("min_learning_rate must not exceed learning_rate")
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")


@dataclass
class TrainHistory:
    loss: list = field(default_factory=list)
    accuracy: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    best_epoch: int = -1

    def to_csv(self) -> str:
        lines = ["epoch,loss,accuracy,lr"]
        for i, (l, a, lr) in enumerate(zip(self.loss, self.accuracy, self.learning_rate)):
            lines.append(f"{i},{l!r},{a!r},{lr!r}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, config: TrainConfig, frozen=()) -> None:
    """One bias-corrected Adam update, applied in place.

    Only names present in ``grads`` and absent from ``frozen`` are touched.
    ``state.t`` is incremented before the update, so the first call uses t=1.
    """
    state.t += 1
    t = state.t
    b1, b2 = config.beta1, config.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        if name in frozen:
            continue
        p = params[name]
        if g.shape != p.shape:
            raise T.ShapeError(f"gradient for {name} has shape {g.shape}, parameter has {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + config.epsilon)


# ---------------------------------------------------------------------------
# Plateau schedule
# ---------------------------------------------------------------------------


class PlateauScheduler:
    """Halve (by ``factor``) the learning rate after ``patience`` epochs without improvement."""

    def __init__(self, config: TrainConfig):
        self.config = config
        self.lr = config.learning_rate
        self.best = math.inf
        self.wait = 0

    def step(self, loss: float) -> float:
        if loss < self.best - IMPROVEMENT_EPS:
            self.best = loss
            self.wait = 0
        else:
            self.wait += 1
            if self.wait >= self.config.plateau_patience:
                self.lr = max(self.lr * self.config.plateau_factor, self.config.min_learning_rate)
                self.wait = 0
        return self.lr


def reduce_on_plateau(losses, config: TrainConfig) -> float:
    """Learning rate to use after the epochs whose monitored losses are ``losses``."""
    sched = PlateauScheduler(config)
    for loss in losses:
        sched.step(loss)
    return sched.lr


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def evaluate(model: ModelState, series: np.ndarray, labels: np.ndarray, batch_size: int = 256):
    """Inference-mode (running statistics) mean loss and accuracy."""
    total, correct = 0.0, 0
    n = series.shape[0]
    for i in range(0, n, batch_size):
        probs, _ = forward(model, series[i : i + batch_size])
        y = labels[i : i + batch_size]
        clipped = np.clip(probs[np.arange(len(y)), y], 1e-9, 1.0)
        total += float(-np.log(clipped.astype(np.float64)).sum())
        correct += int((probs.argmax(axis=1) == y).sum())
    return total / n, correct / n


EpochCallback = Callable[[int, ModelState, TrainHistory], Optional[bool]]


def train(model: ModelState, dataset, config: TrainConfig, callback: Optional[EpochCallback] = None):
    """Train ``model`` in place and return ``(best_model, history)``.

    Each epoch shuffles with an RNG seeded from ``config.seed`` and keeps the
    final partial batch. At the end of every epoch the whole training set is
    re-evaluated in inference mode; that loss is what the plateau schedule and
    the best-epoch selection monitor, so re-evaluating the returned checkpoint
    reproduces the recorded best loss. ``callback`` may return True to stop.
    """
    x = np.asarray(dataset.series, dtype=np.float32)
    y = np.asarray(dataset.labels)
    n = x.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty dataset")
    targets = T.one_hot(y, model.n_classes)
    rng = np.random.default_rng(config.seed)
    sched = PlateauScheduler(config)
    adam = AdamState()
    history = TrainHistory()
    best, best_loss = model.copy(), math.inf
    lr = config.learning_rate

    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for b, start in enumerate(range(0, n, config.batch_size)):
            idx = order[start : start + config.batch_size]
            probs, cache = forward(model, x[idx], training=True)
            loss = T.cross_entropy(probs, targets[idx])
            if not math.isfinite(loss):
                raise TrainingError(f"non-finite training loss at epoch {epoch}, batch {b}")
            grads = backward(model, cache, T.softmax_cross_entropy_backward(probs, targets[idx]))
            adam_step(model.params, grads, adam, lr, config)

        epoch_loss, epoch_acc = evaluate(model, x, y)
        if not math.isfinite(epoch_loss):
            raise TrainingError(f"non-finite training loss at epoch {epoch}, end-of-epoch evaluation")
        history.loss.append(epoch_loss)
        history.accuracy.append(epoch_acc)
        history.learning_rate.append(lr)
        if epoch_loss < best_loss - IMPROVEMENT_EPS:
            best_loss = epoch_loss
            best = model.copy()
            history.best_epoch = epoch
        lr = sched.step(epoch_loss)
        log.debug("epoch %d loss %.6f acc %.4f lr %.2e", epoch, epoch_loss, epoch_acc, lr)
        if callback is not None and callback(epoch, model, history):
            break
    return best, history
