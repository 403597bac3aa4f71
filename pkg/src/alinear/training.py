"""Mini-batch Adam training loop with cosine-annealed learning rate and
early stopping on validation loss.

Everything is deterministic for a fixed seed: shuffling uses a seeded
generator, batch gradients are accumulated in window order, and the
returned parameters are a snapshot from the best validation epoch.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .data import ForecastWindow
from .errors import DivergenceError
from .model import GradientSet, ModelParams, backward, forward

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


@dataclass
class TrainConfig:
    lr0: float = 1e-4
    batch_size: int = 32
    max_epochs: int = 10
    patience: int = 3
    seed: int = 0
    shuffle: bool = True
    grad_clip: float | None = None  # max gradient norm; off by default

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError(f"lr0 must be > 0, got {self.lr0}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.patience < 0:
            raise ValueError(f"patience must be >= 0, got {self.patience}")


@dataclass
class AdamState:
    """First/second moment accumulators keyed by learnable field name."""

    first: dict[str, np.ndarray | float]
    second: dict[str, np.ndarray | float]
    step: int = 0
    beta1: float = ADAM_BETA1
    beta2: float = ADAM_BETA2
    eps: float = ADAM_EPS

    @classmethod
    def for_params(cls, params: ModelParams) -> "AdamState":
        first: dict = {}
        second: dict = {}
        for name in params.learnable_fields():
            value = params.get(name)
            if np.isscalar(value):
                first[name] = 0.0
                second[name] = 0.0
            else:
                first[name] = np.zeros_like(value)
                second[name] = np.zeros_like(value)
        return cls(first=first, second=second)


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    learning_rate: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    best_epoch: int = -1
    stop_reason: str = ""

    @property
    def best_val_loss(self) -> float:
        return self.val_loss[self.best_epoch]

    def to_dict(self) -> dict:
        return {
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "learning_rate": self.learning_rate,
            "epoch_seconds": self.epoch_seconds,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val_loss,
            "stop_reason": self.stop_reason,
        }


def cosine_lr(epoch: int, max_epochs: int, lr0: float) -> float:
    """Cosine annealing from lr0 at epoch 0 toward 0 at max_epochs."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / max_epochs))


def adam_step(
    params: ModelParams, grads: GradientSet, state: AdamState, lr: float
) -> None:
    """One bias-corrected Adam update, in place."""
    state.step += 1
    correction1 = 1.0 - state.beta1 ** state.step
    correction2 = 1.0 - state.beta2 ** state.step
    for name in params.learnable_fields():
        grad = grads.get(name)
        if grad is None:
            raise ValueError(f"missing gradient for learnable field {name!r}")
        value = params.get(name)
        m = state.first[name] = state.beta1 * state.first[name] + (1 - state.beta1) * grad
        v = state.second[name] = state.beta2 * state.second[name] + (1 - state.beta2) * np.square(grad)
        m_hat = m / correction1
        v_hat = v / correction2
        update = lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_value = value - update
        if not np.all(np.isfinite(new_value)):
            raise DivergenceError(f"non-finite update for parameter {name!r}")
        params.set(name, new_value)


def batch_gradients(
    params: ModelParams, windows: list[ForecastWindow]
) -> tuple[float, GradientSet]:
    """Mean loss and mean gradients over a batch, accumulated in order."""
    names = params.learnable_fields()
    total: GradientSet | None = None
    loss_sum = 0.0
    for window in windows:
        trace = forward(window.input, params)
        loss, grads = backward(trace, window.input, window.target, params)
        loss_sum += loss
        if total is None:
            total = grads  # the first window's gradients own their arrays
        else:
            for name in names:
                current = getattr(total, name)
                if isinstance(current, np.ndarray):
                    current += grads.get(name)
                else:
                    setattr(total, name, current + grads.get(name))
    scale = 1.0 / len(windows)
    for name in names:
        current = getattr(total, name)
        if isinstance(current, np.ndarray):
            current *= scale
        else:
            setattr(total, name, current * scale)
    return loss_sum * scale, total


def _clip(grads: GradientSet, params: ModelParams, max_norm: float) -> None:
    total = 0.0
    for name in params.learnable_fields():
        g = np.asarray(grads.get(name))
        total += float(np.sum(g * g))
    norm = math.sqrt(total)
    if norm > max_norm:
        factor = max_norm / norm
        for name in params.learnable_fields():
            setattr(grads, name, grads.get(name) * factor)


def evaluate_mse(params: ModelParams, windows: list[ForecastWindow]) -> float:
    """Mean squared error over all windows and horizon steps."""
    if not windows:
        raise ValueError("no windows to evaluate")
    total = 0.0
    for window in windows:
        diff = forward(window.input, params).output - window.target
        total += float(diff @ diff)
    return total / (len(windows) * params.horizon)


def train(
    params: ModelParams,
    train_windows: list[ForecastWindow],
    val_windows: list[ForecastWindow],
    cfg: TrainConfig,
) -> tuple[ModelParams, TrainLog]:
    """Optimize in place over mini-batches; return the best-epoch snapshot.

    Stops at max_epochs or once validation MSE has failed to improve for
    ``patience`` consecutive epochs (at least one non-improving epoch is
    always required, so patience=0 stops at the first one).
    """
    if not train_windows:
        raise ValueError("no training windows")
    if not val_windows:
        raise ValueError("no validation windows")

    rng = np.random.default_rng(cfg.seed)
    state = AdamState.for_params(params)
    log = TrainLog()
    best_params = params.copy()
    best_val = math.inf
    bad_epochs = 0
    stop_after = max(1, cfg.patience)

    n = len(train_windows)
    for epoch in range(cfg.max_epochs):
        started = time.perf_counter()
        lr = cosine_lr(epoch, cfg.max_epochs, cfg.lr0)
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        loss_sum = 0.0
        for begin in range(0, n, cfg.batch_size):
            batch = [train_windows[i] for i in order[begin : begin + cfg.batch_size]]
            loss, grads = batch_gradients(params, batch)
            if cfg.grad_clip is not None:
                _clip(grads, params, cfg.grad_clip)
            adam_step(params, grads, state, lr)
            loss_sum += loss * len(batch)
        val = evaluate_mse(params, val_windows)
        if not math.isfinite(val):
            raise DivergenceError(f"non-finite validation loss at epoch {epoch}")

        log.train_loss.append(loss_sum / n)
        log.val_loss.append(val)
        log.learning_rate.append(lr)
        log.epoch_seconds.append(time.perf_counter() - started)

        if val < best_val:
            best_val = val
            best_params = params.copy()
            log.best_epoch = epoch
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= stop_after:
                log.stop_reason = "early_stop"
                break
    if not log.stop_reason:
        log.stop_reason = "max_epochs"
    return best_params, log
