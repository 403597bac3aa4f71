"""Forecast-quality metrics and parameter-efficiency scores."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import param_count as param_count  # re-export: count lives with the model

PNP_LOG_BASE = "e"  # natural logarithm; recorded in reports for transparency


def mse(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared difference over all elements."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    diff = pred - truth
    return float(np.mean(diff * diff))


def mae(pred: np.ndarray, truth: np.ndarray) -> float:
    """Mean absolute difference over all elements."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    return float(np.mean(np.abs(pred - truth)))


def pnp(metric: float, param_count: int) -> float:
    """Parameter-normalized performance: 100 / (metric * ln(param_count)).

    Higher is better; rewards low error achieved with few parameters.
    """
    if metric <= 0:
        raise ValueError(f"metric must be > 0, got {metric}")
    if param_count < 2:
        raise ValueError(f"param_count must be >= 2, got {param_count}")
    return 100.0 / (metric * math.log(param_count))


@dataclass
class SeedResult:
    seed: int
    mse: float
    mae: float
    best_val_loss: float | None = None

    def to_dict(self) -> dict:
        out = {"seed": self.seed, "mse": self.mse, "mae": self.mae}
        if self.best_val_loss is not None:
            out["best_val_loss"] = self.best_val_loss
        return out


@dataclass
class EvalReport:
    """Aggregated evaluation of one (dataset, horizon, ablation) cell."""

    dataset: str
    horizon: int
    input_len: int
    ablation: str
    mse: float
    mae: float
    n_windows: int
    param_count: int
    pnp_mse: float
    pnp_mae: float
    per_seed: list[SeedResult] = field(default_factory=list)
    beta_trend_learned: float | None = None
    beta_seasonal_learned: float | None = None
    alpha_learned: float | None = None
    delta: float | None = None

    def to_dict(self) -> dict:
        return {
            "dataset": self.dataset,
            "horizon": self.horizon,
            "input_len": self.input_len,
            "ablation": self.ablation,
            "mse": self.mse,
            "mae": self.mae,
            "n_windows": self.n_windows,
            "param_count": self.param_count,
            "pnp_mse": self.pnp_mse,
            "pnp_mae": self.pnp_mae,
            "pnp_log_base": PNP_LOG_BASE,
            "per_seed": [s.to_dict() for s in self.per_seed],
            "beta_trend_learned": self.beta_trend_learned,
            "beta_seasonal_learned": self.beta_seasonal_learned,
            "alpha_learned": self.alpha_learned,
            "delta": self.delta,
        }
