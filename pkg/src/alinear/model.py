"""Forecaster parameters, forward pass, and exact analytic backward pass.

The model splits the input window into trend and seasonal components with a
horizon-adaptive moving average, projects each component to the horizon with
its own affine map, attenuates the seasonal prediction exponentially along
the horizon, and blends the two streams with a sigmoid gate that depends on
the horizon length. Everything is differentiable, including the moving
average width, so training needs no numerical differentiation.

Ablation modes:
  full        complete model
  no_kernel   decomposition width frozen at ``fixed_alpha``; width
              coefficients are dropped from the learnable set
  no_decomp   decomposition bypassed: a single affine map of the raw input,
              no decay, no gate (the width coefficients stay in the
              parameter set but receive zero gradient)
  no_adaptive decay disabled and the gate replaced by the plain sum of the
              two streams; gate coefficients dropped
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decomposition import DecompOutput, DecompParams, decompose, window_width
from .errors import DivergenceError

MODES = ("full", "no_kernel", "no_decomp", "no_adaptive")

# Learnable slots per ablation mode, in update order.
_LEARNABLE = {
    "full": (
        "kernel_base", "kernel_slope",
        "trend_weight", "trend_bias", "seasonal_weight", "seasonal_bias",
        "mix_base", "mix_slope",
    ),
    "no_kernel": (
        "trend_weight", "trend_bias", "seasonal_weight", "seasonal_bias",
        "mix_base", "mix_slope",
    ),
    "no_decomp": ("kernel_base", "kernel_slope", "trend_weight", "trend_bias"),
    "no_adaptive": (
        "kernel_base", "kernel_slope",
        "trend_weight", "trend_bias", "seasonal_weight", "seasonal_bias",
    ),
}


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@dataclass
class ModelParams:
    """All tensors of the forecaster plus its fixed hyperparameters.

    trend_weight/seasonal_weight are (H, T); biases are (H,). mix_base and
    mix_slope set the trend gate sigmoid(mix_base + mix_slope * H). delta is
    the fixed seasonal-decay strength (decay rate is delta / H).
    """

    input_len: int
    horizon: int
    delta: float
    decomp: DecompParams
    trend_weight: np.ndarray
    trend_bias: np.ndarray
    seasonal_weight: np.ndarray | None
    seasonal_bias: np.ndarray | None
    mix_base: float
    mix_slope: float
    mode: str = "full"
    fixed_alpha: float = 25.0  # decomposition width used by no_kernel

    def learnable_fields(self) -> tuple[str, ...]:
        return _LEARNABLE[self.mode]

    def get(self, name: str):
        if name == "kernel_base":
            return self.decomp.kernel_base
        if name == "kernel_slope":
            return self.decomp.kernel_slope
        return getattr(self, name)

    def set(self, name: str, value) -> None:
        if name == "kernel_base":
            self.decomp.kernel_base = value
        elif name == "kernel_slope":
            self.decomp.kernel_slope = value
        else:
            setattr(self, name, value)

    def copy(self) -> "ModelParams":
        out = replace(self, decomp=replace(self.decomp))
        for name in ("trend_weight", "trend_bias", "seasonal_weight", "seasonal_bias"):
            arr = getattr(out, name)
            if arr is not None:
                setattr(out, name, arr.copy())
        return out

    def num_learnable(self) -> int:
        total = 0
        for name in self.learnable_fields():
            value = self.get(name)
            total += 1 if np.isscalar(value) else int(np.asarray(value).size)
        return total


@dataclass
class GradientSet:
    """Per-parameter gradients; slots mirror the learnable fields of the mode."""

    kernel_base: float | None = None
    kernel_slope: float | None = None
    trend_weight: np.ndarray | None = None
    trend_bias: np.ndarray | None = None
    seasonal_weight: np.ndarray | None = None
    seasonal_bias: np.ndarray | None = None
    mix_base: float | None = None
    mix_slope: float | None = None

    def get(self, name: str):
        return getattr(self, name)

    def all_finite(self) -> bool:
        for name in (
            "kernel_base", "kernel_slope", "trend_weight", "trend_bias",
            "seasonal_weight", "seasonal_bias", "mix_base", "mix_slope",
        ):
            value = getattr(self, name)
            if value is None:
                continue
            if not np.all(np.isfinite(value)):
                return False
        return True


@dataclass
class ForwardTrace:
    """Every intermediate of one forward pass, kept for the backward pass."""

    decomp: DecompOutput | None
    trend_pred: np.ndarray               # (H,)
    seasonal_pred: np.ndarray | None     # (H,)
    seasonal_decayed: np.ndarray | None  # (H,)
    beta_trend: float | None
    beta_seasonal: float | None
    decay_rate: float                    # delta / H (0 when decay disabled)
    output: np.ndarray                   # (H,)


def init_params(
    input_len: int,
    horizon: int,
    delta: float,
    seed: int = 0,
    mode: str = "full",
    kernel_init: float = 25.0,
    kernel_slope_init: float = 0.01,
    trend_factor_init: float = 0.0,
    mix_slope_init: float = 0.01,
    width_min: float = 3.0,
    width_max: float | None = None,
    fixed_alpha: float = 25.0,
    perturb: bool = False,
    perturb_scale: float = 0.01,
) -> ModelParams:
    """Build a fresh parameter set.

    Projection weights start at 1/T so the initial model predicts the mean
    of each component (a persistence-like prior), which keeps epoch-0
    behavior interpretable and seed-independent. ``perturb`` adds small
    seeded uniform noise to the weight matrices for init-sensitivity runs;
    the seed has no effect otherwise.
    """
    if input_len < 1 or horizon < 1:
        raise ValueError(f"input_len and horizon must be >= 1, got ({input_len}, {horizon})")
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {MODES}")
    if width_max is None:
        width_max = float(input_len)
    if width_max > input_len:
        raise ValueError(f"width_max {width_max} exceeds input length {input_len}")

    decomp = DecompParams(
        kernel_base=float(kernel_init),
        kernel_slope=float(kernel_slope_init),
        width_min=float(width_min),
        width_max=float(width_max),
    )
    shape = (horizon, input_len)
    trend_weight = np.full(shape, 1.0 / input_len)
    trend_bias = np.zeros(horizon)
    if mode == "no_decomp":
        seasonal_weight = None
        seasonal_bias = None
    else:
        seasonal_weight = np.full(shape, 1.0 / input_len)
        seasonal_bias = np.zeros(horizon)
    if perturb:
        rng = np.random.default_rng(seed)
        trend_weight += rng.uniform(-perturb_scale, perturb_scale, shape)
        if seasonal_weight is not None:
            seasonal_weight += rng.uniform(-perturb_scale, perturb_scale, shape)

    return ModelParams(
        input_len=input_len,
        horizon=horizon,
        delta=0.0 if mode == "no_adaptive" else float(delta),
        decomp=decomp,
        trend_weight=trend_weight,
        trend_bias=trend_bias,
        seasonal_weight=seasonal_weight,
        seasonal_bias=seasonal_bias,
        mix_base=float(trend_factor_init),
        mix_slope=float(mix_slope_init),
        mode=mode,
        fixed_alpha=float(fixed_alpha),
    )


def param_count(input_len: int, horizon: int) -> int:
    """Learnable scalars of the full model: 2*H*T + 2*H + 4."""
    if input_len < 1 or horizon < 1:
        raise ValueError(f"input_len and horizon must be >= 1, got ({input_len}, {horizon})")
    return 2 * horizon * input_len + 2 * horizon + 4


def project_components(
    decomp_out: DecompOutput, params: ModelParams
) -> tuple[np.ndarray, np.ndarray]:
    """Affine maps from each component to the horizon."""
    trend = decomp_out.trend
    if trend.shape != (params.input_len,):
        raise ValueError(f"component length {trend.shape} does not match input_len {params.input_len}")
    trend_pred = params.trend_weight @ trend + params.trend_bias
    seasonal_pred = params.seasonal_weight @ decomp_out.seasonal + params.seasonal_bias
    return trend_pred, seasonal_pred


def decay_seasonal(
    seasonal_pred: np.ndarray, delta: float, horizon: int
) -> tuple[np.ndarray, float]:
    """Exponential attenuation along the horizon: step t gets exp(-t*delta/H).

    Steps are 1-based so even the first forecast step is attenuated.
    """
    if delta < 0:
        raise ValueError(f"delta must be >= 0, got {delta}")
    rate = delta / horizon
    steps = np.arange(1, horizon + 1, dtype=np.float64)
    return seasonal_pred * np.exp(-rate * steps), rate


def recombine(
    trend_pred: np.ndarray,
    seasonal_decayed: np.ndarray,
    params: ModelParams,
    horizon: int,
) -> tuple[np.ndarray, float]:
    """Blend the two streams with the horizon-dependent trend gate."""
    beta_trend = sigmoid(params.mix_base + params.mix_slope * horizon)
    output = beta_trend * trend_pred + (1.0 - beta_trend) * seasonal_decayed
    return output, beta_trend


def forward(x: np.ndarray, params: ModelParams) -> ForwardTrace:
    """One prediction for a length-T input window; keeps all intermediates."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.input_len,):
        raise ValueError(f"expected input of shape ({params.input_len},), got {x.shape}")
    H = params.horizon

    if params.mode == "no_decomp":
        output = params.trend_weight @ x + params.trend_bias
        return ForwardTrace(
            decomp=None, trend_pred=output, seasonal_pred=None,
            seasonal_decayed=None, beta_trend=None, beta_seasonal=None,
            decay_rate=0.0, output=output,
        )

    if params.mode == "no_kernel":
        fixed = min(max(params.fixed_alpha, params.decomp.width_min), params.decomp.width_max)
        frozen = replace(params.decomp, kernel_base=fixed, kernel_slope=0.0)
        decomp_out = decompose(x, frozen, H)
    else:
        decomp_out = decompose(x, params.decomp, H)

    trend_pred, seasonal_pred = project_components(decomp_out, params)

    if params.mode == "no_adaptive":
        output = trend_pred + seasonal_pred
        return ForwardTrace(
            decomp=decomp_out, trend_pred=trend_pred, seasonal_pred=seasonal_pred,
            seasonal_decayed=seasonal_pred, beta_trend=None, beta_seasonal=None,
            decay_rate=0.0, output=output,
        )

    seasonal_decayed, rate = decay_seasonal(seasonal_pred, params.delta, H)
    output, beta_trend = recombine(trend_pred, seasonal_decayed, params, H)
    return ForwardTrace(
        decomp=decomp_out, trend_pred=trend_pred, seasonal_pred=seasonal_pred,
        seasonal_decayed=seasonal_decayed, beta_trend=beta_trend,
        beta_seasonal=1.0 - beta_trend, decay_rate=rate, output=output,
    )


def backward(
    trace: ForwardTrace,
    x: np.ndarray,
    target: np.ndarray,
    params: ModelParams,
) -> tuple[float, GradientSet]:
    """Mean-squared-error loss and exact gradients for one window.

    Chains through the gate (logistic derivative), the decay (fixed
    elementwise multiplier), the projections (outer products), and the
    decomposition (width sensitivity of the trend; the seasonal sensitivity
    is its negative because seasonal = x - trend).
    """
    x = np.asarray(x, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    H = params.horizon
    if target.shape != (H,):
        raise ValueError(f"expected target of shape ({H},), got {target.shape}")

    residual = trace.output - target
    loss = float(residual @ residual) / H
    g_out = (2.0 / H) * residual

    grads = GradientSet()

    if params.mode == "no_decomp":
        grads.trend_weight = np.outer(g_out, x)
        grads.trend_bias = g_out
        grads.kernel_base = 0.0
        grads.kernel_slope = 0.0
        _check_finite(loss, grads)
        return loss, grads

    decomp_out = trace.decomp
    if params.mode == "no_adaptive":
        g_trend_pred = g_out
        g_seasonal_pred = g_out
    else:
        beta = trace.beta_trend
        g_beta = float(g_out @ (trace.trend_pred - trace.seasonal_decayed))
        logistic_slope = beta * (1.0 - beta)
        grads.mix_base = g_beta * logistic_slope
        grads.mix_slope = g_beta * logistic_slope * H
        g_trend_pred = beta * g_out
        g_seasonal_decayed = (1.0 - beta) * g_out
        steps = np.arange(1, H + 1, dtype=np.float64)
        g_seasonal_pred = g_seasonal_decayed * np.exp(-trace.decay_rate * steps)

    grads.trend_weight = np.outer(g_trend_pred, decomp_out.trend)
    grads.trend_bias = g_trend_pred
    grads.seasonal_weight = np.outer(g_seasonal_pred, decomp_out.seasonal)
    grads.seasonal_bias = g_seasonal_pred

    if params.mode != "no_kernel":
        g_component = (
            params.trend_weight.T @ g_trend_pred
            - params.seasonal_weight.T @ g_seasonal_pred
        )
        g_alpha = float(g_component @ decomp_out.d_trend_d_alpha)
        _, d_base, d_slope = window_width(params.decomp, H)
        grads.kernel_base = g_alpha * d_base
        grads.kernel_slope = g_alpha * d_slope

    _check_finite(loss, grads)
    return loss, grads


def _check_finite(loss: float, grads: GradientSet) -> None:
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss {loss!r}")
    if not grads.all_finite():
        raise DivergenceError("non-finite gradient encountered")


def predict(x: np.ndarray, params: ModelParams) -> np.ndarray:
    """Forward pass returning only the forecast vector."""
    return forward(x, params).output
