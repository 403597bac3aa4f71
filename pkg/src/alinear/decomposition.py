"""Trend/seasonal split with a horizon-adaptive, differentiable window width.

The trend is a symmetric box moving average whose width is a real number
rather than an integer: the outermost taps are weighted by the fractional
part of the half-width, so the smoothed output varies continuously (and
piecewise-differentiably) with the width. At odd integer widths the kernel
reduces to the plain centered box average. The seasonal component is the
subtraction residual, which keeps the split exactly additive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


@dataclass
class DecompParams:
    """Learnable window-width coefficients plus fixed clamping bounds.

    Effective width for horizon H is clamp(kernel_base + kernel_slope * H,
    width_min, width_max).
    """

    kernel_base: float          # additive width coefficient
    kernel_slope: float         # per-horizon-step width coefficient
    width_min: float = 3.0      # >= 1
    width_max: float = 96.0     # <= input length

    def __post_init__(self):
        if self.width_min < 1.0:
            raise ValueError(f"width_min must be >= 1, got {self.width_min}")
        if self.width_min > self.width_max:
            raise ValueError(
                f"width_min {self.width_min} exceeds width_max {self.width_max}"
            )


@dataclass
class DecompOutput:
    trend: np.ndarray             # (T,)
    seasonal: np.ndarray          # (T,), input - trend
    alpha: float                  # width actually used, in [width_min, width_max]
    d_trend_d_alpha: np.ndarray   # (T,), sensitivity of trend to the width


def window_width(params: DecompParams, horizon: int) -> tuple[float, float, float]:
    """Width of the smoothing window for a given horizon, with derivatives.

    Returns (alpha, d_alpha_d_base, d_alpha_d_slope). Derivatives are
    (1, H) inside the clamp bounds and (0, 0) once either bound is active,
    so the coefficients stall at the bound instead of oscillating.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    raw = params.kernel_base + params.kernel_slope * horizon
    if raw < params.width_min:
        return params.width_min, 0.0, 0.0
    if raw > params.width_max:
        return params.width_max, 0.0, 0.0
    return raw, 1.0, float(horizon)


def _fractional_kernel(alpha: float) -> np.ndarray:
    """Normalized box kernel of continuous width alpha.

    Half-width h = (alpha - 1) / 2. Offsets |j| <= floor(h) get weight 1 and
    the taps at |j| = floor(h) + 1 get the fractional part of h, so the
    weights sum to alpha before normalization. The kernel always spans the
    edge taps (possibly zero-weighted) so its length is 2 * (floor(h) + 1) + 1.
    """
    half = (alpha - 1.0) / 2.0
    inner = int(math.floor(half))
    frac = half - inner
    kernel = np.ones(2 * inner + 3)
    kernel[0] = frac
    kernel[-1] = frac
    return kernel / alpha


def fractional_moving_average(
    x: np.ndarray, alpha: float
) -> tuple[np.ndarray, np.ndarray]:
    """Centered box average of continuous width alpha with replicate padding.

    Returns (trend, d_trend_d_alpha). The derivative follows from the
    piecewise-linear weight rule: growing alpha trades mass from the body of
    the window to the two edge taps, giving

        d trend / d alpha = ((x_left + x_right) / 2 - trend) / alpha

    with x_left/x_right the replicate-padded samples at offsets
    -(floor(h)+1) and +(floor(h)+1). At integer half-widths this is the
    right-sided derivative (the weight rule has a kink there).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 1:
        raise ValueError("x must be a non-empty 1-D array")
    if alpha < 1.0:
        raise ValueError(f"alpha must be >= 1, got {alpha}")

    half = (alpha - 1.0) / 2.0
    edge = int(math.floor(half)) + 1
    padded = np.pad(x, edge, mode="edge")
    kernel = _fractional_kernel(alpha)
    trend = sliding_window_view(padded, kernel.size) @ kernel

    left = padded[: x.size]
    right = padded[2 * edge :]
    d_trend = ((left + right) / 2.0 - trend) / alpha
    return trend, d_trend


def decompose(x: np.ndarray, params: DecompParams, horizon: int) -> DecompOutput:
    """Split x into trend and seasonal parts using the horizon-adaptive width.

    The seasonal component is defined as the subtraction residual
    x - trend, so the two parts are additive by construction.
    """
    alpha, _, _ = window_width(params, horizon)
    trend, d_trend = fractional_moving_average(x, alpha)
    seasonal = x - trend
    return DecompOutput(trend=trend, seasonal=seasonal, alpha=alpha, d_trend_d_alpha=d_trend)
