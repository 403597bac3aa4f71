"""Horizon-adaptive linear forecaster with analytic gradients.

The model splits each input window into trend and seasonal components with
a moving average whose width is a learnable function of the forecast
horizon, projects each component to the horizon with its own affine map,
exponentially attenuates the seasonal stream along the horizon, and blends
the two streams with a horizon-dependent sigmoid gate. Training is plain
mini-batch Adam over exact hand-derived gradients; no autodiff framework is
involved.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    ForecastWindow,
    RawSeries,
    SplitSpec,
    StandardizationStats,
    chronological_split,
    load_csv,
    make_windows,
    standardize,
)
from .decomposition import (
    DecompOutput,
    DecompParams,
    decompose,
    fractional_moving_average,
    window_width,
)
from .errors import AlinearError, ConfigError, DataError, DivergenceError
from .experiment import (
    DatasetSpec,
    ExperimentConfig,
    apply_ablation,
    component_balance,
    config_from_dict,
    config_to_dict,
    default_delta,
    evaluate_checkpoint,
    load_config,
    report_component_balance,
    run_experiment,
    run_sweep,
)
from .metrics import EvalReport, SeedResult, mae, mse, pnp
from .model import (
    ForwardTrace,
    GradientSet,
    ModelParams,
    backward,
    decay_seasonal,
    forward,
    init_params,
    param_count,
    predict,
    project_components,
    recombine,
)
from .training import AdamState, TrainConfig, TrainLog, adam_step, cosine_lr, evaluate_mse, train

__version__ = "0.1.0"
