"""End-to-end experiment orchestration.

A single JSON config drives everything: dataset location, window geometry,
horizon list, training hyperparameters, ablation mode, seeds, and optional
hyperparameter sweep grids. Each (horizon, seed) run is independent and
deterministic; artifacts land in their own subdirectory and a manifest with
content hashes is written at the output root so nothing is overwritten
silently.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np

from .checkpoint import load_checkpoint, save_checkpoint
from .data import (
    ForecastWindow,
    RawSeries,
    SplitSpec,
    chronological_split,
    load_csv,
    make_windows,
    standardize,
)
from .errors import AlinearError, ConfigError, DataError
from .metrics import EvalReport, SeedResult, mae, mse, pnp
from .model import MODES, ModelParams, init_params, predict, sigmoid
from .training import TrainConfig, TrainLog, train

SWEEPABLE = ("kernel_init", "delta", "trend_factor_init")


def default_delta(horizon: int) -> float:
    """Decay strength by task length: short 0.5, long 1.0, ultra-long 2.0."""
    if horizon <= 96:
        return 0.5
    if horizon <= 336:
        return 1.0
    return 2.0


@dataclass
class DatasetSpec:
    path: str
    name: str | None = None
    channels: list[str] | None = None  # None selects every value column

    def resolved_name(self) -> str:
        return self.name or Path(self.path).stem


@dataclass
class ExperimentConfig:
    dataset: DatasetSpec
    input_len: int = 96
    horizons: list[int] = field(default_factory=lambda: [96])
    split: SplitSpec = field(default_factory=SplitSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    delta: float | None = None  # None picks the per-horizon default
    ablation: str = "full"
    seeds: list[int] = field(default_factory=lambda: [0, 1, 2, 3, 4])
    sweep: dict[str, list[float]] | None = None
    output_dir: str = "results"
    stride: int = 1
    eval_stride: int = 1
    per_channel_params: bool = False
    kernel_init: float = 25.0
    kernel_slope_init: float = 0.01
    trend_factor_init: float = 0.0
    mix_slope_init: float = 0.01
    width_min: float = 3.0
    width_max: float | None = None
    fixed_alpha: float = 25.0
    perturb_init: bool = False
    threads: int | None = None

    def validate(self) -> None:
        if not self.horizons:
            raise ConfigError("horizons must be non-empty")
        for h in self.horizons:
            if not isinstance(h, int) or h < 1:
                raise ConfigError(f"horizons must be positive integers, got {h!r}")
        if self.input_len < 1:
            raise ConfigError(f"input_len must be >= 1, got {self.input_len}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if self.ablation not in MODES:
            raise ConfigError(f"unknown ablation mode {self.ablation!r}, expected one of {MODES}")
        if self.stride < 1 or self.eval_stride < 1:
            raise ConfigError("stride and eval_stride must be >= 1")
        if self.delta is not None and self.delta < 0:
            raise ConfigError(f"delta must be >= 0, got {self.delta}")
        if self.sweep is not None:
            if not self.sweep:
                raise ConfigError("sweep grid is empty")
            for key, values in self.sweep.items():
                if key not in SWEEPABLE:
                    raise ConfigError(f"unknown sweep key {key!r}, expected one of {SWEEPABLE}")
                if not values:
                    raise ConfigError(f"sweep grid for {key!r} is empty")

    def delta_for(self, horizon: int) -> float:
        return self.delta if self.delta is not None else default_delta(horizon)


def config_from_dict(raw: dict) -> ExperimentConfig:
    """Build and validate a config from parsed JSON."""
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")
    data = dict(raw)
    try:
        dataset_raw = data.pop("dataset")
    except KeyError:
        raise ConfigError("config is missing the 'dataset' section") from None
    if isinstance(dataset_raw, str):
        dataset = DatasetSpec(path=dataset_raw)
    elif isinstance(dataset_raw, dict):
        try:
            dataset = DatasetSpec(**dataset_raw)
        except TypeError as exc:
            raise ConfigError(f"bad dataset section: {exc}") from None
    else:
        raise ConfigError("'dataset' must be a path or an object")

    split_raw = data.pop("split", None)
    train_raw = data.pop("train", None)
    try:
        split = SplitSpec(**split_raw) if split_raw else SplitSpec()
    except (TypeError, DataError) as exc:
        raise ConfigError(f"bad split section: {exc}") from None
    try:
        train_cfg = TrainConfig(**train_raw) if train_raw else TrainConfig()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad train section: {exc}") from None

    try:
        cfg = ExperimentConfig(dataset=dataset, split=split, train=train_cfg, **data)
    except TypeError as exc:
        raise ConfigError(f"bad config field: {exc}") from None
    cfg.validate()
    return cfg


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out = {
        "dataset": {
            "path": cfg.dataset.path,
            "name": cfg.dataset.name,
            "channels": cfg.dataset.channels,
        },
        "input_len": cfg.input_len,
        "horizons": list(cfg.horizons),
        "split": {
            "train_fraction": cfg.split.train_fraction,
            "val_fraction": cfg.split.val_fraction,
            "test_fraction": cfg.split.test_fraction,
        },
        "train": {
            "lr0": cfg.train.lr0,
            "batch_size": cfg.train.batch_size,
            "max_epochs": cfg.train.max_epochs,
            "patience": cfg.train.patience,
            "seed": cfg.train.seed,
            "shuffle": cfg.train.shuffle,
            "grad_clip": cfg.train.grad_clip,
        },
        "delta": cfg.delta,
        "ablation": cfg.ablation,
        "seeds": list(cfg.seeds),
        "sweep": cfg.sweep,
        "output_dir": cfg.output_dir,
        "stride": cfg.stride,
        "eval_stride": cfg.eval_stride,
        "per_channel_params": cfg.per_channel_params,
        "kernel_init": cfg.kernel_init,
        "kernel_slope_init": cfg.kernel_slope_init,
        "trend_factor_init": cfg.trend_factor_init,
        "mix_slope_init": cfg.mix_slope_init,
        "width_min": cfg.width_min,
        "width_max": cfg.width_max,
        "fixed_alpha": cfg.fixed_alpha,
        "perturb_init": cfg.perturb_init,
        "threads": cfg.threads,
    }
    return out


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    return config_from_dict(raw)


def apply_ablation(mode: str, cfg: ExperimentConfig, horizon: int, seed: int) -> ModelParams:
    """Construct the model for one run under the requested ablation mode."""
    if mode not in MODES:
        raise ConfigError(f"unknown ablation mode {mode!r}")
    return init_params(
        input_len=cfg.input_len,
        horizon=horizon,
        delta=cfg.delta_for(horizon),
        seed=seed,
        mode=mode,
        kernel_init=cfg.kernel_init,
        kernel_slope_init=cfg.kernel_slope_init,
        trend_factor_init=cfg.trend_factor_init,
        mix_slope_init=cfg.mix_slope_init,
        width_min=cfg.width_min,
        width_max=cfg.width_max,
        fixed_alpha=cfg.fixed_alpha,
        perturb=cfg.perturb_init,
    )


def component_balance(params: ModelParams) -> tuple[float | None, float | None, float | None]:
    """(beta_trend, beta_seasonal, alpha) as learned by a trained model.

    The no_adaptive mode reports the fixed 0.5/0.5 marker of its unweighted
    sum; no_decomp has no decomposition so both entries are absent.
    """
    if params.mode == "no_decomp":
        return None, None, None
    if params.mode == "no_kernel":
        alpha = min(max(params.fixed_alpha, params.decomp.width_min), params.decomp.width_max)
    else:
        raw = params.decomp.kernel_base + params.decomp.kernel_slope * params.horizon
        alpha = min(max(raw, params.decomp.width_min), params.decomp.width_max)
    if params.mode == "no_adaptive":
        return 0.5, 0.5, alpha
    beta = sigmoid(params.mix_base + params.mix_slope * params.horizon)
    return beta, 1.0 - beta, alpha


@dataclass
class PreparedData:
    """Standardized series plus per-channel windows for one horizon."""

    train: dict[str, list[ForecastWindow]]
    val: dict[str, list[ForecastWindow]]
    test: dict[str, list[ForecastWindow]]

    def pooled(self, part: str) -> list[ForecastWindow]:
        groups = getattr(self, part)
        return [w for channel in groups for w in groups[channel]]


def load_dataset(cfg: ExperimentConfig) -> tuple[RawSeries, tuple[range, range, range]]:
    series = load_csv(cfg.dataset.path, name=cfg.dataset.resolved_name(),
                      channels=cfg.dataset.channels)
    ranges = chronological_split(series.length, cfg.split)
    standardized, _stats = standardize(series, ranges[0])
    return standardized, ranges


def prepare_windows(
    cfg: ExperimentConfig,
    series: RawSeries,
    ranges: tuple[range, range, range],
    horizon: int,
) -> PreparedData:
    span = cfg.input_len + horizon
    for label, segment in zip(("train", "val", "test"), ranges):
        if len(segment) < span:
            raise DataError(f"{label} segment too short for input_len + horizon = {span}: "
                            f"{len(segment)} samples")
    train_w = make_windows(series, ranges[0], cfg.input_len, horizon, cfg.stride)
    val_w = make_windows(series, ranges[1], cfg.input_len, horizon, cfg.eval_stride)
    test_w = make_windows(series, ranges[2], cfg.input_len, horizon, cfg.eval_stride)
    return PreparedData(train=train_w, val=val_w, test=test_w)


def _evaluate(params_by_channel: dict[str, ModelParams],
              test: dict[str, list[ForecastWindow]]) -> tuple[float, float, int]:
    """Pooled test MSE/MAE over every channel's windows, in channel order."""
    predictions = []
    targets = []
    for channel, windows in test.items():
        params = params_by_channel[channel]
        for window in windows:
            predictions.append(predict(window.input, params))
            targets.append(window.target)
    pred = np.concatenate(predictions)
    truth = np.concatenate(targets)
    return mse(pred, truth), mae(pred, truth), sum(len(w) for w in test.values())


@dataclass
class SeedRun:
    seed: int
    mse: float
    mae: float
    n_windows: int
    best_val_loss: float
    balance: tuple[float | None, float | None, float | None]
    checkpoint_paths: list[str]
    logs: dict[str, TrainLog]


def run_seed(
    cfg: ExperimentConfig,
    data: PreparedData,
    horizon: int,
    seed: int,
    out_dir: Path,
    force: bool = False,
) -> SeedRun:
    """Train and evaluate one (horizon, seed) cell and write its artifacts."""
    if (out_dir / "report.json").exists() and not force:
        raise ConfigError(f"refusing to overwrite {out_dir / 'report.json'}; pass force/--force")
    out_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = replace(cfg.train, seed=seed)

    params_by_channel: dict[str, ModelParams] = {}
    logs: dict[str, TrainLog] = {}
    checkpoints: list[str] = []
    if cfg.per_channel_params:
        for channel in data.train:
            params = apply_ablation(cfg.ablation, cfg, horizon, seed)
            best, log = train(params, data.train[channel], data.val[channel], train_cfg)
            params_by_channel[channel] = best
            logs[channel] = log
            path = out_dir / f"checkpoint_{channel}.bin"
            save_checkpoint(best, path)
            checkpoints.append(str(path))
        balance = _mean_balance([component_balance(p) for p in params_by_channel.values()])
    else:
        params = apply_ablation(cfg.ablation, cfg, horizon, seed)
        best, log = train(params, data.pooled("train"), data.pooled("val"), train_cfg)
        for channel in data.train:
            params_by_channel[channel] = best
        logs["shared"] = log
        path = out_dir / "checkpoint.bin"
        save_checkpoint(best, path)
        checkpoints.append(str(path))
        balance = component_balance(best)

    seed_mse, seed_mae, n_windows = _evaluate(params_by_channel, data.test)
    best_val = float(np.mean([log.best_val_loss for log in logs.values()]))

    _write_json(out_dir / "trainlog.json", {c: log.to_dict() for c, log in logs.items()})
    report = {
        "dataset": cfg.dataset.resolved_name(),
        "horizon": horizon,
        "input_len": cfg.input_len,
        "ablation": cfg.ablation,
        "seed": seed,
        "mse": seed_mse,
        "mae": seed_mae,
        "n_windows": n_windows,
        "best_val_loss": best_val,
        "beta_trend_learned": balance[0],
        "beta_seasonal_learned": balance[1],
        "alpha_learned": balance[2],
        "delta": cfg.delta_for(horizon),
    }
    _write_json(out_dir / "report.json", report)
    return SeedRun(seed=seed, mse=seed_mse, mae=seed_mae, n_windows=n_windows,
                   best_val_loss=best_val, balance=balance,
                   checkpoint_paths=checkpoints, logs=logs)


def _mean_balance(balances):
    def mean_or_none(items):
        values = [v for v in items if v is not None]
        return float(np.mean(values)) if values else None
    return tuple(mean_or_none([b[i] for b in balances]) for i in range(3))


def run_experiment(cfg: ExperimentConfig, force: bool = False) -> list[Path]:
    """Full protocol: for every horizon and seed, train and evaluate, then
    aggregate across seeds into one report per horizon.

    Returns the list of horizon-level report paths. Partial artifacts from a
    failed run are left on disk and the failure is re-raised with its
    (horizon, seed) context attached.
    """
    cfg.validate()
    series, ranges = load_dataset(cfg)
    root = Path(cfg.output_dir) / cfg.dataset.resolved_name()
    if cfg.ablation != "full":
        root = root / cfg.ablation
    reports: list[Path] = []
    try:
        for horizon in cfg.horizons:
            data = prepare_windows(cfg, series, ranges, horizon)
            horizon_dir = root / f"H{horizon}"
            report_path = horizon_dir / "report.json"
            if report_path.exists() and not force:
                raise ConfigError(f"refusing to overwrite {report_path}; pass force/--force")
            horizon_dir.mkdir(parents=True, exist_ok=True)

            runs: list[SeedRun] = []
            workers = resolve_threads(cfg.threads)
            if workers > 1 and len(cfg.seeds) > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    futures = {
                        seed: pool.submit(_run_seed_with_context, cfg, data, horizon,
                                          seed, horizon_dir / f"seed{seed}", force)
                        for seed in cfg.seeds
                    }
                    runs = [futures[seed].result() for seed in cfg.seeds]
            else:
                runs = [_run_seed_with_context(cfg, data, horizon, seed,
                                               horizon_dir / f"seed{seed}", force)
                        for seed in cfg.seeds]

            report = _aggregate(cfg, horizon, runs)
            _write_json(report_path, report.to_dict())
            reports.append(report_path)
        _write_results_csv(root, reports)
    finally:
        write_manifest(root)
    return reports


def _run_seed_with_context(cfg, data, horizon, seed, out_dir, force=False) -> SeedRun:
    try:
        return run_seed(cfg, data, horizon, seed, out_dir, force=force)
    except AlinearError as exc:
        raise type(exc)(f"[horizon={horizon} seed={seed}] {exc}") from exc


def _aggregate(cfg: ExperimentConfig, horizon: int, runs: list[SeedRun]) -> EvalReport:
    mean_mse = float(np.mean([r.mse for r in runs]))
    mean_mae = float(np.mean([r.mae for r in runs]))
    best_run = min(runs, key=lambda r: r.best_val_loss)
    sample = apply_ablation(cfg.ablation, cfg, horizon, runs[0].seed)
    count = sample.num_learnable()
    return EvalReport(
        dataset=cfg.dataset.resolved_name(),
        horizon=horizon,
        input_len=cfg.input_len,
        ablation=cfg.ablation,
        mse=mean_mse,
        mae=mean_mae,
        n_windows=runs[0].n_windows,
        param_count=count,
        pnp_mse=pnp(mean_mse, count) if mean_mse > 0 else float("inf"),
        pnp_mae=pnp(mean_mae, count) if mean_mae > 0 else float("inf"),
        per_seed=[SeedResult(r.seed, r.mse, r.mae, r.best_val_loss) for r in runs],
        beta_trend_learned=best_run.balance[0],
        beta_seasonal_learned=best_run.balance[1],
        alpha_learned=best_run.balance[2],
        delta=cfg.delta_for(horizon),
    )


def evaluate_checkpoint(cfg: ExperimentConfig, checkpoint_path: str | Path) -> dict:
    """Test-set metrics of a stored checkpoint under the config's dataset."""
    params = load_checkpoint(checkpoint_path)
    if params.input_len != cfg.input_len:
        raise ConfigError(f"checkpoint input_len {params.input_len} does not match "
                          f"config input_len {cfg.input_len}")
    series, ranges = load_dataset(cfg)
    data = prepare_windows(cfg, series, ranges, params.horizon)
    params_by_channel = {channel: params for channel in data.test}
    test_mse, test_mae, n_windows = _evaluate(params_by_channel, data.test)
    beta_t, beta_s, alpha = component_balance(params)
    count = params.num_learnable()
    return {
        "dataset": cfg.dataset.resolved_name(),
        "horizon": params.horizon,
        "input_len": params.input_len,
        "ablation": params.mode,
        "checkpoint": str(checkpoint_path),
        "mse": test_mse,
        "mae": test_mae,
        "n_windows": n_windows,
        "param_count": count,
        "pnp_mse": pnp(test_mse, count) if test_mse > 0 else float("inf"),
        "pnp_mae": pnp(test_mae, count) if test_mae > 0 else float("inf"),
        "beta_trend_learned": beta_t,
        "beta_seasonal_learned": beta_s,
        "alpha_learned": alpha,
        "delta": params.delta,
    }


def run_sweep(cfg: ExperimentConfig, force: bool = False) -> dict:
    """Cartesian product over the sweep grid; every combo is a full run.

    Writes one experiment per combo under output_dir/sweep/<combo>/ plus a
    summary with the metric spread (max - min, and relative to the mean)
    marginalized per swept hyperparameter.
    """
    cfg.validate()
    if not cfg.sweep:
        raise ConfigError("config has no sweep grid")
    keys = sorted(cfg.sweep)
    combos = list(product(*(cfg.sweep[k] for k in keys)))
    results = []
    base_out = Path(cfg.output_dir)
    for combo in combos:
        assignment = dict(zip(keys, combo))
        label = ",".join(f"{k}={v:g}" for k, v in assignment.items())
        sub = replace(cfg, sweep=None,
                      output_dir=str(base_out / "sweep" / label))
        for key, value in assignment.items():
            if key == "delta":
                sub.delta = float(value)
            elif key == "kernel_init":
                sub.kernel_init = float(value)
            elif key == "trend_factor_init":
                sub.trend_factor_init = float(value)
        report_paths = run_experiment(sub, force=force)
        for path in report_paths:
            payload = json.loads(path.read_text())
            results.append({"assignment": assignment, "label": label,
                            "horizon": payload["horizon"],
                            "mse": payload["mse"], "mae": payload["mae"]})

    summary = {"combos": results, "spread": {}}
    for key in keys:
        by_value: dict[float, list[float]] = {}
        for row in results:
            by_value.setdefault(row["assignment"][key], []).append(row["mse"])
        means = {v: float(np.mean(vals)) for v, vals in by_value.items()}
        values = list(means.values())
        spread = max(values) - min(values)
        summary["spread"][key] = {
            "mse_by_value": {f"{v:g}": m for v, m in sorted(means.items())},
            "spread": spread,
            "relative_spread": spread / float(np.mean(values)) if np.mean(values) > 0 else 0.0,
        }
    all_mse = [row["mse"] for row in results]
    overall = max(all_mse) - min(all_mse)
    summary["overall"] = {
        "spread": overall,
        "relative_spread": overall / float(np.mean(all_mse)) if np.mean(all_mse) > 0 else 0.0,
    }
    _write_json(base_out / "sweep" / "summary.json", summary)
    _write_sweep_csv(base_out / "sweep" / "results.csv", results)
    write_manifest(base_out / "sweep")
    return summary


def report_component_balance(run_dir: str | Path) -> list[dict]:
    """Learned gate weights and window width per horizon, from the best
    (lowest validation loss) seed's checkpoint under ``run_dir``.
    """
    run_dir = Path(run_dir)
    horizon_dirs = sorted(run_dir.glob("H*"),
                          key=lambda p: int(p.name[1:]) if p.name[1:].isdigit() else 0)
    if not horizon_dirs:
        raise DataError(f"no horizon directories (H<n>) under {run_dir}")
    rows = []
    for horizon_dir in horizon_dirs:
        seed_reports = sorted(horizon_dir.glob("seed*/report.json"))
        if not seed_reports:
            raise DataError(f"no seed reports under {horizon_dir}")
        best_path = min(
            seed_reports,
            key=lambda p: json.loads(p.read_text())["best_val_loss"],
        )
        checkpoint = next(iter(sorted(best_path.parent.glob("checkpoint*.bin"))), None)
        if checkpoint is None:
            raise DataError(f"missing checkpoint next to {best_path}")
        params = load_checkpoint(checkpoint)
        beta_t, beta_s, alpha = component_balance(params)
        rows.append({
            "horizon": params.horizon,
            "beta_trend": beta_t,
            "beta_seasonal": beta_s,
            "alpha": alpha,
        })
    return rows


def balance_csv(rows: list[dict]) -> str:
    lines = ["horizon,beta_trend,beta_seasonal,alpha"]
    for row in rows:
        cells = [str(row["horizon"])] + [
            "" if row[k] is None else repr(float(row[k]))
            for k in ("beta_trend", "beta_seasonal", "alpha")
        ]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def resolve_threads(configured: int | None) -> int:
    if configured is not None:
        return max(1, configured)
    env = os.environ.get("ALINEAR_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"ALINEAR_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def write_manifest(root: Path) -> None:
    """Record every file under ``root`` with its content hash."""
    if not root.exists():
        return
    entries = []
    for path in sorted(root.rglob("*")):
        if path.is_file() and path.name != "manifest.json":
            digest = hashlib.sha256(path.read_bytes()).hexdigest()
            entries.append({
                "path": str(path.relative_to(root)),
                "sha256": digest,
                "bytes": path.stat().st_size,
            })
    payload = {
        "created": datetime.now(timezone.utc).isoformat(),
        "files": entries,
    }
    _write_json(root / "manifest.json", payload)


def _write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_results_csv(root: Path, report_paths: list[Path]) -> None:
    lines = ["dataset,horizon,seed,ablation,mse,mae,param_count,pnp_mse,pnp_mae"]
    for path in report_paths:
        payload = json.loads(path.read_text())
        for entry in payload["per_seed"]:
            lines.append(",".join([
                payload["dataset"],
                str(payload["horizon"]),
                str(entry["seed"]),
                payload["ablation"],
                repr(entry["mse"]),
                repr(entry["mae"]),
                str(payload["param_count"]),
                repr(payload["pnp_mse"]),
                repr(payload["pnp_mae"]),
            ]))
    (root / "results.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")


def _write_sweep_csv(path: Path, results: list[dict]) -> None:
    if not results:
        return
    keys = sorted(results[0]["assignment"])
    lines = [",".join(keys + ["horizon", "mse", "mae"])]
    for row in results:
        lines.append(",".join(
            [f"{row['assignment'][k]:g}" for k in keys]
            + [str(row["horizon"]), repr(row["mse"]), repr(row["mae"])]
        ))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
