"""Command-line entry point.

Verbs: train, evaluate, sweep, ablate, report-balance, validate-config.
Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical
divergence.

Environment: ALINEAR_OUTPUT_ROOT sets the default output directory when
neither the config nor --output-dir provides one; ALINEAR_THREADS sets
worker parallelism (default: number of cores).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, DataError, DivergenceError
from .experiment import (
    ExperimentConfig,
    balance_csv,
    config_to_dict,
    evaluate_checkpoint,
    load_config,
    report_component_balance,
    run_experiment,
    run_sweep,
)
from .model import MODES

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alinear",
        description="Train, evaluate, and study the horizon-adaptive linear forecaster.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--output-dir", default=None, help="override the output directory")
        p.add_argument("--horizons", type=_int_list, default=None,
                       help="comma-separated horizon override, e.g. 48,96")
        p.add_argument("--seeds", type=_int_list, default=None,
                       help="comma-separated seed override")
        p.add_argument("--delta", type=float, default=None, help="decay strength override")
        p.add_argument("--stride", type=int, default=None, help="training window stride")
        p.add_argument("--threads", type=int, default=None, help="worker thread count")
        p.add_argument("--force", action="store_true",
                       help="allow overwriting existing report files")

    p_train = sub.add_parser("train", help="train and evaluate per horizon and seed")
    add_common(p_train)
    p_train.add_argument("--ablation", choices=MODES, default=None,
                         help="ablation mode override")

    p_eval = sub.add_parser("evaluate", help="score a stored checkpoint on the test split")
    p_eval.add_argument("--config", required=True)
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--output", default=None, help="write the report here instead of stdout")

    p_sweep = sub.add_parser("sweep", help="grid sweep over kernel_init / delta / trend_factor_init")
    add_common(p_sweep)

    p_ablate = sub.add_parser("ablate", help="run every ablation variant")
    add_common(p_ablate)
    p_ablate.add_argument("--modes", default=",".join(MODES),
                          help="comma-separated subset of ablation modes")

    p_balance = sub.add_parser("report-balance",
                               help="tabulate learned trend/seasonal balance per horizon")
    p_balance.add_argument("--run-dir", required=True,
                           help="experiment output directory containing H<n> subdirectories")
    p_balance.add_argument("--output", default=None, help="CSV path (default: stdout)")

    p_validate = sub.add_parser("validate-config", help="parse and validate a config file")
    p_validate.add_argument("--config", required=True)

    return parser


def _load_with_overrides(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "output_dir", None):
        cfg.output_dir = args.output_dir
    elif cfg.output_dir == "results" and os.environ.get("ALINEAR_OUTPUT_ROOT"):
        cfg.output_dir = os.environ["ALINEAR_OUTPUT_ROOT"]
    if getattr(args, "horizons", None):
        cfg.horizons = args.horizons
    if getattr(args, "seeds", None):
        cfg.seeds = args.seeds
    if getattr(args, "delta", None) is not None:
        cfg.delta = args.delta
    if getattr(args, "stride", None) is not None:
        cfg.stride = args.stride
    if getattr(args, "threads", None) is not None:
        cfg.threads = args.threads
    if getattr(args, "ablation", None):
        cfg.ablation = args.ablation
    cfg.validate()
    return cfg


def _cmd_train(args) -> int:
    cfg = _load_with_overrides(args)
    reports = run_experiment(cfg, force=args.force)
    for path in reports:
        payload = json.loads(path.read_text())
        print(f"{payload['dataset']} H={payload['horizon']} "
              f"mse={payload['mse']:.6f} mae={payload['mae']:.6f} -> {path}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    report = evaluate_checkpoint(cfg, args.checkpoint)
    text = json.dumps(report, indent=2, sort_keys=True)
    if args.output:
        Path(args.output).write_text(text + "\n", encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        print(text)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    cfg = _load_with_overrides(args)
    summary = run_sweep(cfg, force=args.force)
    for key, info in summary["spread"].items():
        print(f"{key}: spread={info['spread']:.6f} "
              f"relative={info['relative_spread']:.3%}")
    print(f"overall: spread={summary['overall']['spread']:.6f} "
          f"relative={summary['overall']['relative_spread']:.3%}")
    return EXIT_OK


def _cmd_ablate(args) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in MODES:
            raise ConfigError(f"unknown ablation mode {mode!r}")
    cfg = _load_with_overrides(args)
    for mode in modes:
        sub = replace(cfg, ablation=mode)
        reports = run_experiment(sub, force=args.force)
        for path in reports:
            payload = json.loads(path.read_text())
            print(f"{mode}: H={payload['horizon']} mse={payload['mse']:.6f} "
                  f"params={payload['param_count']}")
    return EXIT_OK


def _cmd_report_balance(args) -> int:
    rows = report_component_balance(args.run_dir)
    text = balance_csv(rows)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
        print(f"wrote {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_validate_config(args) -> int:
    cfg = load_config(args.config)
    print(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True))
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "sweep": _cmd_sweep,
    "ablate": _cmd_ablate,
    "report-balance": _cmd_report_balance,
    "validate-config": _cmd_validate_config,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DivergenceError as exc:
        print(f"numerical divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
