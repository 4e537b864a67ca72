"""
Non-Conservative Equilibrium Propagation Engine

Objective:
Trains layered Hopfield-style networks on MNIST with local, two-phase
learning rules (EP, VF, AEP, Dyadic EP) whose dynamics need not derive from
an energy, and checks those rules against exact gradients.

Run with:
    python app.py train --experiment symmetric-init --method AEP
    python app.py train --config configs/fixed_ratio.json --r-str 0.75
    python app.py eval --checkpoint runs/<run>/checkpoint.npz
    python app.py sweep --experiment fixed-ratio --methods VF AEP --r-values 0 0.5 1
    python app.py oracle-check --trials 6
    python app.py --help

Outputs (train):
    runs/<experiment>_<method>_seed<seed>_<timestamp>/metrics.csv       - one row per batch + eval rows
    runs/<experiment>_<method>_seed<seed>_<timestamp>/manifest.json     - resolved config, versions, final metrics
    runs/<experiment>_<method>_seed<seed>_<timestamp>/checkpoint.npz    - final parameters

Exit codes: 0 success, 1 failed oracle check, 2 configuration / input error, 3 divergence.
"""

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from engine.checks import OracleCheckConfig, run_oracle_checks, with_overrides
from engine.config import RunConfig, load_run_config
from engine.errors import (
    ConfigError,
    DegenerateMetric,
    DegenerateParameterization,
    DivergenceError,
    IdxParseError,
    OracleUnavailable,
)
from engine.sweep import run_sweep
from engine.training import evaluate_checkpoint, run_training
from engine.validation import METHODS, TRAIN_ONLY

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_DIVERGENCE = 3

RUN_FLAGS = {
    "experiment": (str, "symmetric-init | fixed-ratio | feedforward | custom"),
    "method": (str, "EP | VF | AEP | DyadicEP"),
    "hidden_size": (int, "Hidden units"),
    "r_str": (float, "Fixed asymmetry ratio (fixed-ratio only)"),
    "beta": (float, "Nudging strength"),
    "dt": (float, "Euler step"),
    "n_free": (int, "Free-phase steps"),
    "n_nudge": (int, "Nudged-phase steps"),
    "epochs": (int, "Training epochs"),
    "batch_size": (int, "Mini-batch size"),
    "lr_input_hidden": (float, "Learning rate of J_in"),
    "lr_hidden_output": (float, "Learning rate of the remaining groups"),
    "seed": (int, "Random seed"),
    "train_only": (str, "all | input-only"),
    "data_dir": (str, "Directory with the MNIST IDX files"),
    "output_dir": (str, "Directory for run outputs"),
    "train_subset": (int, "Use only the first N training samples"),
    "test_subset": (int, "Use only the first N test samples"),
    "repetitions": (int, "Runs per sweep grid point"),
    "divergence_limit": (float, "Abort when this fraction of a batch diverges"),
}


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config or run manifest")
    for name, (kind, help_text) in RUN_FLAGS.items():
        parser.add_argument(f"--{name.replace('_', '-')}", dest=name, type=kind, default=None, help=help_text)
    parser.add_argument("--quiet", action="store_true", help="Hide progress bars")


def _resolve(args) -> RunConfig:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    return load_run_config(args.config, overrides)


def cmd_train(args) -> int:
    cfg = _resolve(args)
    result = run_training(cfg, progress=not args.quiet)
    s = result.summary

    print("\n" + "=" * 60)
    print("TRAINING SUMMARY")
    print("=" * 60)
    print(f"Experiment: {cfg.experiment} | Method: {cfg.method} | Seed: {cfg.seed}")
    print(f"Epochs: {s.epochs} | Batches: {s.batches}")
    print("-" * 60)
    print(f"Final test accuracy: {s.final_accuracy:.4f}")
    print(f"Best test accuracy:  {s.best_accuracy:.4f}")
    print(f"Cumulative loss (first 5 epochs): {s.cumulative_loss:.3f}")
    print(f"Final r_str: {s.final_r_str:.4f}")
    if s.final_r_jac is not None:
        print(f"Final r_jac: {s.final_r_jac:.4f}")
    print("=" * 60)
    for name, path in result.files.items():
        print(f"Saved {name}: {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    overrides = {f.name: getattr(args, f.name, None) for f in fields(RunConfig)}
    ce = evaluate_checkpoint(args.checkpoint, args.config, overrides)
    ev = ce.result

    print("\n" + "=" * 60)
    print(f"EVALUATION ({args.checkpoint})")
    print("=" * 60)
    print(f"Protocol: {ce.config.experiment} | dt {ce.config.dt} | n_free {ce.config.n_free} "
          f"(from {ce.config_source})")
    print(f"Test samples: {ce.n_samples} | Diverged: {ev.n_diverged}")
    print(f"Accuracy: {ev.accuracy:.4f}")
    print(f"Mean cost: {ev.cost:.4f}")
    print(f"r_str: {ce.r_str:.4f}")
    if ev.r_jac is not None:
        print(f"r_jac (first samples): {ev.r_jac:.4f}")
    print("=" * 60)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _resolve(args)
    result = run_sweep(
        cfg,
        methods=args.methods,
        r_values=args.r_values if args.r_values else [cfg.r_str],
        train_only=args.train_only_values,
        progress=not args.quiet,
    )
    print("\n" + "=" * 60)
    print("SWEEP SUMMARY")
    print("=" * 60)
    print(result.summary.to_string(index=False))
    print("=" * 60)
    print(f"Saved: {result.runs_path}")
    print(f"Saved: {result.summary_path}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = with_overrides(OracleCheckConfig(), n_trials=args.trials, beta=args.beta,
                         tolerance=args.tolerance, seed=args.seed)
    report = run_oracle_checks(cfg)

    print("\n" + "=" * 60)
    print("GRADIENT ORACLE CHECK")
    print("=" * 60)
    print(report.table.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    print("-" * 60)
    print(f"AEP / DyadicEP tolerance: {cfg.tolerance:.1e}")
    print(f"Result: {'PASS' if report.passed else 'FAIL'}")
    print("=" * 60)
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Non-Conservative Equilibrium Propagation Engine")
    parser.add_argument("--log-level", default="WARNING", help="DEBUG | INFO | WARNING | ERROR")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="Train one configuration")
    _add_run_flags(p_train)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="Evaluate a checkpoint on the test split")
    _add_run_flags(p_eval)
    p_eval.add_argument("--checkpoint", type=Path, required=True, help="checkpoint.npz of a finished run")
    p_eval.set_defaults(func=cmd_eval)

    p_sweep = sub.add_parser("sweep", help="Repeated runs over methods and asymmetry ratios")
    _add_run_flags(p_sweep)
    p_sweep.add_argument("--methods", nargs="+", default=["VF", "AEP"], choices=METHODS)
    p_sweep.add_argument("--r-values", dest="r_values", nargs="+", type=float, default=None)
    p_sweep.add_argument("--train-only-values", dest="train_only_values", nargs="+",
                         default=["all"], choices=TRAIN_ONLY)
    p_sweep.set_defaults(func=cmd_sweep)

    p_check = sub.add_parser("oracle-check", help="Compare learning rules with exact gradients")
    p_check.add_argument("--trials", type=int, default=None)
    p_check.add_argument("--beta", type=float, default=None)
    p_check.add_argument("--tolerance", type=float, default=None)
    p_check.add_argument("--seed", type=int, default=None)
    p_check.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, IdxParseError) as exc:
        print(f"Configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OracleUnavailable, DegenerateParameterization, DegenerateMetric) as exc:
        print("=" * 60, file=sys.stderr)
        print(f"Cannot evaluate this configuration: {exc}", file=sys.stderr)
        print("=" * 60, file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        summary = getattr(exc, "summary", None)
        print(f"Diverged: {exc}" + (f" {summary}" if summary else ""), file=sys.stderr)
        return EXIT_DIVERGENCE


if __name__ == "__main__":
    sys.exit(main())
