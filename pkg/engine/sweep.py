"""
Non-Conservative Equilibrium Propagation Engine

Sweep module - repeated training runs over methods, asymmetry ratios and
training regimes.

Every grid point is trained `repetitions` times with seeds seed, seed+1, ...
and the per-run summaries are aggregated into mean/std columns. Used for the
accuracy-vs-asymmetry and cumulative-loss-vs-asymmetry curves.

Example:
    result = run_sweep(base_cfg, methods=["VF", "AEP"], r_values=[0.0, 0.5, 1.0])
    print(result.summary)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence

import pandas as pd

from .config import RunConfig
from .data_loader import DataLoader, Dataset
from .training import run_training
from .validation import validate_run_config

logger = logging.getLogger(__name__)

GRID_KEYS = ["method", "r_str", "train_only"]
SUMMARY_METRICS = ["final_accuracy", "best_accuracy", "cumulative_loss", "final_r_str", "final_r_jac"]


@dataclass
class SweepResult:
    runs: pd.DataFrame  # one row per training run
    summary: pd.DataFrame  # mean/std per grid point
    runs_path: Optional[Path] = None
    summary_path: Optional[Path] = None


def run_sweep(
    base: RunConfig,
    *,
    methods: Sequence[str],
    r_values: Sequence[float],
    train_only: Sequence[str] = ("all",),
    repetitions: Optional[int] = None,
    train: Optional[Dataset] = None,
    test: Optional[Dataset] = None,
    progress: bool = False,
) -> SweepResult:
    """Train every (method, r_str, train_only, repetition) combination."""
    repetitions = base.repetitions if repetitions is None else repetitions
    grid = [
        replace(base, method=m, r_str=float(r), train_only=t, seed=base.seed + rep)
        for m in methods for r in r_values for t in train_only for rep in range(repetitions)
    ]
    # fail before any training starts
    for cfg in grid:
        validate_run_config(cfg.to_dict())

    if train is None or test is None:
        loader = DataLoader(Path(base.data_dir))
        train = train if train is not None else loader.load_split("train", base.train_subset)
        test = test if test is not None else loader.load_split("test", base.test_subset)

    out_dir = Path(base.output_dir)
    rows = []
    for i, cfg in enumerate(grid, start=1):
        logger.info(f"Sweep run {i}/{len(grid)}: method={cfg.method} r_str={cfg.r_str} "
                    f"train_only={cfg.train_only} seed={cfg.seed}")
        result = run_training(replace(cfg, output_dir=str(out_dir / "runs")), train, test,
                              progress=progress)
        s = result.summary
        rows.append({
            "method": cfg.method,
            "r_str": cfg.r_str,
            "train_only": cfg.train_only,
            "seed": cfg.seed,
            "final_accuracy": s.final_accuracy,
            "best_accuracy": s.best_accuracy,
            "cumulative_loss": s.cumulative_loss,
            "final_r_str": s.final_r_str,
            "final_r_jac": s.final_r_jac,
            "run_dir": str(result.run_dir) if result.run_dir else "",
        })

    runs = pd.DataFrame(rows)
    summary = summarize_sweep(runs)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs_path = out_dir / "sweep_runs.csv"
    summary_path = out_dir / "sweep_summary.csv"
    runs.to_csv(runs_path, index=False)
    summary.to_csv(summary_path, index=False)
    logger.info(f"Sweep summary written to {summary_path}")
    return SweepResult(runs, summary, runs_path, summary_path)


def summarize_sweep(runs: pd.DataFrame) -> pd.DataFrame:
    """Mean and std of each summary metric per grid point, flattened to metric_mean / metric_std."""
    metrics = runs[GRID_KEYS + SUMMARY_METRICS].copy()
    metrics[SUMMARY_METRICS] = metrics[SUMMARY_METRICS].astype(float)
    agg = metrics.groupby(GRID_KEYS, sort=True)[SUMMARY_METRICS].agg(["mean", "std"])
    agg.columns = [f"{metric}_{stat}" for metric, stat in agg.columns]
    agg["n_runs"] = metrics.groupby(GRID_KEYS, sort=True).size()
    return agg.reset_index()
