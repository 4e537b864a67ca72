"""
Plot training curves and sweep summaries.

Training run (metrics.csv written by `app.py train`):
- batch cost (rolling mean) against batch count
- test accuracy per epoch
- r_str per batch and r_jac per epoch

Sweep (sweep_summary.csv written by `app.py sweep`):
- final accuracy and cumulative loss against r_str, one line per method,
  with +/- one standard deviation bands

Usage:
    python tools/plot_metrics.py runs/<run>/metrics.csv
    python tools/plot_metrics.py runs/sweep_summary.csv --out figures/sweep.png
"""

import argparse
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import pandas as pd

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from engine.metrics import EVAL_BATCH


def plot_run(df: pd.DataFrame, out: Path, window: int = 50) -> Path:
    train = df[df["batch"] != EVAL_BATCH].reset_index(drop=True)
    evals = df[df["batch"] == EVAL_BATCH]

    fig, axes = plt.subplots(1, 3, figsize=(15, 4))
    axes[0].plot(train.index, train["cost"].rolling(window, min_periods=1).mean())
    axes[0].set_xlabel("batch")
    axes[0].set_ylabel(f"free cost (rolling {window})")

    axes[1].plot(evals["epoch"], evals["accuracy"], marker="o")
    axes[1].set_xlabel("epoch")
    axes[1].set_ylabel("test accuracy")

    axes[2].plot(train.index, train["r_str"], label="r_str")
    if evals["r_jac"].notna().any():
        # place the per-epoch r_jac at the last batch of its epoch
        ends = train.groupby("epoch").tail(1).index
        axes[2].plot(ends[:len(evals)], evals["r_jac"].to_numpy()[:len(ends)], marker="o", label="r_jac")
    axes[2].set_xlabel("batch")
    axes[2].set_ylabel("asymmetry")
    axes[2].legend()

    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def plot_sweep(df: pd.DataFrame, out: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    for (method, regime), group in df.groupby(["method", "train_only"]):
        group = group.sort_values("r_str")
        label = method if regime == "all" else f"{method} ({regime})"
        for ax, metric in zip(axes, ["final_accuracy", "cumulative_loss"]):
            mean, std = group[f"{metric}_mean"], group[f"{metric}_std"].fillna(0.0)
            ax.plot(group["r_str"], mean, marker="o", label=label)
            ax.fill_between(group["r_str"], mean - std, mean + std, alpha=0.2)
    axes[0].set_ylabel("final test accuracy")
    axes[1].set_ylabel("cumulative loss (first 5 epochs)")
    for ax in axes:
        ax.set_xlabel("r_str")
        ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=120)
    plt.close(fig)
    return out


def main():
    parser = argparse.ArgumentParser(description="Plot metrics.csv or sweep_summary.csv")
    parser.add_argument("csv", type=Path)
    parser.add_argument("--out", type=Path, default=None, help="Output PNG (default: next to the CSV)")
    args = parser.parse_args()

    df = pd.read_csv(args.csv)
    out = args.out or args.csv.with_suffix(".png")
    out.parent.mkdir(parents=True, exist_ok=True)
    if "final_accuracy_mean" in df.columns:
        plot_sweep(df, out)
    else:
        plot_run(df, out)
    print(f"Saved: {out}")


if __name__ == "__main__":
    main()
