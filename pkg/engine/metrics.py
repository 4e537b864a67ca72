"""
Non-Conservative Equilibrium Propagation Engine

Metrics module - training records and run-level summaries.

One MetricsRecord per training batch plus one evaluation record per epoch
(batch index EVAL_BATCH). Summaries are computed with pandas so the same code
works on in-memory records and on a metrics CSV read back from disk.

Example:
    summary = summarize(records)
    print(summary.final_accuracy, summary.cumulative_loss)
"""

from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Union

import numpy as np
import pandas as pd

CSV_COLUMNS = ["epoch", "batch", "cost", "accuracy", "r_str", "r_jac", "wall_ms"]
EVAL_BATCH = -1
CUMULATIVE_EPOCHS = 5


@dataclass
class MetricsRecord:
    """One CSV row."""
    epoch: int  # 1-based
    batch: int  # batch index within the epoch, EVAL_BATCH for evaluation rows
    cost: float  # batch-mean free-equilibrium cost (test cost on eval rows)
    accuracy: Optional[float]  # test accuracy, eval rows only
    r_str: float
    r_jac: Optional[float]  # mean over the first test samples, eval rows only
    wall_ms: float

    def __post_init__(self):
        if self.accuracy is not None and not (0.0 <= self.accuracy <= 1.0):
            raise ValueError(f"accuracy must be in [0,1], got {self.accuracy}")
        if not np.isnan(self.r_str) and not (0.0 <= self.r_str <= 1.0 + 1e-12):
            raise ValueError(f"r_str must be in [0,1], got {self.r_str}")

    @property
    def is_eval(self) -> bool:
        return self.batch == EVAL_BATCH


@dataclass
class RunSummary:
    """Run-level metrics."""
    epochs: int
    batches: int
    final_accuracy: float
    best_accuracy: float
    cumulative_loss: float  # first CUMULATIVE_EPOCHS epochs
    final_r_str: float
    final_r_jac: Optional[float]


Records = Union[pd.DataFrame, Iterable[MetricsRecord]]


def records_to_frame(records: Records) -> pd.DataFrame:
    if isinstance(records, pd.DataFrame):
        return records
    rows = [asdict(r) for r in records]
    return pd.DataFrame(rows, columns=CSV_COLUMNS)


def cumulative_loss(records: Records, n_epochs: int = CUMULATIVE_EPOCHS) -> float:
    """Sum of batch-mean free costs over the first n_epochs epochs."""
    df = records_to_frame(records)
    if df.empty:
        return 0.0
    train = df[(df["batch"] != EVAL_BATCH) & (df["epoch"] <= n_epochs)]
    return float(train["cost"].sum())


def summarize(records: Records) -> RunSummary:
    df = records_to_frame(records)
    if df.empty:
        raise ValueError("No records to summarize")

    evals = df[df["batch"] == EVAL_BATCH].sort_values("epoch")
    train = df[df["batch"] != EVAL_BATCH]
    final_acc = float(evals["accuracy"].iloc[-1]) if len(evals) else float("nan")
    best_acc = float(evals["accuracy"].max()) if len(evals) else float("nan")
    r_jac = None
    if len(evals) and pd.notna(evals["r_jac"].iloc[-1]):
        r_jac = float(evals["r_jac"].iloc[-1])

    return RunSummary(
        epochs=int(df["epoch"].max()),
        batches=len(train),
        final_accuracy=final_acc,
        best_accuracy=best_acc,
        cumulative_loss=cumulative_loss(df),
        final_r_str=float(df["r_str"].iloc[-1]),
        final_r_jac=r_jac,
    )
