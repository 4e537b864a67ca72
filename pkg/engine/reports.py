"""
Non-Conservative Equilibrium Propagation Engine - Report Generation

This module handles all run outputs:
- MetricsLogger: append-only metrics CSV (fixed header, one row per record)
- save_manifest(): resolved config, seed, library versions and final metrics as JSON
- save_checkpoint() / load_checkpoint(): parameter dump as .npz, bit-exact on reload

Every run writes into its own directory under the configured output
directory, named after experiment, method, seed and a UTC timestamp.
"""

from __future__ import annotations

import csv
import json
import logging
import platform
from dataclasses import asdict, fields, is_dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd
import scipy

from .errors import ConfigError
from .feedforward import FeedforwardParams
from .fixed_ratio import FixedRatioParams
from .hopfield import HopfieldParams
from .linear import LinearParams
from .metrics import CSV_COLUMNS, MetricsRecord

logger = logging.getLogger(__name__)

PARAM_KINDS = {
    "hopfield": HopfieldParams,
    "fixed-ratio": FixedRatioParams,
    "feedforward": FeedforwardParams,
    "linear": LinearParams,
}


def _timestamp() -> str:
    """Return UTC timestamp in YYYYmmdd_HHMMSS format."""
    return datetime.now(timezone.utc).strftime("%Y%m%d_%H%M%S")


def _to_json_serializable(obj: Any) -> Any:
    """
    Recursively convert dataclasses, numpy values and nested structures to JSON types.
    """
    if is_dataclass(obj) and not isinstance(obj, type):
        return _to_json_serializable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _to_json_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_json_serializable(x) for x in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def make_run_dir(output_dir: Path, *, experiment: str, method: str, seed: int) -> Path:
    """Fresh run directory; a numeric suffix is added when the name is taken within the same second."""
    base = Path(output_dir) / f"{experiment}_{method}_seed{seed}_{_timestamp()}"
    run_dir = base
    attempt = 0
    while True:
        try:
            run_dir.mkdir(parents=True, exist_ok=False)
            return run_dir
        except FileExistsError:
            attempt += 1
            run_dir = base.with_name(f"{base.name}_{attempt}")
        except OSError as exc:
            raise ConfigError(f"Cannot create output directory {run_dir}: {exc}") from exc


class MetricsLogger:
    """Append-only CSV writer for MetricsRecord rows."""

    def __init__(self, path: Path):
        self.path = Path(path)
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            new_file = not self.path.exists() or self.path.stat().st_size == 0
            if new_file:
                with self.path.open("w", newline="") as f:
                    csv.writer(f).writerow(CSV_COLUMNS)
        except OSError as exc:
            raise ConfigError(f"Cannot write metrics to {self.path}: {exc}") from exc

    def log(self, record: MetricsRecord) -> None:
        row = asdict(record)
        with self.path.open("a", newline="") as f:
            csv.writer(f).writerow(["" if row[c] is None else row[c] for c in CSV_COLUMNS])


def read_metrics(path: Path) -> pd.DataFrame:
    return pd.read_csv(path)


def library_versions() -> Dict[str, str]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pandas": pd.__version__,
    }


def save_manifest(
    path: Path,
    *,
    config: Dict[str, Any],
    final_metrics: Dict[str, Any],
    files: Optional[Dict[str, Any]] = None,
) -> Path:
    """
    Save the run manifest as JSON.

    The "config" entry is the fully resolved RunConfig, so the manifest can be
    passed back through --config to replay the run.
    """
    manifest = {
        "created_utc": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "seed": config.get("seed"),
        "config": config,
        "versions": library_versions(),
        "final_metrics": final_metrics,
        "files": files or {},
    }
    path = Path(path)
    path.write_text(json.dumps(_to_json_serializable(manifest), indent=2, default=str))
    return path


def save_checkpoint(path: Path, params) -> Path:
    """Write every dataclass field of params to an .npz archive."""
    kind = next((k for k, cls in PARAM_KINDS.items() if isinstance(params, cls)), None)
    if kind is None:
        raise ConfigError(f"Cannot checkpoint parameters of type {type(params).__name__}")
    arrays = {"kind": np.array(kind)}
    for f in fields(params):
        value = getattr(params, f.name)
        if value is not None:
            arrays[f.name] = np.asarray(value)
    path = Path(path)
    with path.open("wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: Path):
    """Inverse of save_checkpoint."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as data:
        kind = str(data["kind"])
        if kind not in PARAM_KINDS:
            raise ConfigError(f"Unknown checkpoint kind {kind!r}")
        cls = PARAM_KINDS[kind]
        kwargs = {}
        for f in fields(cls):
            if f.name not in data.files:
                continue
            value = data[f.name]
            kwargs[f.name] = value.item() if value.ndim == 0 else value.copy()
    return cls(**kwargs)
