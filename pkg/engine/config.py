"""
Non-Conservative Equilibrium Propagation Engine

Run configuration - per-experiment defaults and layered resolution.

Resolution order (later wins):
    RunConfig defaults < experiment defaults < JSON file < EP_DATA_DIR < CLI flags

A JSON file may be a plain config or a run manifest; in the latter case its
"config" entry is used, so any finished run can be replayed.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from .data_loader import DATA_DIR_ENV
from .errors import ConfigError
from .validation import EXPERIMENTS, validate_run_config

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    """Everything needed to reproduce one training run."""
    experiment: str = "symmetric-init"  # symmetric-init | fixed-ratio | feedforward | custom
    method: str = "AEP"  # EP | VF | AEP | DyadicEP
    hidden_size: int = 50
    r_str: float = 0.0  # fixed-ratio only
    beta: float = 0.5
    dt: float = 0.5
    n_free: int = 20
    n_nudge: int = 10
    epochs: int = 40
    batch_size: int = 64
    lr_input_hidden: float = 0.05  # J_in
    lr_hidden_output: float = 0.01  # J_dyn, W, xi, theta_S, theta_A, gamma
    seed: int = 0
    train_only: str = "all"  # all | input-only
    data_dir: str = "data"
    output_dir: str = "runs"
    train_subset: Optional[int] = None
    test_subset: Optional[int] = None
    repetitions: int = 10  # sweep only
    divergence_limit: float = 0.01  # abort when more than this fraction of a batch diverges

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def experiment_defaults(experiment: str) -> RunConfig:
    """Hyperparameter column for one experiment; custom starts from symmetric-init."""
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {experiment!r}")
    cfg = RunConfig(experiment=experiment)
    if experiment == "feedforward":
        return replace(cfg, hidden_size=20, epochs=20)
    if experiment == "fixed-ratio":
        return replace(cfg, dt=0.3, n_free=30, epochs=30, r_str=0.5)
    return cfg


def _read_file(path: Path) -> Dict[str, Any]:
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Invalid JSON in {path}: {exc}") from exc
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data


def load_run_config(
    path: Optional[Path] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Resolve a RunConfig from defaults, an optional JSON file, the environment and flag overrides."""
    env = os.environ if env is None else env
    file_values = _read_file(Path(path)) if path is not None else {}
    flag_values = {k: v for k, v in (overrides or {}).items() if v is not None}

    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(file_values) - known)
    if unknown:
        raise ConfigError(f"Unknown config keys: {unknown}")

    experiment = flag_values.get("experiment", file_values.get("experiment", "symmetric-init"))
    resolved = asdict(experiment_defaults(experiment))
    resolved.update(file_values)
    if env.get(DATA_DIR_ENV):
        resolved["data_dir"] = env[DATA_DIR_ENV]
    resolved.update(flag_values)

    validate_run_config(resolved)
    logger.debug(f"Resolved config: {resolved}")
    return RunConfig(**resolved)
