from typing import Any, Dict

from engine.errors import ConfigError

EXPERIMENTS = ("symmetric-init", "fixed-ratio", "feedforward", "custom")
METHODS = ("EP", "VF", "AEP", "DyadicEP")
TRAIN_ONLY = ("all", "input-only")


def validate_run_config(cfg: Dict[str, Any]) -> None:
    required = [
        "experiment",
        "method",
        "hidden_size",
        "r_str",
        "beta",
        "dt",
        "n_free",
        "n_nudge",
        "epochs",
        "batch_size",
        "lr_input_hidden",
        "lr_hidden_output",
        "seed",
        "train_only",
    ]
    missing = [k for k in required if k not in cfg]
    if missing:
        raise ConfigError(f"Missing config keys: {missing}")

    # enumerations
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}")
    if cfg["method"] not in METHODS:
        raise ConfigError(f"method must be one of {METHODS}")
    if cfg["train_only"] not in TRAIN_ONLY:
        raise ConfigError(f"train_only must be one of {TRAIN_ONLY}")
    if cfg["method"] == "EP" and cfg["experiment"] != "symmetric-init":
        raise ConfigError("EP needs an energy and only runs with the symmetric-init experiment")

    # numeric checks
    r = float(cfg["r_str"])
    if not (0.0 <= r <= 1.0):
        raise ConfigError("r_str must be in [0,1]")
    if float(cfg["beta"]) == 0.0:
        raise ConfigError("beta must be nonzero")
    for k in ["dt", "lr_input_hidden", "lr_hidden_output"]:
        if float(cfg[k]) <= 0:
            raise ConfigError(f"{k} must be > 0")
    for k in ["hidden_size", "n_free", "n_nudge", "epochs", "batch_size"]:
        if int(cfg[k]) < 1:
            raise ConfigError(f"{k} must be >= 1")
    if int(cfg["seed"]) < 0:
        raise ConfigError("seed must be >= 0")
    for k in ["train_subset", "test_subset"]:
        if cfg.get(k) is not None and int(cfg[k]) < 1:
            raise ConfigError(f"{k} must be >= 1 when set")
