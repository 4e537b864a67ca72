import pytest

from engine.errors import ConfigError
from engine.validation import validate_run_config

# Valid config fixture
VALID_CONFIG = {
    "experiment": "symmetric-init",
    "method": "AEP",
    "hidden_size": 50,
    "r_str": 0.0,
    "beta": 0.5,
    "dt": 0.5,
    "n_free": 20,
    "n_nudge": 10,
    "epochs": 40,
    "batch_size": 64,
    "lr_input_hidden": 0.05,
    "lr_hidden_output": 0.01,
    "seed": 0,
    "train_only": "all",
}


def test_validate_run_config_ok():
    validate_run_config(VALID_CONFIG)
    validate_run_config({**VALID_CONFIG, "beta": -0.5, "train_subset": 100})


def test_missing_keys():
    cfg = {k: v for k, v in VALID_CONFIG.items() if k != "beta"}
    with pytest.raises(ConfigError, match="beta"):
        validate_run_config(cfg)


@pytest.mark.parametrize("key,value", [
    ("experiment", "recurrent"),
    ("method", "BPTT"),
    ("train_only", "output-only"),
    ("r_str", 1.2),
    ("r_str", -0.1),
    ("beta", 0.0),
    ("dt", 0.0),
    ("lr_input_hidden", -0.01),
    ("hidden_size", 0),
    ("batch_size", 0),
    ("seed", -1),
    ("test_subset", 0),
])
def test_rejects_bad_values(key, value):
    with pytest.raises(ConfigError):
        validate_run_config({**VALID_CONFIG, key: value})


def test_ep_only_with_symmetric_init():
    validate_run_config({**VALID_CONFIG, "method": "EP"})
    with pytest.raises(ConfigError, match="EP"):
        validate_run_config({**VALID_CONFIG, "method": "EP", "experiment": "fixed-ratio"})
