import json

import pytest

from engine.config import RunConfig, experiment_defaults, load_run_config
from engine.data_loader import DATA_DIR_ENV
from engine.errors import ConfigError


def test_experiment_defaults():
    assert experiment_defaults("symmetric-init") == RunConfig()
    ff = experiment_defaults("feedforward")
    assert (ff.hidden_size, ff.epochs) == (20, 20)
    fr = experiment_defaults("fixed-ratio")
    assert (fr.dt, fr.n_free, fr.epochs, fr.r_str) == (0.3, 30, 30, 0.5)
    assert experiment_defaults("custom").hidden_size == 50
    with pytest.raises(ConfigError):
        experiment_defaults("recurrent")


def test_defaults_without_file_or_flags():
    cfg = load_run_config(env={})
    assert cfg == RunConfig()


def test_precedence_file_env_flags(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"experiment": "fixed-ratio", "beta": 0.2, "seed": 4, "data_dir": "from-file"}))
    cfg = load_run_config(path, overrides={"seed": 9, "epochs": None}, env={DATA_DIR_ENV: "from-env"})
    assert cfg.experiment == "fixed-ratio"
    assert cfg.dt == 0.3  # experiment default
    assert cfg.beta == 0.2  # file
    assert cfg.data_dir == "from-env"
    assert cfg.seed == 9  # flag
    assert cfg.epochs == 30  # None flags are ignored

    flagged = load_run_config(path, overrides={"data_dir": "from-flag"}, env={DATA_DIR_ENV: "from-env"})
    assert flagged.data_dir == "from-flag"


def test_flag_experiment_selects_defaults():
    cfg = load_run_config(overrides={"experiment": "feedforward", "method": "VF"}, env={})
    assert cfg.hidden_size == 20
    assert cfg.method == "VF"


def test_manifest_is_accepted_as_config(tmp_path):
    config = {**RunConfig(method="DyadicEP", seed=3).to_dict()}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps({"seed": 3, "config": config, "final_metrics": {}}))
    assert load_run_config(path, env={}) == RunConfig(method="DyadicEP", seed=3)


def test_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json", env={})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(bad, env={})
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(listed, env={})
    unknown = tmp_path / "unknown.json"
    unknown.write_text(json.dumps({"learning_rate": 0.1}))
    with pytest.raises(ConfigError, match="learning_rate"):
        load_run_config(unknown, env={})


def test_invalid_values_are_rejected():
    with pytest.raises(ConfigError):
        load_run_config(overrides={"method": "EP", "experiment": "feedforward"}, env={})
