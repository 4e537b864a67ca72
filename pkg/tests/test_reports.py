import json

import numpy as np
import pytest

from engine.errors import ConfigError
from engine.feedforward import FeedforwardParams
from engine.fixed_ratio import fixed_ratio_init
from engine.hopfield import hidden_input_mask, init_hopfield, layered_mask
from engine.metrics import CSV_COLUMNS, EVAL_BATCH, MetricsRecord
from engine.reports import (
    MetricsLogger,
    load_checkpoint,
    make_run_dir,
    read_metrics,
    save_checkpoint,
    save_manifest,
)


def test_run_dir_name(tmp_path):
    run_dir = make_run_dir(tmp_path / "runs", experiment="fixed-ratio", method="AEP", seed=3)
    assert run_dir.is_dir()
    assert run_dir.name.startswith("fixed-ratio_AEP_seed3_")


def test_metrics_logger_writes_header_once(tmp_path):
    path = tmp_path / "metrics.csv"
    MetricsLogger(path).log(MetricsRecord(1, 0, 0.7, None, 0.25, None, 3.5))
    MetricsLogger(path).log(MetricsRecord(1, EVAL_BATCH, 0.6, 0.5, 0.25, 0.1, 9.0))

    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 3
    assert lines[1] == "1,0,0.7,,0.25,,3.5"
    df = read_metrics(path)
    assert list(df.columns) == CSV_COLUMNS
    assert df["accuracy"].isna().iloc[0]
    assert df["r_jac"].iloc[1] == pytest.approx(0.1)


def test_manifest_contents(tmp_path):
    path = save_manifest(
        tmp_path / "manifest.json",
        config={"seed": 5, "method": "VF"},
        final_metrics={"final_accuracy": np.float64(0.9), "epochs": np.int64(2)},
        files={"metrics": tmp_path / "metrics.csv"},
    )
    data = json.loads(path.read_text())
    assert data["seed"] == 5
    assert data["config"]["method"] == "VF"
    assert data["final_metrics"] == {"final_accuracy": 0.9, "epochs": 2}
    assert set(data["versions"]) == {"python", "numpy", "scipy", "pandas"}
    assert data["files"]["metrics"].endswith("metrics.csv")
    assert "created_utc" in data


def _assert_same(a, b):
    assert type(a) is type(b)
    for name, value in vars(a).items():
        other = getattr(b, name)
        if isinstance(value, np.ndarray):
            assert value.dtype == other.dtype
            assert np.array_equal(value, other)
        else:
            assert value == other


def test_checkpoint_hopfield_is_bit_exact(tmp_path, rng):
    params = init_hopfield(6, 4, 3, rng, symmetric=False)
    loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt.npz", params))
    _assert_same(params, loaded)


def test_checkpoint_fixed_ratio_is_bit_exact(tmp_path, rng):
    params = fixed_ratio_init(7, 0.3, 0.4, rng_seed=2, n_in=5, layer_mask=layered_mask(4, 3),
                              input_mask=hidden_input_mask(4, 3, 5))
    params = params.with_groups(J_in=rng.normal(size=(7, 5)))
    loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt.npz", params))
    assert loaded.gamma == params.gamma and loaded.r_str == params.r_str
    assert np.array_equal(loaded.J_dyn, params.J_dyn)
    assert np.array_equal(loaded.J_in, params.J_in)


def test_checkpoint_feedforward_is_bit_exact(tmp_path, rng):
    params = FeedforwardParams(J_in=rng.normal(size=(4, 3)), W=rng.normal(size=(2, 4)))
    loaded = load_checkpoint(save_checkpoint(tmp_path / "ckpt.npz", params))
    _assert_same(params, loaded)


def test_checkpoint_errors(tmp_path):
    with pytest.raises(ConfigError):
        save_checkpoint(tmp_path / "x.npz", {"J": np.zeros(2)})
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "missing.npz")
    np.savez(tmp_path / "odd.npz", kind=np.array("spiking"))
    with pytest.raises(ConfigError):
        load_checkpoint(tmp_path / "odd.npz")


def test_run_dirs_never_collide(tmp_path):
    first = make_run_dir(tmp_path, experiment="custom", method="VF", seed=0)
    second = make_run_dir(tmp_path, experiment="custom", method="VF", seed=0)
    assert first != second
    assert first.is_dir() and second.is_dir()
