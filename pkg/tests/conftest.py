import gzip
import struct

import numpy as np
import pytest

from engine.checks import TIGHT, free_equilibrium, random_network
from engine.cost import QuadraticCost
from engine.data_loader import Dataset
from engine.hopfield import HopfieldField


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: needs the MNIST files or a long training run")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tight():
    return TIGHT


def _problem(rng, *, symmetric: bool, layered: bool = True):
    field = HopfieldField()
    params = random_network(rng, 4, 5, 3, layered=layered, symmetric=symmetric)
    u = rng.normal(size=4)
    cost = QuadraticCost(np.array([1.0, -1.0, 1.0]))
    x_free = free_equilibrium(field, params, u, params.n_dyn)
    return field, params, u, cost, x_free


@pytest.fixture
def asymmetric_problem(rng):
    """(field, params, u, cost, x_free) for a small layered net with asymmetric J_dyn."""
    return _problem(rng, symmetric=False)


@pytest.fixture
def symmetric_problem(rng):
    return _problem(rng, symmetric=True)


@pytest.fixture
def write_idx():
    """Write an IDX file: write_idx(path, uint8 array, magic, gz=False)."""
    def _write(path, array, magic, gz=False, extra=b""):
        array = np.asarray(array, dtype=np.uint8)
        header = struct.pack(">I", magic) + struct.pack(f">{array.ndim}I", *array.shape)
        payload = header + array.tobytes() + extra
        if gz:
            with gzip.open(path, "wb") as f:
                f.write(payload)
        else:
            path.write_bytes(payload)
        return path
    return _write


def _synthetic(rng, n, n_features, split):
    labels = rng.integers(0, 10, size=n)
    images = rng.uniform(-1.0, 1.0, size=(n, n_features))
    return Dataset(images, labels, split)


@pytest.fixture
def tiny_data():
    """Small random train/test datasets with 16 input features."""
    rng = np.random.default_rng(99)
    return _synthetic(rng, 96, 16, "train"), _synthetic(rng, 32, 16, "test")
