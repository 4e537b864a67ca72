"""
Non-Conservative Equilibrium Propagation Engine

Cost module - quadratic cost on the output units and the argmax readout.

Outputs are the last n_out coordinates of the state vector, so the cost
gradient is zero on every hidden coordinate.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class QuadraticCost:
    """C(x, y) = 1/2 ||o - y||^2 with o the trailing output block of x."""
    target: np.ndarray  # (n_out,) or (B, n_out), entries in {-1, +1}

    @property
    def n_out(self) -> int:
        return int(np.shape(self.target)[-1])

    def outputs(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] < self.n_out:
            raise ConfigError(f"State of length {x.shape[-1]} has fewer than {self.n_out} output units")
        return x[..., -self.n_out:]

    def value(self, x: np.ndarray) -> np.ndarray:
        """Per-sample cost; a scalar for a single state."""
        diff = self.outputs(x) - self.target
        return 0.5 * np.sum(diff ** 2, axis=-1)

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = np.zeros_like(x)
        g[..., -self.n_out:] = self.outputs(x) - self.target
        return g


def readout(x: np.ndarray, n_out: int) -> np.ndarray:
    """Predicted class = argmax over output units (ties -> lowest index)."""
    return np.argmax(np.asarray(x)[..., -n_out:], axis=-1)
