"""
Non-Conservative Equilibrium Propagation Engine

Affine force field F(x) = M x + c.

Used as a reference system where the Jacobian is prescribed exactly, e.g. a
purely rotational M, which no gradient-descent energy can generate.
"""

from dataclasses import dataclass, replace
from typing import Dict

import numpy as np

from .dynamics import ForceField
from .errors import ConfigError


@dataclass(frozen=True)
class LinearParams:
    M: np.ndarray  # (N, N)
    c: np.ndarray  # (N,)

    def __post_init__(self):
        n = len(self.c)
        if self.M.shape != (n, n):
            raise ConfigError(f"M {self.M.shape} must be ({n}, {n})")

    def groups(self) -> Dict[str, np.ndarray]:
        return {"M": self.M, "c": self.c}

    def with_groups(self, **updates) -> "LinearParams":
        return replace(
            self,
            M=np.asarray(updates.get("M", self.M), dtype=float),
            c=np.asarray(updates.get("c", self.c), dtype=float),
        )


class LinearField(ForceField):
    name = "linear"

    def state_dim(self, params: LinearParams) -> int:
        return len(params.c)

    def force(self, params, u, x):
        return np.asarray(x, dtype=float) @ params.M.T + params.c

    def analytic_jacobian(self, params, u, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(params.M, x.shape[:-1] + params.M.shape).copy()

    def presynaptic_transpose(self, params, x, u, v):
        # dF_i/dM_ij = x_j, dF/dc = I
        x = np.atleast_2d(np.asarray(x, dtype=float))
        v = np.atleast_2d(np.asarray(v, dtype=float))
        return {"M": v.T @ x, "c": v.sum(axis=0)}
