"""
Non-Conservative Equilibrium Propagation Engine

Fixed asymmetry ratio parameterization of J_dyn.

    J_dyn = gamma * (c_S * S~ + c_A * A~),  c_S = sqrt(1 - r^2) / F_S,  c_A = r / F_A

S~ is symmetric with diagonal xi and off-diagonal theta_S; A~ is antisymmetric
with A~_ij = +theta_A for i > j and -theta_A for i < j. F_S, F_A are the
Frobenius norms of the (masked) components, so the two normalized parts have
unit norm and r_str(J_dyn) equals r exactly whatever the parameters are.

Off-diagonal vectors follow the strict lower triangle in row-major order,
which is the order of np.tril_indices(N, -1) and of index_map().
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np

from .dynamics import ForceField
from .errors import ConfigError, DegenerateParameterization
from .hopfield import (
    TANH,
    HopfieldParams,
    dense_mask,
    hopfield_force,
    hopfield_jacobian,
    hopfield_vjp,
)

logger = logging.getLogger(__name__)


def index_map(i: int, j: int, n_dyn: int) -> int:
    """1-based pair index k = (i-1)(i-2)/2 + j for 1 <= j < i <= n_dyn."""
    if not (1 <= j < i <= n_dyn):
        raise ConfigError(f"index_map needs 1 <= j < i <= {n_dyn}, got (i={i}, j={j})")
    return (i - 1) * (i - 2) // 2 + j


def n_pairs(n_dyn: int) -> int:
    return n_dyn * (n_dyn - 1) // 2


@dataclass(frozen=True)
class FixedRatioParams:
    """Trainable groups of the fixed-ratio model; J_dyn is derived."""
    J_in: np.ndarray  # (N_dyn, N_in)
    xi: np.ndarray  # (N_dyn,) diagonal of S~
    theta_S: np.ndarray  # (M,)
    theta_A: np.ndarray  # (M,)
    gamma: float
    r_str: float  # fixed, not trained
    layer_mask: Optional[np.ndarray] = None  # symmetric bool (N_dyn, N_dyn)
    input_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        n = len(self.xi)
        m = n_pairs(n)
        if self.theta_S.shape != (m,) or self.theta_A.shape != (m,):
            raise ConfigError(f"theta vectors must have length {m} for N_dyn={n}")
        if not 0.0 <= float(self.r_str) <= 1.0:
            raise ConfigError(f"r_str must lie in [0, 1], got {self.r_str}")
        if self.layer_mask is not None:
            if self.layer_mask.shape != (n, n):
                raise ConfigError(f"layer_mask {self.layer_mask.shape} must be ({n}, {n})")
            if not np.array_equal(self.layer_mask, self.layer_mask.T):
                raise ConfigError("fixed-ratio layer_mask must be symmetric")
        if self.J_in.ndim != 2 or self.J_in.shape[0] != n:
            raise ConfigError(f"J_in {self.J_in.shape} must have {n} rows")

    @property
    def n_dyn(self) -> int:
        return len(self.xi)

    @property
    def n_in(self) -> int:
        return self.J_in.shape[1]

    @property
    def mask(self) -> np.ndarray:
        return dense_mask(self.n_dyn) if self.layer_mask is None else self.layer_mask

    @cached_property
    def pair_mask(self) -> np.ndarray:
        rows, cols = np.tril_indices(self.n_dyn, -1)
        return self.mask[rows, cols]

    @cached_property
    def components(self) -> Tuple[np.ndarray, np.ndarray, float, float]:
        """(S~, A~, F_S, F_A) after masking."""
        return _components(self)

    @cached_property
    def J_dyn(self) -> np.ndarray:
        return fixed_ratio_assemble(self)

    @cached_property
    def hopfield(self) -> HopfieldParams:
        return HopfieldParams(J_in=self.J_in, J_dyn=self.J_dyn, layer_mask=self.mask,
                              input_mask=self.input_mask)

    def groups(self) -> Dict[str, np.ndarray]:
        return {"J_in": self.J_in, "xi": self.xi, "theta_S": self.theta_S,
                "theta_A": self.theta_A, "gamma": np.asarray(self.gamma, dtype=float)}

    def with_groups(self, **updates) -> "FixedRatioParams":
        """New params with some groups replaced; masked pairs stay zero."""
        J_in = np.asarray(updates.get("J_in", self.J_in), dtype=float)
        if self.input_mask is not None:
            J_in = J_in * self.input_mask
        diag = np.diag(self.mask)
        return replace(
            self,
            J_in=J_in,
            xi=np.asarray(updates.get("xi", self.xi), dtype=float) * diag,
            theta_S=np.asarray(updates.get("theta_S", self.theta_S), dtype=float) * self.pair_mask,
            theta_A=np.asarray(updates.get("theta_A", self.theta_A), dtype=float) * self.pair_mask,
            gamma=float(updates.get("gamma", self.gamma)),
        )


def _components(p: FixedRatioParams) -> Tuple[np.ndarray, np.ndarray, float, float]:
    n = p.n_dyn
    rows, cols = np.tril_indices(n, -1)
    S = np.zeros((n, n))
    S[rows, cols] = p.theta_S
    S[cols, rows] = p.theta_S
    S[np.arange(n), np.arange(n)] = p.xi
    A = np.zeros((n, n))
    A[rows, cols] = p.theta_A
    A[cols, rows] = -p.theta_A
    S = S * p.mask
    A = A * p.mask
    return S, A, float(np.linalg.norm(S)), float(np.linalg.norm(A))


def _coefficients(p: FixedRatioParams, F_S: float, F_A: float) -> Tuple[float, float]:
    r = float(p.r_str)
    c_S = 0.0
    c_A = 0.0
    if r < 1.0:
        if F_S == 0.0:
            raise DegenerateParameterization("Symmetric component has zero Frobenius norm")
        c_S = np.sqrt(1.0 - r ** 2) / F_S
    if r > 0.0:
        if F_A == 0.0:
            raise DegenerateParameterization("Antisymmetric component has zero Frobenius norm")
        c_A = r / F_A
    return c_S, c_A


def fixed_ratio_assemble(p: FixedRatioParams, layer_mask: Optional[np.ndarray] = None) -> np.ndarray:
    """
    Build J_dyn = gamma (c_S S~ + c_A A~).

    A layer_mask passed here overrides the one stored on p.
    """
    if layer_mask is not None and (p.layer_mask is None or not np.array_equal(layer_mask, p.layer_mask)):
        p = replace(p, layer_mask=np.asarray(layer_mask, dtype=bool))
    S, A, F_S, F_A = p.components
    c_S, c_A = _coefficients(p, F_S, F_A)
    return p.gamma * (c_S * S + c_A * A)


def fixed_ratio_presynaptic(p: FixedRatioParams, x: np.ndarray, u, v: np.ndarray) -> Dict[str, np.ndarray]:
    """
    v^T dF/dp for every group, summed over a batch.

    With w = v * rho'(x) and G = w rho(x)^T:
        xi_m      gamma c_S [G_mm - xi_m <G, S~> / F_S^2]
        theta_S_k gamma c_S [G_pq + G_qp - 2 theta_S_k <G, S~> / F_S^2]
        theta_A_k gamma c_A [G_pq - G_qp - 2 theta_A_k <G, A~> / F_A^2]
        gamma     <G, J_dyn / gamma>
    where (p, q) is the pair of index k with p > q.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u = np.broadcast_to(np.atleast_2d(np.asarray(u, dtype=float)), (x.shape[0], p.n_in))
    if v.shape != x.shape or x.shape[-1] != p.n_dyn:
        raise ConfigError(f"v {v.shape} and state {x.shape} must both have length {p.n_dyn}")

    S, A, F_S, F_A = p.components
    c_S, c_A = _coefficients(p, F_S, F_A)
    w = v * TANH.d1(x)
    G = w.T @ TANH.rho(x)
    rows, cols = np.tril_indices(p.n_dyn, -1)
    g_pq, g_qp = G[rows, cols], G[cols, rows]
    diag = np.diag(p.mask)

    g_xi = np.zeros(p.n_dyn)
    g_theta_S = np.zeros(len(p.theta_S))
    g_theta_A = np.zeros(len(p.theta_A))
    if c_S != 0.0:
        proj_S = float(np.sum(G * S))
        g_xi = p.gamma * c_S * (np.diag(G) * diag - p.xi * proj_S / F_S ** 2)
        g_theta_S = p.gamma * c_S * ((g_pq + g_qp) * p.pair_mask - 2.0 * p.theta_S * proj_S / F_S ** 2)
    if c_A != 0.0:
        proj_A = float(np.sum(G * A))
        g_theta_A = p.gamma * c_A * ((g_pq - g_qp) * p.pair_mask - 2.0 * p.theta_A * proj_A / F_A ** 2)
    g_gamma = float(np.sum(G * (c_S * S + c_A * A)))

    g_in = w.T @ u
    if p.input_mask is not None:
        g_in = g_in * p.input_mask
    return {"J_in": g_in, "xi": g_xi, "theta_S": g_theta_S, "theta_A": g_theta_A,
            "gamma": np.asarray(g_gamma)}


def fixed_ratio_init(
    n_dyn: int,
    sigma: float,
    r_str: float,
    rng_seed: int,
    *,
    n_in: int = 0,
    layer_mask: Optional[np.ndarray] = None,
    input_mask: Optional[np.ndarray] = None,
) -> FixedRatioParams:
    """
    theta_S, theta_A, xi ~ Normal(0, sigma^2) i.i.d. and gamma = sqrt(N_dyn).

    J_in starts at zero; the harness draws it separately.
    """
    rng = np.random.default_rng(rng_seed)
    m = n_pairs(n_dyn)
    p = FixedRatioParams(
        J_in=np.zeros((n_dyn, n_in)),
        xi=rng.normal(0.0, sigma, size=n_dyn),
        theta_S=rng.normal(0.0, sigma, size=m),
        theta_A=rng.normal(0.0, sigma, size=m),
        gamma=float(np.sqrt(n_dyn)),
        r_str=float(r_str),
        layer_mask=None if layer_mask is None else np.asarray(layer_mask, dtype=bool),
        input_mask=input_mask,
    )
    # zero the parameters that sit on masked positions
    return p.with_groups()


class FixedRatioField(ForceField):
    """Hopfield dynamics driven by the assembled fixed-ratio J_dyn."""

    name = "fixed-ratio"

    def state_dim(self, params: FixedRatioParams) -> int:
        return params.n_dyn

    def input_dim(self, params: FixedRatioParams) -> int:
        return params.n_in

    def force(self, params, u, x):
        return hopfield_force(params.hopfield, u, x)

    def analytic_jacobian(self, params, u, x):
        return hopfield_jacobian(params.hopfield, u, x)

    def vjp(self, params, u, x, v):
        return hopfield_vjp(params.hopfield, u, x, v)

    def presynaptic_transpose(self, params, x, u, v):
        return fixed_ratio_presynaptic(params, x, u, v)

    def as_hopfield(self, params: FixedRatioParams) -> HopfieldParams:
        return params.hopfield
