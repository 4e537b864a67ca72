"""
Non-Conservative Equilibrium Propagation Engine

Hopfield module - asymmetric continuous Hopfield dynamics.

    F(x) = rho'(x) * (J_in u + J_dyn rho(x)) - x,   rho = tanh

J_dyn may be asymmetric; the energy (and therefore EP) only exists for the
symmetric case. The dyadic Hamiltonian H_T couples two copies (z, z') so that
the mean follows F while the difference carries the error signal.

Key responsibilities:
- force, energy and analytic Jacobian of the dynamics
- presynaptic transpose (dF/dtheta)^T v for J_in and J_dyn
- energy derivatives used by the EP rule
- dyadic Hamiltonian, its saddle gradients and the dyadic weight rule
- layer masks and random initialization for layered nets
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, Optional, Tuple

import numpy as np

from .cost import QuadraticCost
from .dynamics import ForceField, symmetric_part, antisymmetric_part
from .errors import ConfigError, ContractViolation

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-12


class Activation:
    """Elementwise tanh with its first two derivatives."""

    kind = "tanh"

    @staticmethod
    def rho(x: np.ndarray) -> np.ndarray:
        return np.tanh(x)

    @staticmethod
    def d1(x: np.ndarray) -> np.ndarray:
        return 1.0 - np.tanh(x) ** 2

    @staticmethod
    def d2(x: np.ndarray) -> np.ndarray:
        r = np.tanh(x)
        return -2.0 * r * (1.0 - r ** 2)


TANH = Activation()


@dataclass(frozen=True)
class HopfieldParams:
    """Trainable couplings plus the sparsity pattern they live on."""
    J_in: np.ndarray  # (N_dyn, N_in)
    J_dyn: np.ndarray  # (N_dyn, N_dyn)
    layer_mask: np.ndarray  # bool (N_dyn, N_dyn); False entries stay zero
    input_mask: Optional[np.ndarray] = None  # bool (N_dyn, N_in)

    def __post_init__(self):
        n = self.J_dyn.shape[0]
        if self.J_dyn.shape != (n, n) or self.layer_mask.shape != (n, n):
            raise ConfigError(f"J_dyn {self.J_dyn.shape} and layer_mask {self.layer_mask.shape} must be square and equal")
        if self.J_in.ndim != 2 or self.J_in.shape[0] != n:
            raise ConfigError(f"J_in {self.J_in.shape} must have {n} rows")
        if self.input_mask is not None and self.input_mask.shape != self.J_in.shape:
            raise ConfigError(f"input_mask {self.input_mask.shape} must match J_in {self.J_in.shape}")

    @property
    def n_dyn(self) -> int:
        return self.J_dyn.shape[0]

    @property
    def n_in(self) -> int:
        return self.J_in.shape[1]

    def groups(self) -> Dict[str, np.ndarray]:
        return {"J_in": self.J_in, "J_dyn": self.J_dyn}

    def with_groups(self, **updates: np.ndarray) -> "HopfieldParams":
        """New params with some groups replaced; masks are re-applied."""
        J_in = np.asarray(updates.get("J_in", self.J_in), dtype=float)
        J_dyn = np.asarray(updates.get("J_dyn", self.J_dyn), dtype=float)
        if self.input_mask is not None:
            J_in = J_in * self.input_mask
        return replace(self, J_in=J_in, J_dyn=J_dyn * self.layer_mask)


def layered_mask(n_hidden: int, n_out: int) -> np.ndarray:
    """Block off-diagonal hidden<->output connectivity, no self or intra-layer links."""
    n = n_hidden + n_out
    mask = np.zeros((n, n), dtype=bool)
    mask[:n_hidden, n_hidden:] = True
    mask[n_hidden:, :n_hidden] = True
    return mask


def feedforward_mask(n_hidden: int, n_out: int) -> np.ndarray:
    """Strictly block lower-triangular: hidden -> output only."""
    n = n_hidden + n_out
    mask = np.zeros((n, n), dtype=bool)
    mask[n_hidden:, :n_hidden] = True
    return mask


def dense_mask(n: int) -> np.ndarray:
    return np.ones((n, n), dtype=bool)


def hidden_input_mask(n_hidden: int, n_out: int, n_in: int) -> np.ndarray:
    """Input drives the hidden layer only."""
    mask = np.zeros((n_hidden + n_out, n_in), dtype=bool)
    mask[:n_hidden] = True
    return mask


def _check(params: HopfieldParams, u, x: np.ndarray) -> None:
    if x.shape[-1] != params.n_dyn:
        raise ConfigError(f"State length {x.shape[-1]} != N_dyn {params.n_dyn}")
    if np.shape(u)[-1] != params.n_in:
        raise ConfigError(f"Input length {np.shape(u)[-1]} != N_in {params.n_in}")


def input_bias(params: HopfieldParams, u) -> np.ndarray:
    """b(u) = J_in u; may be precomputed once per sample."""
    return np.asarray(u, dtype=float) @ params.J_in.T


def hopfield_force(params: HopfieldParams, u, x: np.ndarray, *, bias: Optional[np.ndarray] = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    _check(params, u, x)
    b = input_bias(params, u) if bias is None else bias
    return TANH.d1(x) * (b + TANH.rho(x) @ params.J_dyn.T) - x


def is_symmetric(J: np.ndarray, tol: float = SYMMETRY_TOL) -> bool:
    scale = max(1.0, float(np.max(np.abs(J)))) if J.size else 1.0
    return bool(np.max(np.abs(J - J.T), initial=0.0) <= tol * scale)


def hopfield_energy(params: HopfieldParams, u, x: np.ndarray) -> np.ndarray:
    """E = 1/2 ||x||^2 - 1/2 rho^T J_dyn rho - rho^T J_in u (symmetric J_dyn only)."""
    if not is_symmetric(params.J_dyn):
        raise ContractViolation("Energy is only defined for symmetric J_dyn")
    x = np.asarray(x, dtype=float)
    _check(params, u, x)
    r = TANH.rho(x)
    b = input_bias(params, u)
    return (0.5 * np.sum(x ** 2, axis=-1)
            - 0.5 * np.sum(r * (r @ params.J_dyn.T), axis=-1)
            - np.sum(r * b, axis=-1))


def hopfield_jacobian(params: HopfieldParams, u, x: np.ndarray) -> np.ndarray:
    """
    Analytic dF_i/dx_j.

    Off-diagonal: rho'(x_i) J_ij rho'(x_j)
    Diagonal:     rho''(x_i) (J rho + b)_i + rho'(x_i)^2 J_ii - 1
    """
    x = np.asarray(x, dtype=float)
    _check(params, u, x)
    d = TANH.d1(x)
    drive = TANH.rho(x) @ params.J_dyn.T + input_bias(params, u)
    jac = d[..., :, None] * params.J_dyn * d[..., None, :]
    idx = np.arange(params.n_dyn)
    jac[..., idx, idx] += TANH.d2(x) * drive - 1.0
    return jac


def hopfield_vjp(params: HopfieldParams, u, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """J_F(x)^T v without forming the Jacobian."""
    x = np.asarray(x, dtype=float)
    d = TANH.d1(x)
    drive = TANH.rho(x) @ params.J_dyn.T + input_bias(params, u)
    return d * ((d * v) @ params.J_dyn) + (TANH.d2(x) * drive - 1.0) * v


def apply_presynaptic_transpose(params: HopfieldParams, x: np.ndarray, u, v: np.ndarray) -> Dict[str, np.ndarray]:
    """
    (dF/dtheta)^T v at state x, summed over a batch.

    J_in[i, k]  = v_i rho'(x_i) u_k
    J_dyn[i, j] = v_i rho'(x_i) rho(x_j)   (zero where layer_mask is False)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    u = np.broadcast_to(np.atleast_2d(np.asarray(u, dtype=float)), (x.shape[0], params.n_in))
    if v.shape != x.shape:
        raise ConfigError(f"v shape {v.shape} does not match state shape {x.shape}")
    _check(params, u, x)
    w = v * TANH.d1(x)
    g_in = w.T @ u
    if params.input_mask is not None:
        g_in = g_in * params.input_mask
    g_dyn = (w.T @ TANH.rho(x)) * params.layer_mask
    return {"J_in": g_in, "J_dyn": g_dyn}


def energy_param_grad(params: HopfieldParams, u, x: np.ndarray) -> Dict[str, np.ndarray]:
    """
    dE/dtheta at x, summed over a batch.

    dE/dJ_in[i, k] = -rho_i u_k,  dE/dJ_dyn[i, j] = -rho_i rho_j

    J_dyn uses the tied-pair derivative: J_ij and J_ji move together as one
    weight, so EP takes the full (1/2beta) [rho rho^T (+beta) - rho rho^T (-beta)]
    step and its J_dyn update stays exactly symmetric.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    u = np.broadcast_to(np.atleast_2d(np.asarray(u, dtype=float)), (x.shape[0], params.n_in))
    r = TANH.rho(x)
    g_in = -(r.T @ u)
    if params.input_mask is not None:
        g_in = g_in * params.input_mask
    outer = r.T @ r
    g_dyn = -0.5 * (outer + outer.T) * params.layer_mask
    return {"J_in": g_in, "J_dyn": g_dyn}


def hopfield_dyadic_energy(
    params: HopfieldParams,
    z: np.ndarray,
    zp: np.ndarray,
    beta: float,
    cost: QuadraticCost,
    *,
    u=None,
) -> np.ndarray:
    """
    H_T(z, z') = -1/2 rho(z)^T S rho(z) + 1/2 rho(z')^T S rho(z') - rho(z)^T A rho(z')
                 + 1/2 (||z||^2 - ||z'||^2) + beta/2 (C(z) + C(z'))
                 - (rho(z) - rho(z'))^T b(u)

    S, A are the symmetric and antisymmetric parts of J_dyn. The input term is
    only present when u is given.
    """
    S = symmetric_part(params.J_dyn)
    A = antisymmetric_part(params.J_dyn)
    r, rp = TANH.rho(np.asarray(z, float)), TANH.rho(np.asarray(zp, float))
    H = (-0.5 * np.sum(r * (r @ S.T), axis=-1)
         + 0.5 * np.sum(rp * (rp @ S.T), axis=-1)
         - np.sum(r * (rp @ A.T), axis=-1)
         + 0.5 * (np.sum(np.square(z), axis=-1) - np.sum(np.square(zp), axis=-1))
         + 0.5 * beta * (cost.value(z) + cost.value(zp)))
    if u is not None:
        H = H - np.sum((r - rp) * input_bias(params, u), axis=-1)
    return H


def hopfield_dyadic_rhs(
    params: HopfieldParams,
    u,
    z: np.ndarray,
    zp: np.ndarray,
    beta: float,
    cost: QuadraticCost,
) -> Tuple[np.ndarray, np.ndarray]:
    """Saddle dynamics of H_T: dz/dt = -dH/dz, dz'/dt = +dH/dz'."""
    S = symmetric_part(params.J_dyn)
    A = antisymmetric_part(params.J_dyn)
    z, zp = np.asarray(z, float), np.asarray(zp, float)
    r, rp = TANH.rho(z), TANH.rho(zp)
    b = input_bias(params, u)
    dz = TANH.d1(z) * (r @ S.T + rp @ A.T + b) - z - 0.5 * beta * cost.grad(z)
    dzp = TANH.d1(zp) * (rp @ S.T + r @ A.T + b) - zp + 0.5 * beta * cost.grad(zp)
    return dz, dzp


def hopfield_dyadic_weight_update(z: np.ndarray, zp: np.ndarray, beta: float) -> np.ndarray:
    """J_dyn estimate (1/2beta) (rho(z) - rho(z')) (rho(z) + rho(z'))^T, summed over a batch."""
    r = np.atleast_2d(TANH.rho(np.asarray(z, float)))
    rp = np.atleast_2d(TANH.rho(np.asarray(zp, float)))
    return ((r - rp).T @ (r + rp)) / (2.0 * beta)


class HopfieldField(ForceField):
    """ForceField adapter over HopfieldParams."""

    name = "hopfield"

    def state_dim(self, params: HopfieldParams) -> int:
        return params.n_dyn

    def input_dim(self, params: HopfieldParams) -> int:
        return params.n_in

    def force(self, params, u, x):
        return hopfield_force(params, u, x)

    def analytic_jacobian(self, params, u, x):
        return hopfield_jacobian(params, u, x)

    def vjp(self, params, u, x, v):
        return hopfield_vjp(params, u, x, v)

    def presynaptic_transpose(self, params, x, u, v):
        return apply_presynaptic_transpose(params, x, u, v)

    def energy_param_grad(self, params, u, x):
        return energy_param_grad(params, u, x)

    def check_conservative(self, params: HopfieldParams) -> None:
        if not is_symmetric(params.J_dyn):
            raise ContractViolation("EP requires a symmetric J_dyn")

    def as_hopfield(self, params: HopfieldParams) -> HopfieldParams:
        return params


def init_hopfield(
    n_in: int,
    n_hidden: int,
    n_out: int,
    rng: np.random.Generator,
    *,
    symmetric: bool = True,
) -> HopfieldParams:
    """
    Layered hopfield net with entries ~ Normal(0, 1/N), N = total neuron count.

    symmetric=True copies the strictly lower triangle onto the upper one so
    J_dyn is exactly symmetric.
    """
    n_dyn = n_hidden + n_out
    std = 1.0 / np.sqrt(n_in + n_dyn)
    mask = layered_mask(n_hidden, n_out)
    in_mask = hidden_input_mask(n_hidden, n_out, n_in)
    J_in = rng.normal(0.0, std, size=(n_dyn, n_in)) * in_mask
    J_dyn = rng.normal(0.0, std, size=(n_dyn, n_dyn))
    if symmetric:
        lower = np.tril(J_dyn, -1)
        J_dyn = lower + lower.T
    return HopfieldParams(J_in=J_in, J_dyn=J_dyn * mask, layer_mask=mask, input_mask=in_mask)
