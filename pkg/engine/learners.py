"""
Non-Conservative Equilibrium Propagation Engine

Learners module - EP, VF, AEP and Dyadic EP gradient estimates.

Every learner returns an estimate of -dC/dtheta (a descent direction); the
harness applies theta <- theta + lr * estimate. All nudged phases start from
the free equilibrium and the +beta / -beta runs are independent.

    EP        -(1/2beta) (dE/dtheta(x+) - dE/dtheta(x-))
    VF        presyn(x0, (x+ - x-) / 2beta),  nudged force F - beta dC
    AEP       as VF with the extra force -2 A_J(x0) (x - x0), A_J frozen at x0
    DyadicEP  presyn(x0, d / beta) from the doubled saddle dynamics

States may be batched (B, N); estimates are then averaged over the rows
that did not diverge in any phase.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np

from .cost import QuadraticCost
from .dynamics import (
    EquilibriumResult,
    ForceField,
    RelaxationConfig,
    antisymmetric_part,
    jacobian,
    relax,
)
from .errors import ConfigError, ContractViolation, DivergenceError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NudgeConfig:
    beta: float
    relax_cfg: RelaxationConfig = field(default_factory=lambda: RelaxationConfig(dt=0.5, max_steps=10))

    def __post_init__(self):
        if self.beta == 0:
            raise ConfigError("beta must be nonzero")


@dataclass
class GradientEstimate:
    """Parameter-shaped estimate of -dC/dtheta."""
    grads: Dict[str, np.ndarray]  # keys mirror params.groups()
    method: str  # EP | VF | AEP | DyadicEP | oracle names
    beta_used: Optional[float] = None
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def flat(self, keys=None) -> np.ndarray:
        keys = list(self.grads) if keys is None else list(keys)
        return np.concatenate([np.ravel(self.grads[k]) for k in keys])

    def norm(self) -> float:
        return float(np.linalg.norm(self.flat()))

    def relative_error(self, reference: "GradientEstimate") -> float:
        """||self - reference|| / ||reference||."""
        ref = reference.flat()
        diff = np.linalg.norm(self.flat(reference.grads) - ref)
        scale = np.linalg.norm(ref)
        return float(diff / scale) if scale > 0 else float(diff)

    def cosine_similarity(self, other: "GradientEstimate") -> float:
        a, b = self.flat(other.grads), other.flat()
        return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))

    def scaled(self, factor: float) -> "GradientEstimate":
        return GradientEstimate({k: g * factor for k, g in self.grads.items()}, self.method,
                                self.beta_used, dict(self.diagnostics))

    def __sub__(self, other: "GradientEstimate") -> "GradientEstimate":
        grads = {k: self.grads[k] - other.grads[k] for k in self.grads}
        return GradientEstimate(grads, f"{self.method}-{other.method}", self.beta_used)


@dataclass
class DyadicState:
    """Doubled state (z, z'); m and d are views of the change of variables."""
    z: np.ndarray
    zp: np.ndarray

    @property
    def m(self) -> np.ndarray:
        return 0.5 * (self.z + self.zp)

    @property
    def d(self) -> np.ndarray:
        return self.z - self.zp


def _valid_rows(x: np.ndarray, results, exclude: Optional[np.ndarray]) -> Optional[np.ndarray]:
    if x.ndim == 1:
        return None
    valid = np.ones(x.shape[0], dtype=bool)
    for res in results:
        if res.diverged is not None:
            valid &= ~res.diverged
    if exclude is not None:
        valid &= ~np.asarray(exclude, dtype=bool)
    return valid


def _average(grads: Dict[str, np.ndarray], valid: Optional[np.ndarray]) -> Tuple[Dict[str, np.ndarray], int]:
    n = 1 if valid is None else int(valid.sum())
    return {k: g / max(n, 1) for k, g in grads.items()}, n


def _phase_diagnostics(valid, **phases: EquilibriumResult) -> Dict[str, Any]:
    diag: Dict[str, Any] = {
        "converged": {k: r.converged for k, r in phases.items()},
        "steps": {k: r.steps_taken for k, r in phases.items()},
        "residual": {k: r.final_residual for k, r in phases.items()},
        "n_diverged": {k: r.n_diverged for k, r in phases.items()},
    }
    if valid is not None:
        diag["n_valid"] = int(valid.sum())
    for name, res in phases.items():
        if not res.converged:
            logger.debug(f"{name} phase not converged (residual {res.final_residual:.3e})")
    return diag


def _cost_force(cost: QuadraticCost, beta: float):
    return lambda x: -beta * cost.grad(x)


def _nudged_pair(field_, params, u, cost, x_free, nudge, make_extra, on_divergence):
    plus = relax(field_, params, u, x_free, nudge.relax_cfg, make_extra(nudge.beta), on_divergence=on_divergence)
    minus = relax(field_, params, u, x_free, nudge.relax_cfg, make_extra(-nudge.beta), on_divergence=on_divergence)
    return plus, minus


def _contrast(plus, minus, beta, valid) -> np.ndarray:
    v = (plus.state - minus.state) / (2.0 * beta)
    if valid is not None:
        v[~valid] = 0.0
    return v


def ep_update(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    nudge: NudgeConfig,
    x_free: np.ndarray,
    *,
    on_divergence: str = "raise",
    exclude: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """Standard EP on the energy model; requires a symmetric J_dyn."""
    if not hasattr(field_, "energy_param_grad"):
        raise ContractViolation(f"{field_.name} dynamics have no energy; EP is not applicable")
    field_.check_conservative(params)
    x_free = np.asarray(x_free, dtype=float)

    plus, minus = _nudged_pair(field_, params, u, cost, x_free, nudge,
                               lambda b: _cost_force(cost, b), on_divergence)
    valid = _valid_rows(x_free, (plus, minus), exclude)
    x_plus, x_minus = plus.state.copy(), minus.state.copy()
    if valid is not None:
        x_plus[~valid] = x_free[~valid]
        x_minus[~valid] = x_free[~valid]

    g_plus = field_.energy_param_grad(params, u, x_plus)
    g_minus = field_.energy_param_grad(params, u, x_minus)
    grads = {k: -(g_plus[k] - g_minus[k]) / (2.0 * nudge.beta) for k in g_plus}
    grads, _ = _average(grads, valid)
    return GradientEstimate(grads, "EP", nudge.beta, _phase_diagnostics(valid, plus=plus, minus=minus))


def vf_update(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    nudge: NudgeConfig,
    x_free: np.ndarray,
    *,
    on_divergence: str = "raise",
    exclude: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """Vector Field rule: exact only when the Jacobian at x_free is symmetric."""
    x_free = np.asarray(x_free, dtype=float)
    plus, minus = _nudged_pair(field_, params, u, cost, x_free, nudge,
                               lambda b: _cost_force(cost, b), on_divergence)
    valid = _valid_rows(x_free, (plus, minus), exclude)
    v = _contrast(plus, minus, nudge.beta, valid)
    grads, _ = _average(field_.presynaptic_transpose(params, x_free, u, v), valid)
    return GradientEstimate(grads, "VF", nudge.beta, _phase_diagnostics(valid, plus=plus, minus=minus))


def aep_update(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    nudge: NudgeConfig,
    x_free: np.ndarray,
    *,
    on_divergence: str = "raise",
    exclude: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """Asymmetric EP: VF plus the antisymmetric Jacobian correction."""
    x_free = np.asarray(x_free, dtype=float)
    A = antisymmetric_part(jacobian(field_, params, u, x_free))
    has_correction = bool(np.any(A))

    def make_extra(beta: float):
        if not has_correction:
            return _cost_force(cost, beta)

        def extra(x: np.ndarray) -> np.ndarray:
            offset = (A @ (x - x_free)[..., None])[..., 0]
            return -beta * cost.grad(x) - 2.0 * offset
        return extra

    plus, minus = _nudged_pair(field_, params, u, cost, x_free, nudge, make_extra, on_divergence)
    valid = _valid_rows(x_free, (plus, minus), exclude)
    v = _contrast(plus, minus, nudge.beta, valid)
    grads, _ = _average(field_.presynaptic_transpose(params, x_free, u, v), valid)
    diag = _phase_diagnostics(valid, plus=plus, minus=minus)
    diag["antisymmetric_norm"] = float(np.linalg.norm(A))
    return GradientEstimate(grads, "AEP", nudge.beta, diag)


def dyadic_saddle_rhs(
    field_: ForceField,
    params,
    u,
    z: np.ndarray,
    zp: np.ndarray,
    beta: float,
    cost: QuadraticCost,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Saddle dynamics of H = -(z - z')^T F((z + z')/2) + beta/2 (C(z) + C(z')):

        dz/dt  = F(m) + 1/2 J_F(m)^T d - beta/2 dC(m)
        dz'/dt = F(m) - 1/2 J_F(m)^T d + beta/2 dC(m)
    """
    z, zp = np.asarray(z, dtype=float), np.asarray(zp, dtype=float)
    m = 0.5 * (z + zp)
    d = z - zp
    f = field_.force(params, u, m)
    back = 0.5 * field_.vjp(params, u, m, d)
    if beta != 0.0:
        back = back - 0.5 * beta * cost.grad(m)
    return f + back, f - back


class DyadicField(ForceField):
    """The doubled system (z, z') as one state of length 2N."""

    def __init__(self, inner: ForceField, beta: float, cost: QuadraticCost):
        self.inner = inner
        self.beta = beta
        self.cost = cost
        self.name = f"dyadic-{inner.name}"

    def state_dim(self, params) -> int:
        return 2 * self.inner.state_dim(params)

    def input_dim(self, params):
        return self.inner.input_dim(params)

    def split(self, state: np.ndarray) -> DyadicState:
        n = state.shape[-1] // 2
        return DyadicState(state[..., :n], state[..., n:])

    def force(self, params, u, x):
        s = self.split(np.asarray(x, dtype=float))
        dz, dzp = dyadic_saddle_rhs(self.inner, params, u, s.z, s.zp, self.beta, self.cost)
        return np.concatenate([dz, dzp], axis=-1)


def _doubled(x: np.ndarray) -> np.ndarray:
    return np.concatenate([x, x], axis=-1)


def dyadic_update(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    nudge: NudgeConfig,
    z0: np.ndarray,
    *,
    free_cfg: Optional[RelaxationConfig] = None,
    on_divergence: str = "raise",
    exclude: Optional[np.ndarray] = None,
) -> GradientEstimate:
    """
    Dyadic EP with a single nudged phase.

    Phase 1 relaxes m under F from z0 (on the diagonal manifold d stays 0, so
    this is the free phase of the doubled system). Phase 2 integrates the
    coupled (z, z') dynamics at +beta from (m, m). The presynaptic term is
    taken at the free equilibrium m.

    diagnostics["free"] holds the phase-1 EquilibriumResult.
    """
    free = relax(field_, params, u, z0, free_cfg or nudge.relax_cfg, on_divergence=on_divergence)
    m = free.state
    doubled = DyadicField(field_, nudge.beta, cost)
    nudged = relax(doubled, params, u, _doubled(m), nudge.relax_cfg, on_divergence=on_divergence)
    state = doubled.split(nudged.state)

    valid = _valid_rows(m, (free, nudged), exclude)
    v = state.d / nudge.beta
    if valid is not None:
        v[~valid] = 0.0
    grads, _ = _average(field_.presynaptic_transpose(params, m, u, v), valid)
    diag = _phase_diagnostics(valid, free=free, nudged=nudged)
    diag["free"] = free
    diag["state"] = state
    diag["max_abs_d"] = float(np.max(np.abs(state.d))) if state.d.size else 0.0
    return GradientEstimate(grads, "DyadicEP", nudge.beta, diag)


def dyadic_symmetric_update(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    nudge: NudgeConfig,
    x_free: np.ndarray,
    *,
    on_divergence: str = "raise",
) -> GradientEstimate:
    """Two-phase form -(1/2beta) (dH/dtheta at +beta - dH/dtheta at -beta)."""
    x_free = np.asarray(x_free, dtype=float)
    results = {}
    for sign in (1.0, -1.0):
        doubled = DyadicField(field_, sign * nudge.beta, cost)
        results[sign] = relax(doubled, params, u, _doubled(x_free), nudge.relax_cfg, on_divergence=on_divergence)
    plus, minus = results[1.0], results[-1.0]
    valid = _valid_rows(x_free, (plus, minus), None)

    # dH/dtheta = -(dF/dtheta)^T d at m
    doubled = DyadicField(field_, nudge.beta, cost)
    s_plus, s_minus = doubled.split(plus.state), doubled.split(minus.state)
    d_plus, d_minus = s_plus.d.copy(), s_minus.d.copy()
    if valid is not None:
        d_plus[~valid] = 0.0
        d_minus[~valid] = 0.0
    p_plus = field_.presynaptic_transpose(params, s_plus.m, u, d_plus)
    p_minus = field_.presynaptic_transpose(params, s_minus.m, u, d_minus)
    grads = {k: (p_plus[k] - p_minus[k]) / (2.0 * nudge.beta) for k in p_plus}
    grads, _ = _average(grads, valid)
    return GradientEstimate(grads, "DyadicEP-symmetric", nudge.beta,
                            _phase_diagnostics(valid, plus=plus, minus=minus))


def integrate_dyadic(
    field_: ForceField,
    params,
    u,
    z0: np.ndarray,
    zp0: np.ndarray,
    beta: float,
    cost: QuadraticCost,
    *,
    dt: float,
    n_steps: int,
) -> Tuple[DyadicState, float]:
    """Euler-integrate (z, z') for n_steps; returns the final state and max_t ||d(t)||_inf."""
    z = np.array(z0, dtype=float, copy=True)
    zp = np.array(zp0, dtype=float, copy=True)
    max_d = float(np.max(np.abs(z - zp)))
    for step in range(1, n_steps + 1):
        dz, dzp = dyadic_saddle_rhs(field_, params, u, z, zp, beta, cost)
        z = z + dt * dz
        zp = zp + dt * dzp
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(zp))):
            raise DivergenceError(f"Dyadic integration diverged at step {step}", step=step)
        max_d = max(max_d, float(np.max(np.abs(z - zp))))
    return DyadicState(z, zp), max_d
