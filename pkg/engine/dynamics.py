"""
Non-Conservative Equilibrium Propagation Engine

Core dynamics module - relaxation of force fields to stationary states.

This module owns the contract every model implements (ForceField) and the
generic numerics that work on any of them:
- relax(): explicit-Euler integration x <- x + dt * (F(x) + extra(x))
- jacobian(): analytic when the field declares one, central differences otherwise
- symmetric_part() / antisymmetric_part(): Jacobian decomposition

States are either a single vector (N,) or a batch (B, N). Batched relaxation
treats every row independently; with on_divergence="flag" diverged rows are
frozen and reported instead of aborting the whole batch.

Example:
    cfg = RelaxationConfig(dt=0.5, max_steps=20, mode="fixed")
    result = relax(field, params, u, x0, cfg)
    print(result.state, result.final_residual)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy import linalg

from .errors import ConfigError, DivergenceError

logger = logging.getLogger(__name__)

DIVERGENCE_BOUND = 1e6
FD_STEP = 1e-5
RELAX_MODES = ("fixed", "tolerance", "first", "newton")

ExtraForce = Callable[[np.ndarray], np.ndarray]


class ForceField:
    """
    Contract for a parameterized force F(x, theta, u).

    Subclasses implement force() and presynaptic_transpose(); analytic_jacobian()
    and vjp() are optional and fall back to finite differences.
    """

    name = "force"

    def state_dim(self, params) -> int:
        raise NotImplementedError

    def input_dim(self, params) -> Optional[int]:
        """Expected input length, or None when the field ignores u."""
        return None

    def force(self, params, u, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def analytic_jacobian(self, params, u, x: np.ndarray) -> Optional[np.ndarray]:
        return None

    def vjp(self, params, u, x: np.ndarray, v: np.ndarray) -> np.ndarray:
        """J_F(x)^T v."""
        jac = jacobian(self, params, u, x)
        return np.einsum("...ji,...j->...i", jac, v)

    def presynaptic_transpose(self, params, x: np.ndarray, u, v: np.ndarray) -> Dict[str, np.ndarray]:
        """(dF/dtheta)^T v per parameter group, summed over a batch."""
        raise NotImplementedError


@dataclass(frozen=True)
class RelaxationConfig:
    """How to integrate to a stationary state."""
    dt: float = 0.5
    max_steps: int = 20
    residual_tol: float = 0.0  # stop when ||F||_inf <= tol; 0 disables
    mode: str = "fixed"  # fixed | tolerance | first | newton

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be > 0, got {self.dt}")
        if int(self.max_steps) < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.residual_tol < 0:
            raise ConfigError(f"residual_tol must be >= 0, got {self.residual_tol}")
        if self.mode not in RELAX_MODES:
            raise ConfigError(f"Unknown relaxation mode {self.mode!r}; expected one of {RELAX_MODES}")


@dataclass
class EquilibriumResult:
    """Final state of a relaxation plus diagnostics."""
    state: np.ndarray
    steps_taken: int
    final_residual: float  # ||F + extra||_inf over non-diverged rows
    converged: bool
    diverged: Optional[np.ndarray] = None  # per-row mask, batched runs only

    @property
    def n_diverged(self) -> int:
        return 0 if self.diverged is None else int(self.diverged.sum())


def _check_dims(field: ForceField, params, u, x: np.ndarray) -> None:
    n = field.state_dim(params)
    if x.ndim not in (1, 2) or x.shape[-1] != n:
        raise ConfigError(f"State shape {x.shape} does not match state dimension {n}")
    n_in = field.input_dim(params)
    if n_in is None or u is None:
        return
    u = np.asarray(u)
    if u.shape[-1] != n_in:
        raise ConfigError(f"Input shape {u.shape} does not match input dimension {n_in}")
    if u.ndim == 2 and (x.ndim != 2 or u.shape[0] != x.shape[0]):
        raise ConfigError(f"Batched input {u.shape} needs a state batch of the same size, got {x.shape}")


def _residual(f: np.ndarray, alive: Optional[np.ndarray]) -> float:
    if alive is not None:
        f = f[alive]
    return float(np.max(np.abs(f))) if f.size else 0.0


def relax(
    field: ForceField,
    params,
    u,
    x0: np.ndarray,
    cfg: RelaxationConfig,
    extra_force: Optional[ExtraForce] = None,
    *,
    on_divergence: str = "raise",
) -> EquilibriumResult:
    """
    Integrate dx/dt = F(x) + extra_force(x) from x0.

    Modes:
        fixed      run exactly max_steps Euler steps
        tolerance  stop once ||F||_inf <= residual_tol (warns if max_steps is hit first)
        first      whichever of the two comes first, silently
        newton     root-find F + extra = 0 (single states only)

    A start that already satisfies the tolerance returns unchanged with zero steps.
    """
    x = np.array(x0, dtype=float, copy=True)
    _check_dims(field, params, u, x)
    if not np.all(np.isfinite(x)):
        raise ConfigError("Initial state must be finite")
    if on_divergence not in ("raise", "flag"):
        raise ConfigError(f"on_divergence must be 'raise' or 'flag', got {on_divergence!r}")

    def rhs(state: np.ndarray) -> np.ndarray:
        f = field.force(params, u, state)
        if extra_force is not None:
            f = f + extra_force(state)
        return f

    if cfg.mode == "newton":
        return _newton(field, params, u, x, cfg, rhs, extra_force)

    batched = x.ndim == 2
    alive = np.ones(x.shape[0], dtype=bool) if batched else None
    use_tol = cfg.mode in ("tolerance", "first") and cfg.residual_tol > 0

    f = rhs(x)
    residual = _residual(f, alive)
    steps = 0
    if use_tol and residual <= cfg.residual_tol:
        return EquilibriumResult(x, 0, residual, True, None if alive is None else ~alive)

    while steps < cfg.max_steps:
        if batched:
            x = np.where(alive[:, None], x + cfg.dt * f, x)
        else:
            x = x + cfg.dt * f
        steps += 1

        bad = ~np.isfinite(x) | (np.abs(x) > DIVERGENCE_BOUND)
        if bad.any():
            if not batched or on_divergence == "raise":
                raise DivergenceError(f"Relaxation diverged at step {steps}", step=steps)
            newly = bad.any(axis=1) & alive
            alive &= ~newly
            x[newly] = 0.0
            logger.debug(f"{int(newly.sum())} rows diverged at step {steps}")

        f = rhs(x)
        residual = _residual(f, alive)
        if use_tol and residual <= cfg.residual_tol:
            break

    converged = cfg.residual_tol == 0 or residual <= cfg.residual_tol
    if cfg.mode == "tolerance" and not converged:
        logger.warning(f"Relaxation hit max_steps={cfg.max_steps} with residual {residual:.3e}")
    logger.debug(f"relax mode={cfg.mode} steps={steps} residual={residual:.3e}")
    return EquilibriumResult(x, steps, residual, converged, None if alive is None else ~alive)


def _newton(field, params, u, x, cfg, rhs, extra_force) -> EquilibriumResult:
    if x.ndim != 1:
        raise ConfigError("newton relaxation supports single states only")
    f = rhs(x)
    residual = _residual(f, None)
    steps = 0
    while residual > cfg.residual_tol and steps < cfg.max_steps:
        jac = jacobian(field, params, u, x)
        if extra_force is not None:
            jac = jac + _central_columns(extra_force, x, FD_STEP)
        try:
            x = x - linalg.solve(jac, f)
        except linalg.LinAlgError as exc:
            raise DivergenceError(f"Singular Newton system at step {steps + 1}", step=steps + 1) from exc
        steps += 1
        if not np.all(np.isfinite(x)) or np.any(np.abs(x) > DIVERGENCE_BOUND):
            raise DivergenceError(f"Newton iteration diverged at step {steps}", step=steps)
        f = rhs(x)
        residual = _residual(f, None)
    converged = residual <= cfg.residual_tol
    if not converged:
        logger.warning(f"Newton relaxation stopped after {steps} steps with residual {residual:.3e}")
    return EquilibriumResult(x, steps, residual, converged)


def _central_columns(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """Central-difference Jacobian of fn at x; rows of a batch are perturbed together."""
    n = x.shape[-1]
    jac = np.zeros(x.shape[:-1] + (n, n))
    for j in range(n):
        step = np.zeros(n)
        step[j] = h
        jac[..., :, j] = (fn(x + step) - fn(x - step)) / (2.0 * h)
    return jac


def finite_difference_jacobian(field: ForceField, params, u, x: np.ndarray, h: float = FD_STEP) -> np.ndarray:
    """Central finite-difference Jacobian dF_i/dx_j."""
    x = np.asarray(x, dtype=float)
    return _central_columns(lambda s: field.force(params, u, s), x, h)


def jacobian(field: ForceField, params, u, x: np.ndarray) -> np.ndarray:
    """dF_i/dx_j at x, shape (N, N) or (B, N, N)."""
    x = np.asarray(x, dtype=float)
    _check_dims(field, params, u, x)
    jac = field.analytic_jacobian(params, u, x)
    if jac is None:
        jac = finite_difference_jacobian(field, params, u, x)
    return jac


def symmetric_part(J: np.ndarray) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    return 0.5 * (J + np.swapaxes(J, -1, -2))


def antisymmetric_part(J: np.ndarray) -> np.ndarray:
    J = np.asarray(J, dtype=float)
    if J.shape[-1] != J.shape[-2]:
        raise ConfigError(f"Expected a square matrix, got shape {J.shape}")
    return 0.5 * (J - np.swapaxes(J, -1, -2))
