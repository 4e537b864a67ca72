"""
Non-Conservative Equilibrium Propagation Engine

Gradient oracle module - ground-truth gradients used to validate the learners.

At a stationary state F(x0, theta) = 0 the implicit function theorem gives

    -dC/dtheta = (dF/dtheta)^T w,   J_F(x0)^T w = dC/dx(x0)

exact_gradient() solves for w directly, bptt_gradient() sums the adjoint
recursion of the Euler map, finite_difference_gradient() re-relaxes per
parameter perturbation. vf_bias_prediction() predicts the VF error from the
Neumann expansion in K = S^-1 A.

All oracles work on single states and return GradientEstimate objects in the
same descent convention as the learners.
"""

from __future__ import annotations

import logging
import warnings
from typing import Callable, Dict, Optional

import numpy as np
from scipy import linalg
from scipy.sparse.linalg import LinearOperator, onenormest

from .cost import QuadraticCost
from .dynamics import (
    FD_STEP,
    ForceField,
    RelaxationConfig,
    antisymmetric_part,
    jacobian,
    relax,
    symmetric_part,
)
from .errors import ConfigError, OracleUnavailable, SeriesDivergence
from .learners import GradientEstimate

logger = logging.getLogger(__name__)

CONDITION_LIMIT = 1e12
CONDITION_WARN = 1e8
SOLVE_RESIDUAL_TOL = 1e-8


def _single(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ConfigError(f"Oracles work on single states, got shape {x.shape}")
    return x


def condition_estimate(lu_piv, J: np.ndarray) -> float:
    """1-norm condition number ||J||_1 * ||J^-1||_1 with the inverse norm estimated."""
    n = J.shape[0]
    inverse = LinearOperator(
        (n, n),
        matvec=lambda b: linalg.lu_solve(lu_piv, b),
        rmatvec=lambda b: linalg.lu_solve(lu_piv, b, trans=1),
        dtype=float,
    )
    return float(np.linalg.norm(J, 1) * onenormest(inverse))


def adjoint_state(J: np.ndarray, cost_grad: np.ndarray) -> np.ndarray:
    """Solve J^T w = cost_grad with a dense LU factorization."""
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu_piv = linalg.lu_factor(J)
        except (linalg.LinAlgWarning, ValueError) as exc:
            raise OracleUnavailable(f"Jacobian is singular: {exc}") from exc
    kappa = condition_estimate(lu_piv, J)
    if not np.isfinite(kappa) or kappa > CONDITION_LIMIT:
        raise OracleUnavailable(f"Jacobian condition number {kappa:.3e} exceeds {CONDITION_LIMIT:.0e}")
    if kappa > CONDITION_WARN:
        logger.warning(f"Ill-conditioned Jacobian (kappa_1 = {kappa:.3e})")
    w = linalg.lu_solve(lu_piv, cost_grad, trans=1)
    scale = max(np.linalg.norm(cost_grad), np.finfo(float).tiny)
    if np.linalg.norm(J.T @ w - cost_grad) / scale > SOLVE_RESIDUAL_TOL:
        raise OracleUnavailable("Adjoint solve residual too large")
    return w


def exact_gradient(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    x_free: np.ndarray,
) -> GradientEstimate:
    """Implicit-differentiation gradient at the converged state x_free."""
    x = _single(x_free)
    g = cost.grad(x)
    if not np.any(g):
        w = np.zeros_like(x)
    else:
        w = adjoint_state(jacobian(field_, params, u, x), g)
    grads = field_.presynaptic_transpose(params, x, u, w)
    return GradientEstimate(grads, "exact", None, {"adjoint": w})


def bptt_gradient(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    x_free: np.ndarray,
    K: int = 200,
    *,
    dt: float = 0.5,
    transpose: bool = True,
    decay_tol: float = 1e-6,
) -> GradientEstimate:
    """
    Backpropagation through K steps of the Euler map x -> x + dt F(x) at x_free.

        g(0) = dC/dx,  g(t) = M^T g(t-1),  M = I + dt J_F
        dC/dtheta = dt * sum_t (dF/dtheta)^T g(t-1)

    With transpose=False the recursion uses M instead of M^T, which is the
    recursion VF implicitly follows.
    """
    x = _single(x_free)
    g = cost.grad(x)
    M = np.eye(len(x)) + dt * jacobian(field_, params, u, x)
    step = M.T if transpose else M
    acc = np.zeros_like(x)
    start = float(np.linalg.norm(g))
    for _ in range(K):
        acc += dt * g
        g = step @ g
    end = float(np.linalg.norm(g))
    if not np.all(np.isfinite(acc)) or (start > 0 and end >= start):
        raise SeriesDivergence(f"BPTT recursion does not decay over {K} steps (|g| {start:.3e} -> {end:.3e})")
    if start > 0 and end > decay_tol * start:
        logger.warning(f"BPTT recursion only decayed to {end / start:.3e} after {K} steps")
    grads = field_.presynaptic_transpose(params, x, u, -acc)
    method = "bptt" if transpose else "bptt-vf"
    return GradientEstimate(grads, method, None, {"K": K, "tail_norm": end})


def vf_bias_prediction(
    J: np.ndarray,
    cost_grad: np.ndarray,
    presyn: Callable[[np.ndarray], Dict[str, np.ndarray]],
    order: int = 0,
) -> GradientEstimate:
    """
    Truncated Neumann prediction of (VF estimate - exact estimate).

        J^-1 - J^-T = -2 sum_{k=0..order} K^(2k+1) S^-1,   K = S^-1 A
    """
    J = np.asarray(J, dtype=float)
    S, A = symmetric_part(J), antisymmetric_part(J)
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            lu_piv = linalg.lu_factor(S)
        except (linalg.LinAlgWarning, ValueError) as exc:
            raise OracleUnavailable(f"Symmetric part is singular: {exc}") from exc
    K = linalg.lu_solve(lu_piv, A)
    radius = float(np.max(np.abs(linalg.eigvals(K))))
    if radius >= 1.0:
        raise SeriesDivergence(f"Spectral radius of S^-1 A is {radius:.3f} >= 1")

    term = K @ linalg.lu_solve(lu_piv, np.asarray(cost_grad, dtype=float))
    K2 = K @ K
    total = np.zeros_like(term)
    for _ in range(order + 1):
        total += term
        term = K2 @ term
    return GradientEstimate(presyn(-2.0 * total), "vf-bias", None,
                            {"order": order, "spectral_radius": radius})


def finite_difference_gradient(
    field_: ForceField,
    params,
    u,
    cost: QuadraticCost,
    x_start: np.ndarray,
    h: float = FD_STEP,
    residual_tol: float = 1e-12,
    relax_cfg: Optional[RelaxationConfig] = None,
) -> GradientEstimate:
    """
    Central differences of theta -> C(x0(theta)), re-relaxing from x_start per perturbation.

    Every group returned by params.groups() is perturbed entrywise.
    """
    x_start = _single(x_start)
    cfg = relax_cfg or RelaxationConfig(dt=0.5, max_steps=200_000, residual_tol=residual_tol, mode="tolerance")

    def cost_at(p) -> float:
        res = relax(field_, p, u, x_start, cfg)
        if not res.converged:
            raise OracleUnavailable(f"Probe relaxation did not converge (residual {res.final_residual:.3e})")
        return float(cost.value(res.state))

    grads: Dict[str, np.ndarray] = {}
    for name, value in params.groups().items():
        base = np.asarray(value, dtype=float)
        grad = np.zeros(base.shape)
        for idx in np.ndindex(base.shape):
            shifted = base.copy()
            shifted[idx] += h
            c_plus = cost_at(params.with_groups(**{name: shifted}))
            shifted[idx] -= 2.0 * h
            c_minus = cost_at(params.with_groups(**{name: shifted}))
            grad[idx] = -(c_plus - c_minus) / (2.0 * h)
        grads[name] = grad
    return GradientEstimate(grads, "finite-difference", None, {"h": h})
