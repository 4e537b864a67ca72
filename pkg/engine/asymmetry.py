"""
Non-Conservative Equilibrium Propagation Engine

Asymmetry metrics for coupling matrices and Jacobians.

    r_str = ||(J - J^T)/2||_F / ||J||_F             (in [0, 1])
    r_jac = ||J_off - J_off^T||_F / ||J_off||_F     (diagonal removed, no 1/2 factor)

The two ratios differ by the 1/2 factor: r_jac of a strictly
triangular matrix is sqrt(2) while its r_str is 1/sqrt(2).
"""

import numpy as np

from .errors import DegenerateMetric


def r_str_metric(J: np.ndarray) -> float:
    J = np.asarray(J, dtype=float)
    norm = np.linalg.norm(J)
    if norm == 0.0:
        raise DegenerateMetric("r_str undefined for the zero matrix")
    return float(np.linalg.norm(0.5 * (J - J.T)) / norm)


def r_jac_metric(J: np.ndarray) -> float:
    """Off-diagonal Jacobian asymmetry of a single (N, N) matrix."""
    J = np.array(J, dtype=float)
    np.fill_diagonal(J, 0.0)
    norm = np.linalg.norm(J)
    if norm == 0.0:
        raise DegenerateMetric("r_jac undefined when all off-diagonal entries are zero")
    return float(np.linalg.norm(J - J.T) / norm)


def mean_r_jac(jacobians: np.ndarray) -> float:
    """Mean r_jac over a stack (B, N, N) of Jacobians."""
    return float(np.mean([r_jac_metric(j) for j in np.asarray(jacobians)]))
