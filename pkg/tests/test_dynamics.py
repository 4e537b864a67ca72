#run test with: 'pytest tests/test_dynamics.py -s'

import numpy as np
import pytest

from engine.dynamics import (
    RelaxationConfig,
    antisymmetric_part,
    finite_difference_jacobian,
    jacobian,
    relax,
    symmetric_part,
)
from engine.errors import ConfigError, DivergenceError
from engine.hopfield import hopfield_jacobian
from engine.linear import LinearField, LinearParams


def _stable_linear(n=3):
    return LinearParams(M=-np.eye(n), c=np.arange(1.0, n + 1))


def test_config_rejects_bad_values():
    with pytest.raises(ConfigError):
        RelaxationConfig(dt=0.0)
    with pytest.raises(ConfigError):
        RelaxationConfig(max_steps=0)
    with pytest.raises(ConfigError):
        RelaxationConfig(mode="adaptive")
    with pytest.raises(ConfigError):
        RelaxationConfig(residual_tol=-1.0)


def test_fixed_mode_runs_exact_step_count():
    res = relax(LinearField(), _stable_linear(), None, np.zeros(3), RelaxationConfig(dt=0.5, max_steps=7))
    assert res.steps_taken == 7
    assert res.converged
    # x_k = c (1 - 0.5^k)
    np.testing.assert_allclose(res.state, np.arange(1.0, 4.0) * (1 - 0.5 ** 7))


def test_tolerance_mode_reaches_fixed_point():
    cfg = RelaxationConfig(dt=0.5, max_steps=1000, residual_tol=1e-12, mode="tolerance")
    res = relax(LinearField(), _stable_linear(), None, np.zeros(3), cfg)
    assert res.converged
    assert res.final_residual <= 1e-12
    np.testing.assert_allclose(res.state, [1.0, 2.0, 3.0], atol=1e-11)


def test_start_at_fixed_point_takes_zero_steps():
    cfg = RelaxationConfig(dt=0.5, max_steps=10, residual_tol=1e-12, mode="first")
    res = relax(LinearField(), _stable_linear(), None, np.array([1.0, 2.0, 3.0]), cfg)
    assert res.steps_taken == 0
    assert res.converged


def test_divergence_raises_for_single_state():
    params = LinearParams(M=np.eye(2), c=np.zeros(2))
    with pytest.raises(DivergenceError) as err:
        relax(LinearField(), params, None, np.ones(2), RelaxationConfig(dt=0.5, max_steps=200))
    assert err.value.step is not None


def test_batched_divergence_is_flagged_per_row():
    params = LinearParams(M=np.eye(2), c=np.zeros(2))
    x0 = np.array([[0.0, 0.0], [1.0, 1.0]])
    res = relax(LinearField(), params, None, x0, RelaxationConfig(dt=0.5, max_steps=200), on_divergence="flag")
    assert res.diverged.tolist() == [False, True]
    assert res.n_diverged == 1
    assert np.all(res.state[1] == 0.0)


def test_dimension_and_finiteness_checks():
    with pytest.raises(ConfigError):
        relax(LinearField(), _stable_linear(), None, np.zeros(4), RelaxationConfig())
    with pytest.raises(ConfigError):
        relax(LinearField(), _stable_linear(), None, np.array([0.0, np.nan, 0.0]), RelaxationConfig())


def test_newton_solves_rotational_system():
    M = np.array([[0.0, 2.0, 0.0, 0.0], [-2.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0], [0.0, 0.0, -1.0, 0.0]])
    params = LinearParams(M=M, c=np.array([1.0, -1.0, 0.5, 2.0]))
    cfg = RelaxationConfig(max_steps=20, residual_tol=1e-12, mode="newton")
    res = relax(LinearField(), params, None, np.zeros(4), cfg)
    assert res.converged
    np.testing.assert_allclose(M @ res.state + params.c, 0.0, atol=1e-12)


def test_newton_rejects_batches():
    cfg = RelaxationConfig(max_steps=5, residual_tol=1e-12, mode="newton")
    with pytest.raises(ConfigError):
        relax(LinearField(), _stable_linear(), None, np.zeros((2, 3)), cfg)


def test_finite_difference_jacobian_matches_analytic(asymmetric_problem):
    field, params, u, _, x_free = asymmetric_problem
    x = x_free + 0.1
    np.testing.assert_allclose(finite_difference_jacobian(field, params, u, x),
                               hopfield_jacobian(params, u, x), atol=1e-8)


def test_jacobian_batched_shape(asymmetric_problem):
    field, params, u, _, x_free = asymmetric_problem
    xs = np.stack([x_free, x_free + 0.2])
    assert jacobian(field, params, u, xs).shape == (2, params.n_dyn, params.n_dyn)


def test_default_vjp_uses_transpose():
    params = LinearParams(M=np.array([[1.0, 2.0], [3.0, 4.0]]), c=np.zeros(2))
    v = np.array([1.0, -1.0])
    np.testing.assert_allclose(LinearField().vjp(params, None, np.zeros(2), v), params.M.T @ v)


def test_symmetric_antisymmetric_split(rng):
    J = rng.normal(size=(4, 4))
    S, A = symmetric_part(J), antisymmetric_part(J)
    np.testing.assert_allclose(S + A, J)
    np.testing.assert_allclose(S, S.T)
    np.testing.assert_allclose(A, -A.T)
    with pytest.raises(ConfigError):
        antisymmetric_part(np.zeros((2, 3)))


def test_finite_difference_jacobian_error_is_second_order(asymmetric_problem):
    field, params, u, _, x_free = asymmetric_problem
    x = x_free + 0.1
    exact = hopfield_jacobian(params, u, x)
    errors = [np.linalg.norm(finite_difference_jacobian(field, params, u, x, h=h) - exact)
              for h in (1e-2, 5e-3)]
    assert 3.5 < errors[0] / errors[1] < 4.5
