import numpy as np
import pytest

from engine.checks import free_equilibrium
from engine.cost import QuadraticCost
from engine.dynamics import RelaxationConfig, relax
from engine.errors import OracleUnavailable, SeriesDivergence
from engine.fixed_ratio import FixedRatioField, fixed_ratio_init
from engine.learners import GradientEstimate, NudgeConfig, vf_update
from engine.linear import LinearField, LinearParams
from engine.oracle import (
    bptt_gradient,
    exact_gradient,
    finite_difference_gradient,
    vf_bias_prediction,
)

PROBE = RelaxationConfig(dt=0.5, max_steps=200_000, residual_tol=1e-13, mode="tolerance")


def test_exact_gradient_matches_finite_differences(asymmetric_problem):
    field, params, u, cost, x_free = asymmetric_problem
    exact = exact_gradient(field, params, u, cost, x_free)
    fd = finite_difference_gradient(field, params, u, cost, x_free, h=1e-5, relax_cfg=PROBE)
    assert fd.method == "finite-difference"
    assert exact.relative_error(fd) < 1e-4


def test_exact_gradient_matches_finite_differences_fixed_ratio():
    rng = np.random.default_rng(17)
    field = FixedRatioField()
    p = fixed_ratio_init(5, 0.5, 0.5, rng_seed=9, n_in=3)
    p = p.with_groups(J_in=rng.normal(0, 0.5, size=(5, 3)), gamma=0.6)
    u = rng.normal(size=3)
    cost = QuadraticCost(np.array([1.0, -1.0]))
    x_free = free_equilibrium(field, p, u, 5)

    exact = exact_gradient(field, p, u, cost, x_free)
    fd = finite_difference_gradient(field, p, u, cost, x_free, h=1e-5, relax_cfg=PROBE)
    assert set(exact.grads) == {"J_in", "xi", "theta_S", "theta_A", "gamma"}
    assert exact.relative_error(fd) < 1e-4


def test_zero_cost_gradient_gives_zero_estimate():
    params = LinearParams(M=-np.eye(2), c=np.array([0.0, 1.0]))
    est = exact_gradient(LinearField(), params, None, QuadraticCost(np.array([1.0])), np.array([0.0, 1.0]))
    assert est.norm() == 0.0


@pytest.mark.parametrize("M", [np.zeros((2, 2)), np.diag([1.0, 1e-14])])
def test_singular_or_ill_conditioned_jacobian_is_refused(M):
    params = LinearParams(M=M, c=np.zeros(2))
    with pytest.raises(OracleUnavailable):
        exact_gradient(LinearField(), params, None, QuadraticCost(np.array([1.0, 1.0])), np.zeros(2))


def test_exact_gradient_rejects_batched_state(asymmetric_problem):
    field, params, u, cost, x_free = asymmetric_problem
    with pytest.raises(ValueError):
        exact_gradient(field, params, u, cost, np.stack([x_free, x_free]))


def test_bptt_converges_to_exact(asymmetric_problem):
    field, params, u, cost, x_free = asymmetric_problem
    exact = exact_gradient(field, params, u, cost, x_free)
    bptt = bptt_gradient(field, params, u, cost, x_free, K=400)
    assert bptt.relative_error(exact) < 1e-8
    assert bptt.diagnostics["tail_norm"] < 1e-6


def test_untransposed_bptt_follows_vf(asymmetric_problem, tight):
    field, params, u, cost, x_free = asymmetric_problem
    vf = vf_update(field, params, u, cost, NudgeConfig(1e-3, tight), x_free)
    bptt_vf = bptt_gradient(field, params, u, cost, x_free, K=400, transpose=False)
    assert bptt_vf.method == "bptt-vf"
    assert vf.relative_error(bptt_vf) < 1e-3


def test_bptt_refuses_unstable_recursion():
    params = LinearParams(M=0.1 * np.eye(2), c=np.zeros(2))
    with pytest.raises(SeriesDivergence):
        bptt_gradient(LinearField(), params, None, QuadraticCost(np.array([1.0])), np.zeros(2), K=50)


def _rotational(rng, norm):
    B = rng.normal(size=(4, 4))
    B = B - B.T
    return norm * B / np.linalg.norm(B, 2)


@pytest.mark.parametrize("order,tol", [(0, 0.15), (5, 1e-3)])
def test_vf_bias_prediction_matches_true_difference(order, tol):
    rng = np.random.default_rng(8)
    M = -np.eye(4) + _rotational(rng, 0.3)
    params = LinearParams(M=M, c=np.zeros(4))
    field = LinearField()
    x = rng.normal(size=4)
    g = rng.normal(size=4)

    def presyn(v):
        return field.presynaptic_transpose(params, x, None, v)

    pred = vf_bias_prediction(M, g, presyn, order=order)
    truth = presyn(np.linalg.solve(M, g) - np.linalg.solve(M.T, g))
    diff = np.sqrt(sum(np.sum((pred.grads[k] - truth[k]) ** 2) for k in truth))
    scale = np.sqrt(sum(np.sum(truth[k] ** 2) for k in truth))
    assert diff / scale < tol
    assert pred.diagnostics["spectral_radius"] == pytest.approx(0.3, rel=1e-8)


def test_vf_bias_prediction_needs_convergent_series():
    rng = np.random.default_rng(8)
    M = -np.eye(4) + _rotational(rng, 2.0)
    with pytest.raises(SeriesDivergence):
        vf_bias_prediction(M, np.ones(4), lambda v: {"v": v})


@pytest.mark.parametrize("strength", [0.05, 0.1])
def test_measured_vf_bias_follows_prediction(strength):
    rng = np.random.default_rng(12)
    M = -np.eye(4) + _rotational(rng, strength)
    params = LinearParams(M=M, c=rng.normal(size=4))
    field = LinearField()
    cost = QuadraticCost(np.array([1.0, -1.0]))
    newton = RelaxationConfig(max_steps=50, residual_tol=1e-12, mode="newton")
    x_free = relax(field, params, None, np.zeros(4), newton).state

    exact = exact_gradient(field, params, None, cost, x_free)
    vf = vf_update(field, params, None, cost, NudgeConfig(1e-4, newton), x_free)
    measured = vf - exact
    predicted = vf_bias_prediction(M, cost.grad(x_free),
                                   lambda v: field.presynaptic_transpose(params, x_free, None, v))
    assert predicted.relative_error(measured) < 0.1
    assert predicted.cosine_similarity(measured) > 0.99


def test_vf_bias_prediction_improves_with_each_order():
    rng = np.random.default_rng(8)
    M = -np.eye(4) + _rotational(rng, 0.3)
    params = LinearParams(M=M, c=np.zeros(4))
    field = LinearField()
    x = rng.normal(size=4)
    g = rng.normal(size=4)

    def presyn(v):
        return field.presynaptic_transpose(params, x, None, v)

    truth = GradientEstimate(presyn(np.linalg.solve(M, g) - np.linalg.solve(M.T, g)), "truth")
    errors = [vf_bias_prediction(M, g, presyn, order=n).relative_error(truth) for n in (0, 1, 2)]
    assert errors[0] > errors[1] > errors[2]
