import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsepor.core import EstimatorConfig, InvalidInputError
from sparsepor.risk import RiskQuadratic, evaluate
from sparsepor.solver import (
    brute_force_oracle,
    hard_threshold_estimator,
    kkt_residual,
    project_l1_ball,
    soft_threshold_estimator,
    solve_best_subset,
    solve_lasso_constrained,
    solve_lasso_penalized,
    solve_plugin_mean,
)


def random_dense(k, seed, rank=None):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(rank or 2 * k, k))
    return RiskQuadratic(rng.normal(size=k), gram=a.T @ a / a.shape[0])


def test_projection_example():
    assert np.allclose(project_l1_ball([3.0, 1.0], 2.0), [2.0, 0.0])


def test_projection_matches_grid():
    # projection is the lasso with G = I and b = v
    v = np.array([0.9, -1.7, 0.4])
    grid = brute_force_oracle(RiskQuadratic(v, gram=np.eye(3)), "l1", 1.5, grid_step=1e-3)
    assert np.allclose(project_l1_ball(v, 1.5), grid.beta, atol=2e-3)


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=30), st.floats(0, 40))
@settings(max_examples=100, deadline=None)
def test_projection_properties(v, radius):
    p = project_l1_ball(v, radius)
    assert np.abs(p).sum() <= radius + 1e-9
    assert np.allclose(project_l1_ball(p, radius), p, atol=1e-9)
    if np.abs(v).sum() <= radius:
        assert np.array_equal(p, np.asarray(v, float))


def test_diagonal_lasso_example():
    risk = RiskQuadratic(np.array([6.0, 2.0]), diag=np.array([2.0, 2.0]))
    sol = solve_lasso_constrained(risk, 2.0)
    assert np.allclose(sol.beta, [2.0, 0.0]) and sol.exact


def test_diagonal_lasso_zero_gram_coordinate():
    risk = RiskQuadratic(np.array([1.0, 1.0]), diag=np.array([0.0, 1.0]))
    sol = solve_lasso_constrained(risk, 1.0)
    oracle = brute_force_oracle(risk, "l1", 1.0)
    assert np.allclose(sol.beta, [1.0, 0.0]) and sol.objective <= oracle.objective + 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_dense_lasso_matches_grid_oracle(seed):
    risk = random_dense(3, seed)
    s = 0.8
    sol = solve_lasso_constrained(risk, s)
    oracle = brute_force_oracle(risk, "l1", s, grid_step=1e-3)
    assert sol.converged and np.abs(sol.beta).sum() <= s + 1e-9
    assert sol.objective <= oracle.objective + 1e-9
    assert np.allclose(sol.beta, oracle.beta, atol=5e-3)


@pytest.mark.parametrize("seed", range(5))
def test_diagonal_exact_matches_dense_solver(seed):
    rng = np.random.default_rng(seed)
    g, b = rng.uniform(0.1, 3, 12), rng.normal(size=12)
    s = 1.3
    exact = solve_lasso_constrained(RiskQuadratic(b, diag=g), s)
    dense = solve_lasso_constrained(RiskQuadratic(b, gram=np.diag(g)), s)
    assert np.allclose(exact.beta, dense.beta, atol=1e-7)


@given(st.integers(2, 15), st.integers(0, 10_000), st.floats(0.01, 5))
@settings(max_examples=40, deadline=None)
def test_lasso_properties(k, seed, s):
    risk = random_dense(k, seed, rank=max(1, k // 2))
    sol = solve_lasso_constrained(risk, s)
    assert np.abs(sol.beta).sum() <= s + 1e-8
    assert sol.objective <= 1e-12  # zero is feasible
    assert kkt_residual(risk, sol.beta, s) <= 1e-7
    bigger = solve_lasso_constrained(risk, 2 * s)
    assert bigger.objective <= sol.objective + 1e-8


def test_lasso_large_budget_is_unconstrained():
    risk = random_dense(5, 1)
    plug = solve_plugin_mean(risk)
    sol = solve_lasso_constrained(risk, np.abs(plug.beta).sum() + 1)
    assert np.allclose(sol.beta, plug.beta, atol=1e-6)


def test_lasso_zero_budget():
    assert np.all(solve_lasso_constrained(random_dense(4, 0), 0).beta == 0)
    with pytest.raises(InvalidInputError):
        solve_lasso_constrained(random_dense(4, 0), -1)


def test_penalized_matches_soft_threshold():
    m = np.array([3.0, -0.5, 1.0, -2.5])
    risk = RiskQuadratic(m / 2, diag=np.full(4, 0.5))
    for lam in (0.0, 0.7, 1.0, 4.0):
        assert np.allclose(solve_lasso_penalized(risk, lam).beta, soft_threshold_estimator(m, lam))


def test_penalized_dense_matches_diagonal():
    rng = np.random.default_rng(3)
    g, b = rng.uniform(0.2, 2, 6), rng.normal(size=6)
    diag = solve_lasso_penalized(RiskQuadratic(b, diag=g), 0.4)
    dense = solve_lasso_penalized(RiskQuadratic(b, gram=np.diag(g)), 0.4)
    assert np.allclose(diag.beta, dense.beta, atol=1e-7)


def test_threshold_examples():
    m = np.array([3.0, -0.5, 1.0])
    assert np.allclose(soft_threshold_estimator(m, 1.0), [2.0, 0.0, 0.0])
    assert np.allclose(hard_threshold_estimator(m, 1.0), [3.0, 0.0, 0.0])
    assert np.array_equal(soft_threshold_estimator(m, 0.0), m)
    with pytest.raises(InvalidInputError):
        hard_threshold_estimator(m, -1.0)


def test_best_subset_diagonal_example():
    risk = RiskQuadratic(np.array([3.0, 2.0, 2.0]), diag=np.array([1.0, 1.0, 4.0]))
    assert np.allclose(solve_best_subset(risk, 1).beta, [3.0, 0.0, 0.0])


@pytest.mark.parametrize("seed", range(4))
def test_exhaustive_matches_enumeration_oracle(seed):
    risk = random_dense(7, seed)
    for s in (1, 2, 3):
        sol = solve_best_subset(risk, s, mode="exhaustive")
        oracle = brute_force_oracle(risk, "l0", s)
        assert sol.objective == pytest.approx(oracle.objective, abs=1e-10)
        assert np.count_nonzero(sol.beta) <= s


@given(st.integers(2, 10), st.integers(0, 10_000), st.integers(0, 10))
@settings(max_examples=40, deadline=None)
def test_diagonal_subset_matches_exhaustive(k, seed, s):
    rng = np.random.default_rng(seed)
    g, b = rng.uniform(0.1, 3, k), rng.normal(size=k)
    exact = solve_best_subset(RiskQuadratic(b, diag=g), s)
    exhaustive = solve_best_subset(RiskQuadratic(b, gram=np.diag(g)), s, mode="exhaustive")
    assert exact.objective == pytest.approx(exhaustive.objective, abs=1e-10)


def test_greedy_flagged_heuristic():
    sol = solve_best_subset(random_dense(6, 2), 2, mode="greedy")
    assert sol.heuristic and not sol.exact and np.count_nonzero(sol.beta) <= 2


def test_exhaustive_budget_refusal():
    with pytest.raises(InvalidInputError):
        solve_best_subset(random_dense(30, 0), 10, mode="exhaustive")


def test_exact_diagonal_needs_diagonal():
    with pytest.raises(InvalidInputError):
        solve_best_subset(random_dense(4, 0), 1, EstimatorConfig(subset_mode="exact_diagonal"))


def test_plugin_mean_diagonal():
    risk = RiskQuadratic(np.array([2.0, 1.0, 5.0]), diag=np.array([4.0, 0.0, 1.0]))
    sol = solve_plugin_mean(risk)
    assert np.allclose(sol.beta, [0.5, 0.0, 5.0])
    assert sol.objective == pytest.approx(evaluate(risk, sol.beta))


def test_iteration_cap_reported_not_converged():
    risk = random_dense(40, 5, rank=10)
    sol = solve_lasso_constrained(risk, 3.0, EstimatorConfig(max_iters=3, solver_tol=1e-14))
    assert not sol.converged and sol.iterations <= 3
