import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import simulate_single, single_dataset
from sparsepor.core import D1, InvalidInputError, TargetParameter, TreatmentSpec
from sparsepor.dgp import DgpSpec, OutcomeNoise, gen_single_multivalued
from sparsepor.nuisance import (
    SignPattern,
    corrupt_nuisance,
    default_floor,
    empirical_nuisance,
    nuisance_error_norms,
    oracle_nuisance,
)


def test_oracle_uniform_propensity():
    ds, truth = simulate_single(5, 100, np.zeros(5))
    model = oracle_nuisance(truth, ds)
    x = np.random.default_rng(1).random((40, 1))
    for a in range(1, 6):
        assert np.allclose(model.pi(np.full(40, a), x), 0.2)


def test_oracle_regression_reproduces_noiseless_outcomes():
    ds, truth = simulate_single(6, 300, [0.3, 0, 0, -0.2, 0, 0], psi0=1.0, sigma=0.0,
                                confounding=0.4)
    assert np.allclose(oracle_nuisance(truth, ds).mu(ds.a, ds.x), ds.y)


def test_oracle_error_norms_zero():
    ds, truth = simulate_single(4, 50, np.zeros(4))
    norms = nuisance_error_norms(oracle_nuisance(truth, ds), truth, 2)
    assert (norms.delta, norms.eps) == (0.0, 0.0)


def test_empirical_level_mean():
    ds = single_dataset([1, 1, 2], [0.0, 1.0, 5.0], [1, 1, 2], 3)
    assert empirical_nuisance(ds, floor=0.01).mu(np.array([1]), np.zeros((1, 1)))[0] == 0.5


def test_empirical_fallback_and_floor():
    ds = single_dataset([1, 2, 3], [0.0, 1.0, 5.0], [1, 1, 2], 3)
    model = empirical_nuisance(ds, floor=0.01, fallback=0.25)
    x = np.zeros((1, 1))
    assert model.mu(np.array([3]), x)[0] == 0.25
    assert model.pi(np.array([3]), x)[0] == 0.01
    assert model.pi(np.array([1]), x)[0] == 0.5


def test_empirical_weight_ratio_bounded():
    ds = single_dataset([1, 1, 2], [0.0, 1.0, 5.0], [1, 1, 2], 2)
    model = empirical_nuisance(ds, floor=0.001)
    assert model.varpi.weights[1] / model.pi(np.array([2]), np.zeros((1, 1)))[0] == 0.0


def test_empirical_default_floor():
    ds = single_dataset([1, 2, 1, 2], [0.0, 1.0, 5.0, 2.0], [1, 1, 2, 2], 10)
    assert empirical_nuisance(ds).floor == default_floor(10, 4) == 1 / 400


def test_empirical_needs_d1():
    ds = single_dataset([1, 2], [0.0, 1.0], [2, 2], 2)
    with pytest.raises(InvalidInputError):
        empirical_nuisance(ds)


def test_corrupt_identity():
    ds, truth = simulate_single(4, 200, [0.1, 0, 0, 0], confounding=0.3)
    base = oracle_nuisance(truth, ds)
    same = corrupt_nuisance(base, 0.0, 0.0)
    assert np.array_equal(same.pi(ds.a, ds.x), base.pi(ds.a, ds.x))
    assert np.array_equal(same.mu(ds.a, ds.x), base.mu(ds.a, ds.x))


def test_corrupt_eps_norm_uniform_covariates():
    # q = sign(x_1 - 1/2) squares to 1 everywhere, so ||mu - mu_hat|| = eps exactly
    ds, truth = simulate_single(4, 50, np.zeros(4))
    norms = nuisance_error_norms(corrupt_nuisance(oracle_nuisance(truth, ds), 0.0, 0.3), truth, 1)
    assert norms.eps == pytest.approx(0.3, abs=1e-12) and norms.delta == 0.0


def test_corrupt_delta_norm():
    ds, truth = simulate_single(4, 50, np.zeros(4))
    norms = nuisance_error_norms(corrupt_nuisance(oracle_nuisance(truth, ds), 0.2, 0.0), truth, 3)
    assert norms.delta == pytest.approx(0.2, abs=1e-12) and norms.eps == 0.0


def test_corrupt_norms_monte_carlo():
    ds, truth = simulate_single(4, 50, np.zeros(4), d=2)
    model = corrupt_nuisance(oracle_nuisance(truth, ds), 0.1, 0.05)
    norms = nuisance_error_norms(model, truth, 2)
    assert abs(norms.delta - 0.1) <= 1e-3 and abs(norms.eps - 0.05) <= 1e-3


def test_corrupt_rejects_large_delta():
    ds, truth = simulate_single(4, 50, np.zeros(4))
    with pytest.raises(InvalidInputError):
        corrupt_nuisance(oracle_nuisance(truth, ds), 1.0, 0.0)


def test_empirical_constant_mu_error_is_mean_error():
    psi = np.array([0.3, -0.2, 0.0])
    ds, truth = simulate_single(3, 600, psi, psi0=1.0, seed=5)
    model = empirical_nuisance(ds)
    for a in (1, 2, 3):
        part = ds.fold_part(D1)
        direct = abs(part.y[part.a == a].mean() - (1.0 + psi[a - 1]))
        assert nuisance_error_norms(model, truth, a).eps == pytest.approx(direct, abs=1e-12)


def test_error_norms_gaussian_quadrature_matches_monte_carlo():
    spec = DgpSpec(TreatmentSpec("single", 3), 50, TargetParameter(0, np.zeros(3)),
                   covariates="gaussian")
    ds, truth = gen_single_multivalued(spec)
    model = corrupt_nuisance(oracle_nuisance(truth, ds), 0.3, 0.2, law=truth.covariates)
    quad = nuisance_error_norms(model, truth, 1)
    mc = nuisance_error_norms(model, truth, 1, quadrature=False)
    assert quad.delta == pytest.approx(0.3, abs=1e-9) and quad.eps == pytest.approx(0.2, abs=1e-9)
    assert abs(mc.delta - 0.3) < 4 * mc.delta_se + 1e-12


class _ModelAsTruth:
    """Presents a nuisance model through the truth interface."""

    def __init__(self, model, truth):
        self.model, self.truth = model, truth
        self.spec, self.d, self.covariates = truth.spec, truth.d, truth.covariates

    def pi(self, a, x):
        return self.model.pi(a, x)

    def mu(self, a, x):
        return self.model.mu(a, x)

    def sample_x(self, n, rng):
        return self.truth.sample_x(n, rng)


def test_mu_norm_symmetry():
    ds, truth = simulate_single(4, 400, [0.2, 0, 0, 0], seed=2)
    model = empirical_nuisance(ds)
    fwd = nuisance_error_norms(model, truth, 1)
    rev = nuisance_error_norms(oracle_nuisance(truth, ds), _ModelAsTruth(model, truth), 1)
    assert fwd.eps == pytest.approx(rev.eps, abs=1e-12)


@given(st.floats(0.0, 0.95), st.floats(0.0, 1.0), st.floats(1e-4, 0.3))
@settings(max_examples=40, deadline=None)
def test_floor_respected(delta, eps, floor):
    ds, truth = simulate_single(8, 64, np.zeros(8), seed=1)
    base = oracle_nuisance(truth, ds, floor=floor)
    for model in (base, corrupt_nuisance(base, delta, eps), empirical_nuisance(ds, floor=floor)):
        a = np.repeat(np.arange(1, 9), 8)
        x = np.random.default_rng(0).random((a.size, 1))
        assert np.all(model.pi(a, x) >= floor)


def test_mu_mean_fast_paths_match_generic():
    ds, truth = simulate_single(5, 300, [0.2, 0, -0.1, 0, 0], confounding=0.3, seed=9)
    levels = np.arange(1, 6)
    models = [oracle_nuisance(truth, ds), empirical_nuisance(ds),
              corrupt_nuisance(oracle_nuisance(truth, ds), 0.2, 0.3),
              corrupt_nuisance(oracle_nuisance(truth, ds), 0.2, 0.3,
                               q=SignPattern(level_signs=np.array([1, -1, 1, -1, 1])))]
    for m in models:
        generic = np.array([m.mu(np.full(ds.n, a), ds.x).mean() for a in levels])
        assert np.allclose(m.mu_mean(levels, ds.x), generic, atol=1e-12)


def test_vector_models():
    psi = np.array([0.5, 0.0, -0.25])
    spec = DgpSpec(TreatmentSpec("vector", 3), 500, TargetParameter(0.1, psi),
                   noise=OutcomeNoise.gaussian(0.0), seed=8)
    from sparsepor.dgp import gen_binary_vector

    ds, truth = gen_binary_vector(spec)
    emp = empirical_nuisance(ds)
    # noiseless: the empirical mean of each observed combination is exact
    lev = emp.varpi.levels
    assert np.allclose(emp.mu(lev, np.zeros((len(lev), 1))), 0.1 + lev @ psi)
    assert np.allclose(oracle_nuisance(truth, ds).pi(lev, np.zeros((len(lev), 1))), 1 / 8)
    assert np.allclose(emp.mu_mean(lev, ds.x), 0.1 + lev @ psi)
