import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import constant_model, simulate_single, single_dataset
from sparsepor.core import D2, InvalidInputError, TargetParameter, TreatmentSpec
from sparsepor.dgp import DgpSpec, gen_binary_vector
from sparsepor.nuisance import empirical_nuisance
from sparsepor.pseudo import pseudo_outcome, scaled_pseudo_outcomes
from sparsepor.risk import RiskQuadratic, assemble, assemble_alternative, evaluate


def single_risk_direct(ds, model, psi0, beta):
    """Literal per-observation average of the single-treatment risk."""
    part = ds.fold_part(D2)
    k = ds.spec.k
    w = model.varpi.weights
    total = 0.0
    for i in range(part.n):
        term = k * beta[part.a[i] - 1] ** 2
        for a in range(1, k + 1):
            if w[a - 1] == 0:
                continue
            phi = pseudo_outcome(part.y[i:i + 1], part.a[i:i + 1], part.x[i:i + 1], a, model,
                                 psi0)[0]
            term -= 2 * k * phi * beta[a - 1] * w[a - 1]
        total += term
    return total / part.n


def vector_risk_direct(ds, model, psi0, beta):
    part = ds.fold_part(D2)
    props = model.varpi
    total = 0.0
    for i in range(part.n):
        ai = part.a[i].astype(float)
        term = (ai @ beta) ** 2
        for lev, w in zip(props.levels, props.weights):
            if w == 0:
                continue
            phi = pseudo_outcome(part.y[i:i + 1], part.a[i:i + 1], part.x[i:i + 1], lev, model,
                                 psi0)[0]
            term -= 2 * phi * w * (lev @ beta)
        total += term
    return total / part.n


def test_gram_one_observation_per_level():
    ds = single_dataset([1, 2, 1, 2], [0.0, 1.0, 2.0, 3.0], [1, 1, 2, 2], 2)
    risk = assemble(scaled_pseudo_outcomes(ds, empirical_nuisance(ds), 0.0))
    assert np.allclose(risk.diag, [1.0, 1.0])


def test_linear_term_hand_computed():
    # D1 has one of each level, so the proportions are (1/2, 1/2)
    ds = single_dataset([1, 2, 1, 1], [0.0, 1.0, 2.0, 4.0], [1, 1, 2, 2], 2)
    model = constant_model(ds, [0.5, 0.5], [1.0, 1.0])
    table = scaled_pseudo_outcomes(ds, model, 0.0)
    # level 1 pseudo-outcomes over D2: (2-1)/0.5+1 = 3, (4-1)/0.5+1 = 7; level 2: 1, 1
    assert np.allclose(table.level_means(), [5.0, 1.0])
    assert np.allclose(assemble(table).b, [5.0, 1.0])


def test_absent_level_has_zero_linear_term():
    ds = single_dataset([1, 2, 1, 3], [0.0, 1.0, 2.0, 4.0], [1, 1, 2, 2], 3)
    risk = assemble(scaled_pseudo_outcomes(ds, empirical_nuisance(ds, floor=0.01), 0.0))
    assert risk.b[2] == 0.0


def test_vector_all_zero_treatments():
    a = np.zeros((6, 3), dtype=np.int64)
    from sparsepor.core import Dataset

    ds = Dataset(TreatmentSpec("vector", 3), np.linspace(0, 1, 6), a, np.arange(6.0),
                 np.array([1, 1, 1, 2, 2, 2]))
    risk = assemble(scaled_pseudo_outcomes(ds, empirical_nuisance(ds, floor=0.01), 0.0))
    assert np.all(risk.dense_gram() == 0) and np.all(risk.b == 0)


def test_vector_single_combination():
    a = np.array([[1, 0, 0]] * 3 + [[0, 1, 0]] * 3)
    from sparsepor.core import Dataset

    ds = Dataset(TreatmentSpec("vector", 3), np.linspace(0, 1, 6), a, np.arange(6.0),
                 np.array([1, 1, 1, 2, 2, 2]))
    model = empirical_nuisance(ds, floor=0.01)
    table = scaled_pseudo_outcomes(ds, model, 0.0)
    risk = assemble(table)
    assert np.allclose(risk.b, [table.level_means()[0], 0, 0])


@pytest.mark.parametrize("seed", range(3))
def test_single_risk_matches_direct_average(seed):
    ds, _ = simulate_single(6, 40, [0.5, 0, -0.2, 0, 0, 0], psi0=0.2, seed=seed)
    model = empirical_nuisance(ds)
    risk = assemble(scaled_pseudo_outcomes(ds, model, 0.2))
    rng = np.random.default_rng(seed)
    for _ in range(20):
        beta = rng.normal(size=6)
        assert evaluate(risk, beta) == pytest.approx(single_risk_direct(ds, model, 0.2, beta),
                                                     abs=1e-9)


def test_vector_risk_matches_direct_average():
    ds, _ = gen_binary_vector(DgpSpec(TreatmentSpec("vector", 3), 6,
                                      TargetParameter(0.1, np.array([1.0, 0, 0])), seed=3))
    model = empirical_nuisance(ds)
    risk = assemble(scaled_pseudo_outcomes(ds, model, 0.1))
    rng = np.random.default_rng(0)
    for _ in range(20):
        beta = rng.normal(size=3)
        assert evaluate(risk, beta) == pytest.approx(vector_risk_direct(ds, model, 0.1, beta),
                                                     abs=1e-10)


@given(st.integers(2, 20), st.integers(10, 50), st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_single_risk_direct_property(k, n, seed):
    ds, _ = simulate_single(k, n, np.zeros(k), seed=seed)
    model = empirical_nuisance(ds, fallback=0.0)
    risk = assemble(scaled_pseudo_outcomes(ds, model, 0.0))
    beta = np.random.default_rng(seed).normal(size=k)
    assert evaluate(risk, beta) == pytest.approx(single_risk_direct(ds, model, 0.0, beta),
                                                 rel=1e-9, abs=1e-9)


@given(st.integers(2, 8), st.integers(0, 1000))
@settings(max_examples=20, deadline=None)
def test_vector_gram_psd(k, seed):
    ds, _ = gen_binary_vector(DgpSpec(TreatmentSpec("vector", k), 40,
                                      TargetParameter(0, np.zeros(k)), seed=seed))
    gram = assemble(scaled_pseudo_outcomes(ds, empirical_nuisance(ds), 0.0)).dense_gram()
    assert np.linalg.eigvalsh(gram).min() >= -1e-10


def test_implicit_design_matches_dense():
    rng = np.random.default_rng(1)
    a = rng.integers(0, 2, size=(30, 5)).astype(float)
    b = rng.normal(size=5)
    dense = RiskQuadratic(b, gram=a.T @ a / 30)
    implicit = RiskQuadratic(b, design=a)
    beta = rng.normal(size=5)
    assert evaluate(dense, beta) == pytest.approx(evaluate(implicit, beta), abs=1e-12)
    assert np.allclose(dense.gradient(beta), implicit.gradient(beta))


def test_evaluate_examples():
    assert evaluate(RiskQuadratic(np.zeros(3), diag=np.ones(3)), np.zeros(3)) == 0.0
    assert evaluate(RiskQuadratic(np.zeros(2), gram=np.eye(2)), np.array([1.0, 0])) == 1.0
    assert evaluate(RiskQuadratic(np.array([3.0]), diag=np.array([2.0])), np.array([1.0])) == -4.0
    with pytest.raises(InvalidInputError):
        evaluate(RiskQuadratic(np.zeros(2), diag=np.ones(2)), np.zeros(3))


def _alt_dataset():
    ds = single_dataset([1, 2, 3, 1, 2, 3, 1, 3], [0.5, 1.0, -1.0, 2.0, 0.3, 1.1, -0.4, 0.9],
                        [1, 1, 1, 2, 2, 2, 2, 2], 3)
    return ds, constant_model(ds, [0.3, 0.3, 0.4], [0.2, 0.5, -0.1])


def test_alternative_risk_matches_double_sum():
    ds, model = _alt_dataset()
    table = scaled_pseudo_outcomes(ds, model, 0.1, all_levels=True)
    w = np.array([0.5, 1.5, 2.0])
    alt = assemble_alternative(table, w)
    part = ds.fold_part(D2)
    rng = np.random.default_rng(2)
    for _ in range(10):
        beta = rng.normal(size=3)
        direct = 0.0
        for i in range(part.n):
            for a in range(1, 4):
                phi = pseudo_outcome(part.y[i:i + 1], part.a[i:i + 1], part.x[i:i + 1], a,
                                     model, 0.1)[0]
                direct += w[a - 1] * (phi - beta[a - 1]) ** 2
        assert evaluate(alt.risk, beta) == pytest.approx(direct / part.n, abs=1e-12)


def test_alternative_unit_weights_minimized_at_means():
    ds, model = _alt_dataset()
    alt = assemble_alternative(scaled_pseudo_outcomes(ds, model, 0.0, all_levels=True), 1.0)
    assert np.allclose(alt.risk.gradient(alt.means), 0.0, atol=1e-12)


def test_alternative_degenerate_weights():
    ds, model = _alt_dataset()
    alt = assemble_alternative(scaled_pseudo_outcomes(ds, model, 0.0, all_levels=True),
                               np.array([1.0, 0.0, 1.0]))
    assert list(alt.degenerate) == [False, True, False]


def test_alternative_needs_all_levels():
    ds = single_dataset([1, 1, 3, 1], [0.0, 1.0, 2.0, 4.0], [1, 1, 2, 2], 3)
    model = empirical_nuisance(ds, floor=0.01)
    with pytest.raises(InvalidInputError):
        assemble_alternative(scaled_pseudo_outcomes(ds, model, 0.0), 1.0)
