import csv

import numpy as np
import pytest

from sparsepor.core import EstimatorConfig, InvalidInputError, TargetParameter, TreatmentSpec
from sparsepor.dgp import DgpSpec, OutcomeNoise, generate
from sparsepor.harness import (
    ExperimentSpec,
    ReplicationRecord,
    SweepPoint,
    cross_validate_s,
    cv_folds,
    replication_seed,
    run_experiment,
    run_replication,
    summarize,
    write_report,
)
from sparsepor.nuisance import oracle_nuisance


def small_spec(**kw):
    base = dict(sweep=(SweepPoint(400, 8, 2), SweepPoint(800, 8, 2)), replications=3,
                base_seed=7, amplitude=0.5, estimator=EstimatorConfig("lasso", 1.0))
    base.update(kw)
    return ExperimentSpec(**base)


def test_seed_injective_over_sweep():
    seeds = {replication_seed(123, p, r) for p in range(40) for r in range(500)}
    assert len(seeds) == 40 * 500


def test_replication_is_deterministic():
    spec = small_spec()
    assert run_replication(spec, 1, 2) == run_replication(spec, 1, 2)


def test_report_independent_of_worker_count():
    spec = small_spec()
    one, two = run_experiment(spec, 1), run_experiment(spec, 2)
    assert one.records == two.records and one.summaries == two.summaries


def test_single_replication_report_equals_record():
    spec = small_spec(replications=1, sweep=(SweepPoint(400, 8, 2),))
    report = run_experiment(spec)
    rec = report.records[0]
    assert report.summaries[0].mean == rec.metrics
    assert all(v == 0.0 for v in report.summaries[0].se.values())


def test_noiseless_zero_target_zero_budget():
    spec = small_spec(target="zero", noise=OutcomeNoise.gaussian(0.0),
                      estimator=EstimatorConfig("lasso", 0.0))
    for rec in run_experiment(spec).records:
        assert rec.status == "ok" and rec.metrics["mse"] == 0.0


def test_trivial_zero_closed_form():
    k, s, amp = 16, 3, 0.7
    spec = small_spec(sweep=(SweepPoint(200, k, s),), amplitude=amp,
                      estimator=EstimatorConfig("trivial_zero", 0.0))
    for rec in run_experiment(spec).records:
        assert rec.metrics["mse"] == pytest.approx(s * amp**2 / k, abs=1e-12)
        assert rec.metrics["mse"] == rec.metrics["zero_mse"]


def test_corruption_identity_matches_oracle():
    oracle = run_experiment(small_spec(nuisance="oracle"))
    corrupted = run_experiment(small_spec(nuisance="corrupted", delta=0.0, eps=0.0))
    assert [r.metrics for r in oracle.records] == [r.metrics for r in corrupted.records]


def test_failures_recorded_not_raised():
    # an explicit psi with the wrong length fails every replication
    spec = small_spec(psi=(1.0, 0.0))
    report = run_experiment(spec)
    assert report.all_failed
    assert all(r.status == "failed" and "psi" in r.error for r in report.records)


def test_rate_fit_from_halving_points():
    recs = [ReplicationRecord(i, 0, 0, n, 4, 1, "ok",
                              {"mse": 1.0 / n, "mse_d2": 1.0 / n, "zero_mse": 1.0,
                               "l1_error": 1.0 / n})
            for i, n in enumerate((100, 200))]
    spec = small_spec(sweep=(SweepPoint(100, 4, 1), SweepPoint(200, 4, 1)))
    report = summarize(spec, recs)
    assert report.rate_fits["mse"].slope == pytest.approx(-1.0)
    assert "zero_mse" not in report.rate_fits or report.rate_fits["zero_mse"].slope == 0.0


def test_write_report_layout(tmp_path):
    report = run_experiment(small_spec())
    write_report(report, tmp_path)
    with open(tmp_path / "summary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0][:6] == ["point", "n", "k", "s", "replications", "failed"] and len(rows) == 3
    with open(tmp_path / "replications.csv") as fh:
        assert len(list(csv.reader(fh))) == 1 + 6
    with open(tmp_path / "ratefits.csv") as fh:
        assert {r[0] for r in list(csv.reader(fh))[1:]} >= {"mse", "l1_error"}


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        small_spec(replications=0)
    with pytest.raises(InvalidInputError):
        small_spec(sweep=())


def _cv_data(psi, n, seed, sigma=1.0):
    k = len(psi)
    spec = DgpSpec(TreatmentSpec("single", k), n, TargetParameter(0.0, np.asarray(psi, float)),
                   noise=OutcomeNoise.gaussian(sigma), seed=seed)
    ds, truth = generate(spec)
    return ds, oracle_nuisance(truth, ds)


def test_cv_single_candidate():
    ds, model = _cv_data(np.zeros(4), 200, 0)
    assert cross_validate_s(ds, model, [3.0], 0.0).chosen == 3.0


def test_cv_folds_stratified():
    ds, _ = _cv_data(np.zeros(4), 400, 1)
    fid = cv_folds(ds, 5)
    d2 = fid >= 0
    for a in range(1, 5):
        counts = np.bincount(fid[d2 & (ds.a == a)], minlength=5)
        assert counts.max() - counts.min() <= 1


def test_cv_rejects_too_few_rows():
    ds, model = _cv_data(np.zeros(2), 6, 0)
    with pytest.raises(InvalidInputError):
        cross_validate_s(ds, model, [0.0, 1.0], 0.0, folds=5)


def test_cv_noiseless_picks_smallest_covering_budget():
    # oracle regression and no noise make every pseudo-outcome equal psi_a, so budgets
    # covering ||psi||_1 all reach the same unconstrained fit
    ds, model = _cv_data([1.0, 0.0, 0.0, 0.0], 4000, 3, sigma=0.0)
    res = cross_validate_s(ds, model, [0.0, 0.5, 2.0, 4.0], 0.0,
                           EstimatorConfig("lasso", 0.0))
    assert res.curve[0] > res.curve[1] > res.curve[2] == res.curve[3]
    assert res.chosen == 2.0


# Calibration before freezing the threshold: s = 0 was chosen in 200 of 200 replications.
CV_ZERO_THRESHOLD = 0.8


def test_cv_prefers_zero_budget_under_null():
    k, n, reps = 50, 5000, 200
    cfg = EstimatorConfig("lasso", 0.0)
    wins = sum(cross_validate_s(*_cv_data(np.zeros(k), n, seed), [0.0, float(k)], 0.0,
                                cfg).chosen == 0.0 for seed in range(reps))
    assert wins >= CV_ZERO_THRESHOLD * reps
