"""
Monte Carlo rate sweep
======================

The experiment harness runs seeded replications over a grid of sample
sizes and fits a line to log MSE against log n. Exact sparsity gives a
slope near -1; a dense target with the same L1 budget converges more slowly.
"""

from sparsepor import EstimatorConfig
from sparsepor.dgp import OutcomeNoise
from sparsepor.harness import ExperimentSpec, SweepPoint, run_experiment

ns = (4096, 16384, 65536)
common = dict(replications=40, base_seed=1, nuisance="oracle", noise=OutcomeNoise.gaussian(1.0),
              estimator=EstimatorConfig("lasso"), budget_rule="oracle", target_seed=5)

exact = ExperimentSpec(sweep=tuple(SweepPoint(n, 128, 5) for n in ns), **common)
dense = ExperimentSpec(sweep=tuple(SweepPoint(n, 128, 2.0) for n in ns), target="l1", **common)

for label, spec in (("exact sparse", exact), ("dense L1", dense)):
    report = run_experiment(spec)
    for s in report.summaries:
        print(f"{label:<13} n={s.n:>6}  mse {s.mean['mse']:.2e} +/- {s.se['mse']:.1e}")
    print(f"{label:<13} fitted slope {report.rate_fits['mse'].slope:.2f}\n")
