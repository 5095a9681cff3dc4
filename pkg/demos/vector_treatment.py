"""
Many binary treatments at once
==============================

Each unit receives a vector of 64 binary treatments. The mean outcome is
linear in the vector, with five active components. The Gram matrix of the
design enters the risk, so the solver runs accelerated projected gradient.
"""

from sparsepor import EstimatorConfig, TreatmentSpec
from sparsepor.dgp import DgpSpec, OutcomeNoise, generate, sparse_target
from sparsepor.evaluation import prediction_mse_vector
from sparsepor.nuisance import oracle_nuisance
from sparsepor.pipeline import fit

k = 64
target = sparse_target(k, 5, amplitude=1.0, seed=7)

for n in (2048, 8192, 32768):
    spec = DgpSpec(TreatmentSpec("vector", k), n, target, noise=OutcomeNoise.gaussian(1.0),
                   confounding=0.2, seed=n)
    data, truth = generate(spec)
    # true propensities and regressions isolate the second-stage error
    est = fit(data, oracle_nuisance(truth, data), EstimatorConfig("lasso", target.l1),
              psi0=target.psi0)
    mse = prediction_mse_vector(est.psi_hat, target.psi, truth.second_moment())
    sol = est.solution
    print(f"n={n:>6}  prediction MSE {mse:.2e}  iterations {sol.iterations:>4}  KKT {sol.kkt:.1e}")
