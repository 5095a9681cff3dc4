"""
Choosing the budget by cross-validation
=======================================

The constraint level is rarely known. Cross-validation holds out part of
the second fold, refits on the rest with each candidate budget, and scores
the held-out estimated risk with the same first-fold nuisances.
"""

from sparsepor import EstimatorConfig, TreatmentSpec
from sparsepor.dgp import DgpSpec, OutcomeNoise, generate, sparse_target
from sparsepor.evaluation import weighted_mse_single
from sparsepor.harness import cross_validate_s
from sparsepor.nuisance import empirical_nuisance
from sparsepor.pipeline import fit

k = 100
target = sparse_target(k, 4, amplitude=0.6, seed=2)
data, truth = generate(DgpSpec(TreatmentSpec("single", k), 30_000, target,
                               noise=OutcomeNoise.gaussian(1.0), seed=9))
model = empirical_nuisance(data)

candidates = [0.0, 0.5, 1.0, 1.5, 2.0, 2.4, 3.0, 4.0, 6.0]
cv = cross_validate_s(data, model, candidates, psi0=target.psi0)
for c, r in zip(cv.candidates, cv.curve):
    mark = "  <- chosen" if c == cv.chosen else ""
    print(f"budget {c:>4.1f}  held-out risk {r:+.5f}{mark}")
print(f"true L1 norm: {target.l1:.2f}")

w = truth.level_probabilities()
for c in sorted({cv.chosen, target.l1}):
    est = fit(data, model, EstimatorConfig("lasso", c), psi0=target.psi0)
    print(f"budget {c:.2f}: weighted MSE {weighted_mse_single(est.psi_hat, target.psi, w):.2e}")
