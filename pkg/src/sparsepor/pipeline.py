"""Second-stage estimation: pseudo-outcomes, risk assembly and solve in one call."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import Dataset, EstimatorConfig, InvalidInputError, Method
from .nuisance import NuisanceModel
from .pseudo import PseudoOutcomeTable, estimate_intercept, scaled_pseudo_outcomes
from .risk import RiskQuadratic, assemble, evaluate
from .solver import (
    Solution,
    hard_threshold_estimator,
    soft_threshold_estimator,
    solve_best_subset,
    solve_lasso_constrained,
    solve_plugin_mean,
)


@dataclass(frozen=True, eq=False)
class Estimate:
    """Estimated deviations ``psi_hat`` with the objects that produced them."""

    psi_hat: NDArray
    psi0: float
    solution: Solution
    risk: RiskQuadratic
    table: PseudoOutcomeTable


def solve(risk: RiskQuadratic, cfg: EstimatorConfig, means: NDArray | None = None) -> Solution:
    """Dispatch on ``cfg.method``. Threshold methods act on ``means``."""
    method = cfg.method
    if method is Method.LASSO:
        return solve_lasso_constrained(risk, cfg.budget, cfg)
    if method is Method.BEST_SUBSET:
        if cfg.budget != int(cfg.budget):
            raise InvalidInputError("best subset needs an integer budget")
        return solve_best_subset(risk, int(cfg.budget), cfg)
    if method is Method.TRIVIAL_ZERO:
        beta = np.zeros(risk.k)
        return Solution(beta, evaluate(risk, beta), exact=True)
    if method is Method.PLUGIN_MEAN:
        return solve_plugin_mean(risk)
    if means is None:
        raise InvalidInputError(f"{method.value} needs per-level pseudo-outcome means")
    rule = soft_threshold_estimator if method is Method.SOFT_THRESHOLD else hard_threshold_estimator
    beta = rule(means, cfg.budget)
    return Solution(beta, evaluate(risk, beta), exact=True)


def fit(dataset: Dataset, model: NuisanceModel, cfg: EstimatorConfig,
        psi0: float | None = None) -> Estimate:
    """Run the second stage on the ``D2`` rows of ``dataset``.

    ``psi0`` defaults to :func:`~sparsepor.pseudo.estimate_intercept`
    (single treatments only).
    """
    if psi0 is None:
        if not dataset.spec.is_single:
            raise InvalidInputError("vector treatments need a known intercept psi0")
        psi0 = estimate_intercept(dataset, model)
    thresholding = cfg.method in (Method.SOFT_THRESHOLD, Method.HARD_THRESHOLD)
    if thresholding and not dataset.spec.is_single:
        raise InvalidInputError("thresholding estimators are defined for single treatments")
    table = scaled_pseudo_outcomes(dataset, model, psi0, all_levels=thresholding)
    risk = assemble(table)
    means = None
    if thresholding:
        means = table.level_means()
    sol = solve(risk, cfg, means)
    return Estimate(sol.beta, float(psi0), sol, risk, table)
