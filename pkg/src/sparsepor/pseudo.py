"""Influence-function pseudo-outcomes and the intercept estimate.

For a level ``a`` the (unscaled) pseudo-outcome of an observation ``(x, a_obs, y)`` is::

    1(a_obs = a) / pi_hat_a(x) * (y - mu_hat_a(x)) + mu_hat_a(x) - psi0

Only the indicator term depends on the observed treatment, so a table over
``n`` observations and ``L`` levels is stored as one inverse-weighted
residual per observation plus one ``mu_hat`` average per level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import D2, Dataset, InvalidInputError, NumericError, match_rows
from .nuisance import NuisanceModel


def pseudo_outcome(y: NDArray, a_obs: NDArray, x: NDArray, a, model: NuisanceModel,
                   psi0: float) -> NDArray:
    """Unscaled pseudo-outcome of level ``a`` for each observation (vectorized)."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = y.shape[0]
    if model.spec.is_single:
        a_obs = np.atleast_1d(np.asarray(a_obs))
        lev = np.full(n, int(a))
        hit = a_obs == lev
    else:
        a_obs = np.atleast_2d(np.asarray(a_obs))
        lev = np.repeat(np.asarray(a)[None, :], n, axis=0)
        hit = np.all(a_obs == lev, axis=1)
    mu = model.mu(lev, x)
    out = mu - psi0
    if np.any(hit):
        pi = model.pi(lev[hit], x[hit])
        if np.any(pi <= 0):
            raise NumericError("zero propensity at an observed treatment; set a positive floor")
        out[hit] += (y[hit] - mu[hit]) / pi
    return out


@dataclass(frozen=True, eq=False)
class PseudoOutcomeTable:
    """Pseudo-outcomes on ``D2`` for the levels entering the risk.

    Attributes
    ----------
    levels : ndarray
        Levels present in the table: 1-based indices (single) or rows (vector).
    scale : float
        ``sqrt(k)`` for single treatments, 1 for vector treatments.
    psi0_used : float
    mu_means : ndarray
        Mean over ``D2`` of ``mu_hat_level(X)`` for each tabled level.
    match : ndarray
        For each ``D2`` observation, index of its treatment in ``levels`` or -1.
    ipw : ndarray
        ``(y - mu_hat_A(x)) / pi_hat_A(x)`` at the observed treatment of each
        ``D2`` row (computed for every row, tabled or not).
    """

    levels: NDArray
    scale: float
    psi0_used: float
    mu_means: NDArray
    match: NDArray
    ipw: NDArray
    model: NuisanceModel
    part: Dataset

    @property
    def n2(self) -> int:
        return int(self.ipw.shape[0])

    def level_means(self, scaled: bool = False) -> NDArray:
        """``P_n^2`` of the pseudo-outcome for every tabled level."""
        idx = self.match[self.match >= 0]
        sums = np.bincount(idx, weights=self.ipw[self.match >= 0], minlength=len(self.levels))
        means = self.mu_means - self.psi0_used + sums / self.n2
        return self.scale * means if scaled else means

    def column(self, j: int, scaled: bool = True) -> NDArray:
        """Materialize the pseudo-outcomes of tabled level ``j`` over ``D2``."""
        lev = self.levels[j]
        x = self.part.x
        rep = np.full(self.n2, lev) if self.model.spec.is_single else np.repeat(
            lev[None, :], self.n2, axis=0)
        col = self.model.mu(rep, x) - self.psi0_used + np.where(self.match == j, self.ipw, 0.0)
        return self.scale * col if scaled else col

    def dense(self, scaled: bool = True) -> NDArray:
        """Full ``n2 x L`` matrix (small problems only)."""
        return np.column_stack([self.column(j, scaled) for j in range(len(self.levels))])


def _ipw_residuals(part: Dataset, model: NuisanceModel) -> NDArray:
    pi = model.pi(part.a, part.x)
    if np.any(pi <= 0):
        raise NumericError("zero propensity at an observed treatment; set a positive floor")
    return (part.y - model.mu(part.a, part.x)) / pi


def scaled_pseudo_outcomes(dataset: Dataset, model: NuisanceModel, psi0: float,
                           all_levels: bool = False) -> PseudoOutcomeTable:
    """Tabulate pseudo-outcomes on the ``D2`` rows of ``dataset``.

    Levels with zero ``D1`` proportion are left out unless ``all_levels``
    (single treatments only) asks for every level.
    """
    part = dataset.fold_part(D2)
    if part.n == 0:
        raise InvalidInputError("D2 is empty")
    spec = dataset.spec
    props = model.varpi
    if spec.is_single:
        levels = np.arange(1, spec.k + 1) if all_levels else props.levels[props.observed]
        pos = np.full(spec.k + 1, -1, dtype=np.int64)
        pos[levels] = np.arange(len(levels))
        match = pos[part.a]
        scale = math.sqrt(spec.k)
    else:
        if all_levels:
            raise InvalidInputError("all_levels is only available for single treatments")
        levels = props.levels[props.observed]
        match = match_rows(part.a, levels)
        scale = 1.0
    ipw = _ipw_residuals(part, model)
    mu_means = model.mu_mean(levels, part.x)
    return PseudoOutcomeTable(levels, scale, float(psi0), np.asarray(mu_means, dtype=float),
                              match, ipw, model, part)


def estimate_intercept(dataset: Dataset, model: NuisanceModel, variant: str = "mean",
                       level: int | None = None) -> float:
    """Intercept from the ``D2`` means of the uncentered influence functions.

    ``variant='mean'`` averages the ``k`` per-level means; ``'median'`` takes
    their median and ``'level'`` returns the mean at ``level``. Single
    treatments only.
    """
    spec = dataset.spec
    if not spec.is_single:
        raise InvalidInputError("intercept estimation is defined for single treatments")
    part = dataset.fold_part(D2)
    if part.n == 0:
        raise InvalidInputError("D2 is empty")
    levels = np.arange(1, spec.k + 1)
    ipw = _ipw_residuals(part, model)
    means = model.mu_mean(levels, part.x) + np.bincount(
        part.a, weights=ipw, minlength=spec.k + 1)[1:] / part.n
    if variant == "mean":
        return float(means.mean())
    if variant == "median":
        return float(np.median(means))
    if variant == "level":
        if level is None or not 1 <= level <= spec.k:
            raise InvalidInputError("variant 'level' needs a level in 1..k")
        return float(means[level - 1])
    raise InvalidInputError(f"unknown intercept variant {variant!r}")

