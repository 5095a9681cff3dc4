"""First-stage nuisance models: propensity scores and outcome regressions.

All models are fitted on (or attached to) the nuisance fold ``D1`` and carry
the ``D1`` empirical treatment proportions used to weight the risk. They are
evaluated on paired rows: ``model.pi(a, x)[i]`` is the propensity of
treatment ``a[i]`` at covariates ``x[i]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, stats

from .core import (
    D1,
    Dataset,
    InvalidInputError,
    LevelProportions,
    TreatmentSpec,
    empirical_proportions,
    match_rows,
)
from .dgp import CovariateLaw, DgpTruth, sign_feature


def default_floor(k: int, n: int) -> float:
    """Propensity clamp ``1 / (10 k n)``."""
    return 1.0 / (10.0 * k * max(n, 1))


def _lookup(props: LevelProportions, a: NDArray) -> NDArray:
    """D1 proportion of each treatment in ``a`` (0 for unseen combinations)."""
    if props.spec.is_single:
        return props.weights[np.asarray(a, dtype=np.int64) - 1]
    idx = match_rows(np.atleast_2d(a), props.levels)
    return np.where(idx >= 0, props.weights[np.maximum(idx, 0)], 0.0)


class NuisanceModel:
    """Common interface of first-stage models.

    Attributes
    ----------
    spec : TreatmentSpec
    varpi : LevelProportions
        Empirical treatment proportions on ``D1``.
    floor : float
        Lower clamp applied to every propensity returned by :meth:`pi`.
    """

    spec: TreatmentSpec
    varpi: LevelProportions
    floor: float

    def _pi(self, a: NDArray, x: NDArray) -> NDArray:
        raise NotImplementedError

    def mu(self, a: NDArray, x: NDArray) -> NDArray:
        raise NotImplementedError

    def pi(self, a: NDArray, x: NDArray) -> NDArray:
        p = self._pi(a, np.atleast_2d(x))
        return np.maximum(p, self.floor) if self.floor > 0 else p

    def mu_mean(self, levels: NDArray, x: NDArray) -> NDArray:
        """Average of ``mu(level, .)`` over the rows of ``x`` for each level.

        Generic implementation, one pass over ``x`` per level. Subclasses
        override with closed forms where they exist.
        """
        x = np.atleast_2d(x)
        n = x.shape[0]
        out = np.empty(len(levels))
        for j, lev in enumerate(levels):
            rep = np.full(n, lev) if self.spec.is_single else np.repeat(lev[None, :], n, axis=0)
            out[j] = self.mu(rep, x).mean() if n else 0.0
        return out


@dataclass(frozen=True, eq=False)
class OracleNuisance(NuisanceModel):
    """The true ``pi`` and ``mu`` of a simulated design."""

    truth: DgpTruth
    varpi: LevelProportions
    floor: float = 0.0

    @property
    def spec(self) -> TreatmentSpec:  # type: ignore[override]
        return self.truth.spec

    def _pi(self, a, x):
        return self.truth.pi(a, x)

    def mu(self, a, x):
        return self.truth.mu(a, x)

    def mu_mean(self, levels, x):
        return self.truth.mu_mean(levels, np.atleast_2d(x))


def oracle_nuisance(truth: DgpTruth, dataset: Dataset, floor: float = 0.0) -> OracleNuisance:
    """Oracle model carrying the ``D1`` proportions of ``dataset``."""
    return OracleNuisance(truth, empirical_proportions(dataset, D1), floor)


@dataclass(frozen=True, eq=False)
class EmpiricalNuisance(NuisanceModel):
    """Covariate-free plug-in: per-level ``D1`` outcome means and proportions.

    ``mu(a, .)`` is the mean outcome among ``D1`` rows with treatment ``a``
    (``fallback`` for unseen treatments) and ``pi(a, .) = max(varpi_a, floor)``.
    """

    spec: TreatmentSpec
    varpi: LevelProportions
    level_means: NDArray
    floor: float
    fallback: float = 0.0

    def _means_of(self, a: NDArray) -> NDArray:
        if self.spec.is_single:
            return self.level_means[np.asarray(a, dtype=np.int64) - 1]
        idx = match_rows(np.atleast_2d(a), self.varpi.levels)
        return np.where(idx >= 0, self.level_means[np.maximum(idx, 0)], self.fallback)

    def _pi(self, a, x):
        return _lookup(self.varpi, a)

    def mu(self, a, x):
        return self._means_of(a)

    def mu_mean(self, levels, x):
        return self._means_of(np.asarray(levels))


def empirical_nuisance(dataset: Dataset, floor: float | None = None,
                       fallback: float = 0.0) -> EmpiricalNuisance:
    """Fit :class:`EmpiricalNuisance` on the ``D1`` rows of ``dataset``.

    ``floor`` defaults to :func:`default_floor` with ``n`` the full sample size.
    """
    part = dataset.fold_part(D1)
    if part.n == 0:
        raise InvalidInputError("D1 is empty")
    spec = dataset.spec
    if floor is None:
        floor = default_floor(spec.k, dataset.n)
    if floor < 0:
        raise InvalidInputError("floor must be non-negative")
    props = empirical_proportions(dataset, D1)
    if spec.is_single:
        counts = np.bincount(part.a, minlength=spec.k + 1)[1:]
        sums = np.bincount(part.a, weights=part.y, minlength=spec.k + 1)[1:]
    else:
        idx = match_rows(part.a, props.levels)
        counts = np.bincount(idx, minlength=len(props.levels))
        sums = np.bincount(idx, weights=part.y, minlength=len(props.levels))
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), fallback)
    return EmpiricalNuisance(spec, props, means, float(floor), float(fallback))


@dataclass(frozen=True)
class SignPattern:
    """Perturbation ``r_a(x) = sign_a * g(x)`` with ``g`` the median sign feature.

    ``level_signs`` (length ``k``, single treatments only) flips the pattern
    per level; by default every level shares ``g``, which has unit
    ``L2(P_X)`` norm.
    """

    law: CovariateLaw = CovariateLaw.UNIFORM
    level_signs: NDArray | None = None

    def __call__(self, a: NDArray, x: NDArray) -> NDArray:
        g = sign_feature(np.atleast_2d(x), self.law)
        if self.level_signs is None:
            return g
        return np.asarray(self.level_signs)[np.asarray(a, dtype=np.int64) - 1] * g

    @property
    def level_free(self) -> bool:
        return self.level_signs is None


Pattern = Callable[[NDArray, NDArray], NDArray]


@dataclass(frozen=True, eq=False)
class CorruptedNuisance(NuisanceModel):
    """``pi / (1 + delta r)`` and ``mu + eps q`` on top of a base model."""

    base: NuisanceModel
    delta: float
    eps: float
    r: Pattern
    q: Pattern
    floor: float

    @property
    def spec(self) -> TreatmentSpec:  # type: ignore[override]
        return self.base.spec

    @property
    def varpi(self) -> LevelProportions:  # type: ignore[override]
        return self.base.varpi

    def _pi(self, a, x):
        p = self.base.pi(a, x)
        if self.delta == 0:
            return p
        return p / (1.0 + self.delta * self.r(a, x))

    def mu(self, a, x):
        m = self.base.mu(a, x)
        if self.eps == 0:
            return m
        return m + self.eps * self.q(a, x)

    def mu_mean(self, levels, x):
        m = self.base.mu_mean(levels, x)
        if self.eps == 0:
            return m
        if getattr(self.q, "level_free", False):
            x = np.atleast_2d(x)
            qbar = float(self.q(None, x).mean()) if len(x) else 0.0
            return m + self.eps * qbar
        return NuisanceModel.mu_mean(self, levels, x)


def corrupt_nuisance(base: NuisanceModel, delta: float, eps: float,
                     r: Pattern | None = None, q: Pattern | None = None,
                     law: CovariateLaw = CovariateLaw.UNIFORM) -> CorruptedNuisance:
    """Perturb ``base`` so that ``||pi/pi_hat - 1|| = delta * ||r||`` and
    ``||mu - mu_hat|| = eps * ||q||``.

    With the default sign patterns (``||r|| = ||q|| = 1``) the error norms
    equal ``delta`` and ``eps`` exactly, before any floor clamping.
    """
    if delta < 0 or eps < 0:
        raise InvalidInputError("delta and eps must be non-negative")
    if delta >= 1:
        raise InvalidInputError("delta >= 1 can drive propensities to zero or below")
    pattern = SignPattern(law)
    return CorruptedNuisance(base, float(delta), float(eps), r or pattern, q or pattern,
                             base.floor)


@dataclass(frozen=True)
class ErrorNorms:
    """``L2(P_X)`` nuisance errors at one level with standard errors (0 under quadrature)."""

    delta: float
    eps: float
    delta_se: float = 0.0
    eps_se: float = 0.0


def _sqrt_with_se(values: NDArray) -> tuple[float, float]:
    m = float(values.mean())
    if m <= 0:
        return 0.0, 0.0
    se_m = float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    return math.sqrt(m), se_m / (2 * math.sqrt(m))


def nuisance_error_norms(model: NuisanceModel, truth: DgpTruth, level, draws: int = 100_000,
                         seed: int = 0, quadrature: bool | None = None) -> ErrorNorms:
    """``(||pi_a/pi_hat_a - 1||, ||mu_a - mu_hat_a||)`` under the covariate law.

    Uses adaptive quadrature (split at the median, where the sign patterns
    jump) when the covariate dimension is 1, and Monte Carlo with ``draws``
    samples otherwise.
    """
    if quadrature is None:
        quadrature = truth.d == 1
    single = truth.spec.is_single

    def sq_errors(x: NDArray) -> tuple[NDArray, NDArray]:
        n = x.shape[0]
        a = np.full(n, int(level)) if single else np.repeat(np.asarray(level)[None, :], n, axis=0)
        de = truth.pi(a, x) / model.pi(a, x) - 1.0
        me = truth.mu(a, x) - model.mu(a, x)
        return de**2, me**2

    if quadrature and truth.d == 1:
        med = truth.covariates.median

        def integrand(t: float, which: int) -> float:
            return float(sq_errors(np.array([[t]]))[which][0])

        if truth.covariates is CovariateLaw.UNIFORM:
            pieces = [(0.0, med), (med, 1.0)]
            weight = lambda t: 1.0  # noqa: E731
        else:
            pieces = [(-np.inf, med), (med, np.inf)]
            weight = stats.norm.pdf
        vals = []
        for which in (0, 1):
            total = 0.0
            for lo, hi in pieces:
                total += integrate.quad(lambda t: integrand(t, which) * weight(t), lo, hi,
                                        limit=200)[0]
            vals.append(math.sqrt(max(total, 0.0)))
        return ErrorNorms(vals[0], vals[1])
    rng = np.random.default_rng(seed)
    x = truth.sample_x(draws, rng)
    d2, e2 = sq_errors(x)
    delta, delta_se = _sqrt_with_se(d2)
    eps, eps_se = _sqrt_with_se(e2)
    return ErrorNorms(delta, eps, delta_se, eps_se)
