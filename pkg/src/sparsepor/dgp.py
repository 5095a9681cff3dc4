"""Synthetic data-generating processes with known mean potential outcomes.

Every generator returns the simulated :class:`~sparsepor.core.Dataset`
together with a :class:`DgpTruth` exposing the true propensity scores,
outcome regressions and target parameter.

Covariates enter the nuisances only through the sign feature
``g(x) = sign(x_1 - median(x_1))`` (``+1`` at the median), which takes the
values ``+1``/``-1`` with probability 1/2 each. With ``confounding > 0``
both the propensities and the outcome regressions tilt with ``g``, so a
naive per-level mean is biased while ``E[mu_a(X)]`` is unchanged.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .core import (
    Dataset,
    InternalError,
    InvalidInputError,
    SparsityNorm,
    TargetParameter,
    TreatmentKind,
    TreatmentSpec,
    split_folds,
)


class PropensityKind(str, enum.Enum):
    EXACT_UNIFORM = "uniform"
    NEAR_UNIFORM = "near"


class NoiseKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    BERNOULLI = "bernoulli"


class CovariateLaw(str, enum.Enum):
    UNIFORM = "uniform"
    GAUSSIAN = "gaussian"

    @property
    def median(self) -> float:
        return 0.5 if self is CovariateLaw.UNIFORM else 0.0


@dataclass(frozen=True)
class PropensityProfile:
    kind: PropensityKind = PropensityKind.EXACT_UNIFORM
    c: float = 1.0
    C: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", PropensityKind(self.kind))
        if self.kind is PropensityKind.NEAR_UNIFORM and not 0 < self.c <= 1 <= self.C:
            raise InvalidInputError("NearUniform needs 0 < c <= 1 <= C")

    @classmethod
    def near(cls, c: float, C: float) -> PropensityProfile:
        return cls(PropensityKind.NEAR_UNIFORM, c, C)


@dataclass(frozen=True)
class OutcomeNoise:
    kind: NoiseKind = NoiseKind.GAUSSIAN
    sigma: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.sigma < 0:
            raise InvalidInputError("sigma must be non-negative")

    @classmethod
    def gaussian(cls, sigma: float) -> OutcomeNoise:
        return cls(NoiseKind.GAUSSIAN, sigma)

    @classmethod
    def bernoulli(cls) -> OutcomeNoise:
        return cls(NoiseKind.BERNOULLI, 0.0)


@dataclass(frozen=True)
class DgpSpec:
    spec: TreatmentSpec
    n: int
    target: TargetParameter
    d: int = 1
    propensity: PropensityProfile = field(default_factory=PropensityProfile)
    noise: OutcomeNoise = field(default_factory=OutcomeNoise)
    confounding: float = 0.0
    seed: int = 0
    covariates: CovariateLaw = CovariateLaw.UNIFORM
    split_ratio: float = 0.5

    def __post_init__(self) -> None:
        object.__setattr__(self, "covariates", CovariateLaw(self.covariates))
        if self.target.k != self.spec.k:
            raise InvalidInputError("target dimension must equal k")
        if self.n < 2 or self.d < 1:
            raise InvalidInputError("need n >= 2 and d >= 1")
        if not 0 <= self.confounding < 1:
            raise InvalidInputError("confounding strength must lie in [0, 1)")


def sign_feature(x: NDArray, law: CovariateLaw) -> NDArray:
    """``+1`` where ``x_1`` is at or above its population median, else ``-1``."""
    x = np.asarray(x, dtype=float)
    return np.where(x[..., 0] >= law.median, 1.0, -1.0)


def _alternating(k: int) -> NDArray:
    return np.where(np.arange(k) % 2 == 0, 1.0, -1.0)


def near_uniform_base(k: int, c: float, C: float, weight: float | None = None) -> NDArray:
    """Deterministic level probabilities inside ``[c/k, C/k]`` that sum to one.

    A linear ramp from ``c`` to ``C`` (normalised to mean one) is mixed with
    the uniform distribution. ``weight`` is the ramp's share; by default the
    largest share keeping every level inside the band.
    """
    if k == 1:
        return np.ones(1)
    ramp = np.linspace(c, C, k)
    ramp = ramp / ramp.mean()
    lam = 1.0
    for v in ramp:
        if v > 1:
            lam = min(lam, (C - 1) / (v - 1))
        elif v < 1:
            lam = min(lam, (1 - c) / (1 - v))
    if weight is not None:
        lam = min(lam, weight)
    return (1 - lam + lam * ramp) / k


def _tilted(base: NDArray, gamma: float, g: float) -> NDArray:
    tilted = base * (1 + gamma * _alternating(base.size) * g)
    return tilted / tilted.sum()


def _in_band(base: NDArray, gamma: float, lo: float, hi: float) -> bool:
    for g in (1.0, -1.0):
        tab = _tilted(base, gamma, g)
        if tab.min() < lo * (1 - 1e-12) or tab.max() > hi * (1 + 1e-12):
            return False
    return True


def confounded_base(k: int, c: float, C: float, gamma: float) -> NDArray:
    """Near-uniform base whose tilt by ``gamma`` stays inside ``[c/k, C/k]``.

    The ramp share is the largest (found by bisection) for which both tilted
    tables remain in the band. Raises when even the uniform base leaves it.
    """
    lo, hi = c / k, C / k
    full = near_uniform_base(k, c, C)
    if _in_band(full, gamma, lo, hi):
        return full
    if not _in_band(np.full(k, 1.0 / k), gamma, lo, hi):
        raise InvalidInputError(
            "confounding tilt pushes propensities outside [c/k, C/k]; "
            "reduce confounding or widen the band")
    a, b = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (a + b)
        if _in_band(near_uniform_base(k, c, C, mid), gamma, lo, hi):
            a = mid
        else:
            b = mid
    return near_uniform_base(k, c, C, a)


@dataclass(frozen=True)
class DgpTruth:
    """Ground truth of a simulated design.

    Attributes
    ----------
    spec : TreatmentSpec
    target : TargetParameter
    covariates : CovariateLaw
    d : int
        Covariate dimension.
    base : ndarray
        Single treatments: level probabilities at ``g = 0`` (length ``k``).
        Vector treatments: component probabilities ``P(A_j = 1)`` before tilting.
    gamma : float
        Propensity tilt strength.
    tau : float
        Outcome-regression tilt amplitude.
    noise : OutcomeNoise
    """

    spec: TreatmentSpec
    target: TargetParameter
    covariates: CovariateLaw
    d: int
    base: NDArray
    gamma: float
    tau: float
    noise: OutcomeNoise

    @property
    def k(self) -> int:
        return self.spec.k

    @property
    def signs(self) -> NDArray:
        return _alternating(self.k)

    def sample_x(self, n: int, rng: np.random.Generator) -> NDArray:
        if self.covariates is CovariateLaw.UNIFORM:
            return rng.random((n, self.d))
        return rng.standard_normal((n, self.d))

    def g(self, x: NDArray) -> NDArray:
        return sign_feature(x, self.covariates)

    # single treatments ---------------------------------------------------

    def level_table(self, g: float) -> NDArray:
        """Single treatments: propensities ``pi_a`` for every level given ``g(x) = g``."""
        return _tilted(self.base, self.gamma, g)

    def level_probabilities(self) -> NDArray:
        """Marginal ``P(A = a)`` (single treatments)."""
        return 0.5 * (self.level_table(1.0) + self.level_table(-1.0))

    # vector treatments ---------------------------------------------------

    def component_probabilities(self, x: NDArray) -> NDArray:
        """Vector treatments: ``P(A_j = 1 | X = x)`` with shape ``(n, k)``."""
        g = self.g(x)
        return self.base[None, :] * (1 + self.gamma * self.signs[None, :] * g[:, None])

    def second_moment(self) -> NDArray:
        """Population ``E[A A^T]`` for vector treatments."""
        p = self.base
        sg = self.gamma * self.signs
        m = np.outer(p, p) * (1 + np.outer(sg, sg))
        np.fill_diagonal(m, p)
        return m

    def mu_slope(self, x: NDArray) -> NDArray:
        """Vector treatments: ``F(x)`` with ``mu_a(x) = psi0 + a . F(x)``."""
        g = self.g(x)
        return self.target.psi[None, :] + (self.tau / self.k) * g[:, None] * self.signs[None, :]

    # common interface ----------------------------------------------------

    def pi(self, a: NDArray, x: NDArray) -> NDArray:
        """``pi_a(x)`` for paired rows of treatments and covariates."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.spec.is_single:
            a = np.asarray(a, dtype=np.int64)
            g = self.g(x)
            table = np.where(g[:, None] > 0, self.level_table(1.0), self.level_table(-1.0))
            return table[np.arange(a.shape[0]), a - 1]
        a = np.atleast_2d(np.asarray(a, dtype=float))
        p = self.component_probabilities(x)
        logp = np.where(a > 0, np.log(p), np.log1p(-p)).sum(axis=1)
        return np.exp(logp)

    def mu(self, a: NDArray, x: NDArray) -> NDArray:
        """``mu_a(x) = E[Y | A = a, X = x]`` for paired rows."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        psi0 = self.target.psi0
        if self.spec.is_single:
            a = np.asarray(a, dtype=np.int64)
            return psi0 + self.target.psi[a - 1] + self.tau * self.signs[a - 1] * self.g(x)
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return psi0 + np.einsum("ij,ij->i", a, self.mu_slope(x))

    def mu_mean(self, levels: NDArray, x: NDArray) -> NDArray:
        """Average of ``mu_a`` over the rows of ``x`` for each of ``levels``."""
        gbar = float(self.g(x).mean()) if len(x) else 0.0
        psi0 = self.target.psi0
        if self.spec.is_single:
            idx = np.asarray(levels, dtype=np.int64) - 1
            return psi0 + self.target.psi[idx] + self.tau * self.signs[idx] * gbar
        slope = self.target.psi + (self.tau / self.k) * gbar * self.signs
        return psi0 + np.asarray(levels, dtype=float) @ slope

    def mean_potential_outcomes(self) -> NDArray:
        """``psi0 + psi_a`` for single treatments."""
        return self.target.psi0 + self.target.psi


def _bernoulli_range(target: TargetParameter, spec: TreatmentSpec) -> tuple[float, float]:
    psi = target.psi
    if spec.is_single:
        return target.psi0 + psi.min(), target.psi0 + psi.max()
    return target.psi0 + psi[psi < 0].sum(), target.psi0 + psi[psi > 0].sum()


def build_truth(dgp: DgpSpec) -> DgpTruth:
    """Validate ``dgp`` and construct its ground truth."""
    spec, target, gamma = dgp.spec, dgp.target, dgp.confounding
    k = spec.k
    lo, hi = _bernoulli_range(target, spec)
    if dgp.noise.kind is NoiseKind.BERNOULLI:
        if lo < 0 or hi > 1:
            raise InvalidInputError("Bernoulli outcomes need every level mean in [0, 1]")
        tau = gamma * min(lo, 1 - hi)
    else:
        tau = gamma
    if spec.is_single:
        if dgp.propensity.kind is PropensityKind.EXACT_UNIFORM:
            if gamma > 0:
                raise InvalidInputError("ExactUniform propensities cannot be confounded")
            base = np.full(k, 1.0 / k)
        else:
            prof = dgp.propensity
            base = confounded_base(k, prof.c, prof.C, gamma)
        truth = DgpTruth(spec, target, dgp.covariates, dgp.d, base, gamma, tau, dgp.noise)
        return truth
    base = np.full(k, 0.5)
    return DgpTruth(spec, target, dgp.covariates, dgp.d, base, gamma, tau, dgp.noise)


def _sample_outcomes(truth: DgpTruth, mean: NDArray, rng: np.random.Generator) -> NDArray:
    if truth.noise.kind is NoiseKind.BERNOULLI:
        return (rng.random(mean.shape[0]) < mean).astype(float)
    if truth.noise.sigma == 0:
        return mean.copy()
    return mean + truth.noise.sigma * rng.standard_normal(mean.shape[0])


def _streams(seed: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4)]


def gen_single_multivalued(dgp: DgpSpec) -> tuple[Dataset, DgpTruth]:
    """Draw a single multi-valued treatment dataset."""
    if not dgp.spec.is_single:
        raise InvalidInputError("gen_single_multivalued needs a single treatment spec")
    truth = build_truth(dgp)
    rx, ra, ry, rf = _streams(dgp.seed)
    x = truth.sample_x(dgp.n, rx)
    g = truth.g(x)
    cdf_pos = np.cumsum(truth.level_table(1.0))
    cdf_neg = np.cumsum(truth.level_table(-1.0))
    u = ra.random(dgp.n)
    a = np.where(g > 0, np.searchsorted(cdf_pos, u, side="right"),
                 np.searchsorted(cdf_neg, u, side="right"))
    a = np.minimum(a, dgp.spec.k - 1) + 1
    y = _sample_outcomes(truth, truth.mu(a, x), ry)
    fold = split_folds(dgp.n, dgp.split_ratio, int(rf.integers(2**63)))
    return Dataset(dgp.spec, x, a, y, fold), truth


def gen_binary_vector(dgp: DgpSpec) -> tuple[Dataset, DgpTruth]:
    """Draw a binary vector treatment dataset (independent Bernoulli(1/2) components by default)."""
    if dgp.spec.is_single:
        raise InvalidInputError("gen_binary_vector needs a vector treatment spec")
    truth = build_truth(dgp)
    rx, ra, ry, rf = _streams(dgp.seed)
    x = truth.sample_x(dgp.n, rx)
    a = (ra.random((dgp.n, dgp.spec.k)) < truth.component_probabilities(x)).astype(np.uint8)
    y = _sample_outcomes(truth, truth.mu(a, x), ry)
    fold = split_folds(dgp.n, dgp.split_ratio, int(rf.integers(2**63)))
    return Dataset(dgp.spec, x, a, y, fold), truth


def generate(dgp: DgpSpec) -> tuple[Dataset, DgpTruth]:
    if dgp.spec.is_single:
        return gen_single_multivalued(dgp)
    return gen_binary_vector(dgp)


# ---------------------------------------------------------------------------
# target helpers
# ---------------------------------------------------------------------------

def sparse_target(k: int, s: int, amplitude: float, psi0: float = 0.0,
                  seed: int = 0, signed: bool = True) -> TargetParameter:
    """Exactly ``s``-sparse deviations of size ``amplitude`` at random positions."""
    if not 0 <= s <= k:
        raise InvalidInputError("need 0 <= s <= k")
    rng = np.random.default_rng(seed)
    psi = np.zeros(k)
    support = np.sort(rng.choice(k, size=s, replace=False))
    signs = rng.choice([-1.0, 1.0], size=s) if signed else np.ones(s)
    psi[support] = amplitude * signs
    return TargetParameter(psi0, psi, SparsityNorm.L0, s)


def dense_l1_target(k: int, radius: float, psi0: float = 0.0, seed: int = 0) -> TargetParameter:
    """Every coordinate nonzero, equal magnitudes, ``||psi||_1 = radius``."""
    rng = np.random.default_rng(seed)
    psi = rng.choice([-1.0, 1.0], size=k) * (radius / k)
    return TargetParameter(psi0, psi, SparsityNorm.L1, radius)


# ---------------------------------------------------------------------------
# Varshamov-Gilbert packings and hard instances
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Packing:
    """Binary vectors with pairwise Hamming distance at least ``min_distance``."""

    vectors: NDArray
    min_distance: int
    sparsity: int | None = None

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def pairwise_distances(self) -> NDArray:
        v = self.vectors.astype(np.int64)
        return (v[:, None, :] != v[None, :, :]).sum(axis=2)

    def is_valid(self) -> bool:
        """Exhaustive check of the distance and exact-sparsity invariants."""
        dist = self.pairwise_distances()
        np.fill_diagonal(dist, np.iinfo(np.int64).max)
        ok = len(self) < 2 or bool(dist.min() >= self.min_distance)
        if self.sparsity is not None:
            ok = ok and bool(np.all(self.vectors.sum(axis=1) == self.sparsity))
        return ok


def packing_target_count(k: int, s: int | None, cap: int) -> int:
    if s is None:
        return min(2 ** min(k // 8, 20), cap)
    return min(math.ceil((1 + k / (2 * s)) ** (s / 8)), cap)


def vg_packing(k: int, s: int | None = None, seed: int = 0, max_vectors: int = 4096) -> Packing:
    """Greedy randomized Varshamov-Gilbert packing.

    Dense mode (``s is None``) needs ``k >= 8`` and returns at least
    ``min(2**min(k // 8, 20), max_vectors)`` vectors of ``{0,1}^k`` at pairwise
    distance ``>= ceil(k/8)``, starting from the zero vector. Sparse mode
    needs ``1 <= s <= k/8`` and returns exactly ``s``-sparse vectors at
    pairwise distance ``>= ceil(s/2)``, at least
    ``min(ceil((1 + k/(2s))**(s/8)), max_vectors)`` of them.

    Candidates are drawn uniformly and kept when they respect the distance
    to every kept vector; the attempt budget is 1000 times the target count.
    """
    if s is None:
        if k < 8:
            raise InvalidInputError("dense packing needs k >= 8")
        min_dist = math.ceil(k / 8)
    else:
        if not 1 <= s <= k / 8:
            raise InvalidInputError("sparse packing needs 1 <= s <= k/8")
        min_dist = math.ceil(s / 2)
    if max_vectors < 1:
        raise InvalidInputError("max_vectors must be positive")
    target = packing_target_count(k, s, max_vectors)
    rng = np.random.default_rng(seed)
    nbytes = (k + 7) // 8
    kept = np.zeros((target, nbytes), dtype=np.uint8)
    rows = np.zeros((target, k), dtype=np.uint8)
    count = 0
    if s is None:
        count = 1  # zero vector
    budget = 1000 * target
    attempts = 0
    batch = 256
    while count < target:
        if attempts >= budget:
            raise InternalError(
                f"packing stalled at {count}/{target} vectors; existence is guaranteed, "
                "so this indicates a bug")
        if s is None:
            cand = (rng.random((batch, k)) < 0.5).astype(np.uint8)
        else:
            cand = np.zeros((batch, k), dtype=np.uint8)
            idx = np.argsort(rng.random((batch, k)), axis=1)[:, :s]
            np.put_along_axis(cand, idx, 1, axis=1)
        packed = np.packbits(cand, axis=1)
        for row, bits in zip(cand, packed):
            attempts += 1
            if count:
                dist = np.bitwise_count(np.bitwise_xor(kept[:count], bits)).sum(axis=1)
                if dist.min() < min_dist:
                    continue
            kept[count] = bits
            rows[count] = row
            count += 1
            if count == target or attempts >= budget:
                break
    return Packing(rows, min_dist, s)


def hard_instance_epsilon(k: int, n: int, s: int | None = None) -> float:
    """Default perturbation size of the lower-bound constructions."""
    if s is None:
        return min(0.5, math.sqrt(k * math.log(2) / (4 * n)))
    return min(0.5, math.sqrt(k * math.log(k / s) / (2 * n)))


def gen_hard_instance(k: int, n: int, s: int | None = None, epsilon: float | None = None,
                      seed: int = 0, d: int = 1, max_vectors: int = 4096,
                      split_ratio: float = 0.5) -> tuple[Dataset, DgpTruth]:
    """Draw from a minimax lower-bound construction.

    ``Y | A = a ~ Bernoulli(1/2 + omega_a * epsilon)`` with ``omega`` drawn
    uniformly from a Varshamov-Gilbert packing (dense when ``s`` is None,
    ``s``-sparse otherwise), uniform propensities and covariates independent
    of ``(A, Y)``. The returned truth has ``psi0 = 1/2`` and
    ``psi_a = omega_a * epsilon``.
    """
    if epsilon is None:
        epsilon = hard_instance_epsilon(k, n, s)
    elif not 0 <= epsilon <= 0.5:
        raise InvalidInputError("epsilon must lie in [0, 1/2] for valid Bernoulli means")
    pack_seed, omega_seed, data_seed = np.random.SeedSequence(seed).generate_state(3)
    packing = vg_packing(k, s, seed=int(pack_seed), max_vectors=max_vectors)
    rng = np.random.default_rng(int(omega_seed))
    omega = packing.vectors[int(rng.integers(len(packing)))].astype(float)
    psi = omega * epsilon
    budget = k if s is None else s
    target = TargetParameter(0.5, psi, SparsityNorm.L0, budget)
    dgp = DgpSpec(TreatmentSpec(TreatmentKind.SINGLE, k), n, target, d=d,
                  noise=OutcomeNoise.bernoulli(), seed=int(data_seed), split_ratio=split_ratio)
    return gen_single_multivalued(dgp)
