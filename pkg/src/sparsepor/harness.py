"""Monte Carlo replication engine, sweeps, report files and cross-validation of the budget."""

from __future__ import annotations

import csv
import enum
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.typing import NDArray

from .core import (
    D1,
    D2,
    Dataset,
    EstimatorConfig,
    InvalidInputError,
    Method,
    NumericError,
    SparsityNorm,
    TargetParameter,
    TreatmentKind,
    TreatmentSpec,
    row_keys,
)
from .dgp import (
    CovariateLaw,
    DgpSpec,
    DgpTruth,
    OutcomeNoise,
    PropensityProfile,
    dense_l1_target,
    gen_hard_instance,
    generate,
    sparse_target,
)
from .evaluation import prediction_mse_vector, rate_fit, weighted_mse_single
from .nuisance import (
    NuisanceModel,
    corrupt_nuisance,
    empirical_nuisance,
    oracle_nuisance,
)
from .pipeline import fit, solve
from .pseudo import scaled_pseudo_outcomes
from .risk import assemble

MASK64 = (1 << 64) - 1
METRICS = ("mse", "mse_d2", "zero_mse", "l1_error")


def splitmix64(x: int) -> int:
    """One SplitMix64 output step (a bijection of 64-bit integers)."""
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def replication_seed(base_seed: int, point: int, rep: int) -> int:
    """Seed of replication ``rep`` at sweep point ``point``; injective in ``(point, rep)``."""
    if not (0 <= point < 2**32 and 0 <= rep < 2**32):
        raise InvalidInputError("point and rep indices must fit in 32 bits")
    return splitmix64(splitmix64(base_seed & MASK64) ^ ((point << 32) | rep))


class NuisanceMode(str, enum.Enum):
    ORACLE = "oracle"
    EMPIRICAL = "empirical"
    CORRUPTED = "corrupted"


class Design(str, enum.Enum):
    STANDARD = "standard"
    HARD_DENSE = "hard_dense"
    HARD_SPARSE = "hard_sparse"


class TargetShape(str, enum.Enum):
    SPARSE = "sparse"  # s entries of size amplitude
    L1 = "l1"  # all entries equal in size, ||psi||_1 = s
    ZERO = "zero"


@dataclass(frozen=True)
class SweepPoint:
    n: int
    k: int
    s: float


@dataclass(frozen=True)
class ExperimentSpec:
    """Declarative description of a Monte Carlo experiment.

    ``psi`` is drawn once per sweep point from ``target_seed`` (fixed across
    replications); data, folds and corruption change with every replication.
    ``budget_rule='oracle'`` sets the estimator budget to ``||psi||_1``
    (Lasso) or ``||psi||_0`` (best subset) at each point.
    """

    sweep: tuple[SweepPoint, ...]
    replications: int = 1
    base_seed: int = 0
    kind: TreatmentKind = TreatmentKind.SINGLE
    design: Design = Design.STANDARD
    target: TargetShape = TargetShape.SPARSE
    amplitude: float = 1.0
    psi0: float = 0.0
    target_seed: int = 0
    d: int = 1
    propensity: PropensityProfile = field(default_factory=PropensityProfile)
    noise: OutcomeNoise = field(default_factory=OutcomeNoise)
    confounding: float = 0.0
    covariates: CovariateLaw = CovariateLaw.UNIFORM
    split_ratio: float = 0.5
    epsilon: float | None = None
    nuisance: NuisanceMode = NuisanceMode.ORACLE
    delta: float = 0.0
    eps: float = 0.0
    floor: float | None = None
    fallback: float = 0.0
    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    budget_rule: str = "fixed"
    psi0_known: bool = True
    psi: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        for name, enum_type in (("kind", TreatmentKind), ("design", Design),
                                ("target", TargetShape), ("nuisance", NuisanceMode),
                                ("covariates", CovariateLaw)):
            object.__setattr__(self, name, enum_type(getattr(self, name)))
        object.__setattr__(self, "sweep", tuple(self.sweep))
        if self.replications < 1:
            raise InvalidInputError("replications must be >= 1")
        if not self.sweep:
            raise InvalidInputError("sweep must not be empty")
        if self.budget_rule not in ("fixed", "oracle"):
            raise InvalidInputError("budget_rule must be 'fixed' or 'oracle'")
        if self.design is not Design.STANDARD and self.kind is not TreatmentKind.SINGLE:
            raise InvalidInputError("hard instances use single treatments")


def point_target(spec: ExperimentSpec, pt: SweepPoint) -> TargetParameter:
    if spec.psi:
        psi = np.asarray(spec.psi, dtype=float)
        if psi.size != pt.k:
            raise InvalidInputError(f"explicit psi has {psi.size} entries but k = {pt.k}")
        if spec.target is TargetShape.L1:
            return TargetParameter(spec.psi0, psi, SparsityNorm.L1, float(np.abs(psi).sum()))
        return TargetParameter(spec.psi0, psi, SparsityNorm.L0, int(np.count_nonzero(psi)))
    if spec.target is TargetShape.ZERO:
        return TargetParameter(spec.psi0, np.zeros(pt.k))
    if spec.target is TargetShape.L1:
        return dense_l1_target(pt.k, pt.s, spec.psi0, seed=spec.target_seed)
    return sparse_target(pt.k, int(pt.s), spec.amplitude, spec.psi0, seed=spec.target_seed)


def simulate(spec: ExperimentSpec, pt: SweepPoint, seed: int) -> tuple[Dataset, DgpTruth]:
    if spec.design is Design.HARD_DENSE:
        return gen_hard_instance(pt.k, pt.n, None, spec.epsilon, seed, spec.d,
                                 split_ratio=spec.split_ratio)
    if spec.design is Design.HARD_SPARSE:
        return gen_hard_instance(pt.k, pt.n, int(pt.s), spec.epsilon, seed, spec.d,
                                 split_ratio=spec.split_ratio)
    dgp = DgpSpec(TreatmentSpec(spec.kind, pt.k), pt.n, point_target(spec, pt), spec.d,
                  spec.propensity, spec.noise, spec.confounding, seed, spec.covariates,
                  spec.split_ratio)
    return generate(dgp)


def build_nuisance(spec: ExperimentSpec, dataset: Dataset, truth: DgpTruth) -> NuisanceModel:
    if spec.nuisance is NuisanceMode.EMPIRICAL:
        return empirical_nuisance(dataset, spec.floor, spec.fallback)
    base = oracle_nuisance(truth, dataset, spec.floor or 0.0)
    if spec.nuisance is NuisanceMode.CORRUPTED:
        return corrupt_nuisance(base, spec.delta, spec.eps, law=truth.covariates)
    return base


def point_config(spec: ExperimentSpec, target: TargetParameter) -> EstimatorConfig:
    cfg = spec.estimator
    if spec.budget_rule == "oracle":
        budget = float(target.l0) if cfg.method is Method.BEST_SUBSET else target.l1
        cfg = replace(cfg, budget=budget)
    return cfg


@dataclass(frozen=True)
class ReplicationRecord:
    point: int
    rep: int
    seed: int
    n: int
    k: int
    s: float
    status: str
    metrics: dict
    iterations: int = 0
    kkt: float = 0.0
    error: str = ""


def run_replication(spec: ExperimentSpec, point: int, rep: int) -> ReplicationRecord:
    """Simulate, fit and score one replication. Failures are recorded, not raised."""
    pt = spec.sweep[point]
    seed = replication_seed(spec.base_seed, point, rep)
    try:
        dataset, truth = simulate(spec, pt, seed)
        target = truth.target
        model = build_nuisance(spec, dataset, truth)
        cfg = point_config(spec, target)
        psi0 = target.psi0 if spec.psi0_known else None
        est = fit(dataset, model, cfg, psi0)
        if not np.all(np.isfinite(est.psi_hat)):
            raise NumericError("non-finite estimate")
        zero = np.zeros(pt.k)
        if dataset.spec.is_single:
            w = truth.level_probabilities()
            d2 = dataset.fold_part(D2)
            w2 = np.bincount(d2.a, minlength=pt.k + 1)[1:] / d2.n
            metrics = {
                "mse": weighted_mse_single(est.psi_hat, target.psi, w),
                "mse_d2": weighted_mse_single(est.psi_hat, target.psi, w2),
                "zero_mse": weighted_mse_single(zero, target.psi, w),
            }
        else:
            m = truth.second_moment()
            metrics = {
                "mse": prediction_mse_vector(est.psi_hat, target.psi, m),
                "mse_d2": float(np.mean((dataset.fold_part(D2).a @ (est.psi_hat - target.psi))**2)),
                "zero_mse": prediction_mse_vector(zero, target.psi, m),
            }
        metrics["l1_error"] = float(np.abs(est.psi_hat - target.psi).sum())
        return ReplicationRecord(point, rep, seed, pt.n, pt.k, pt.s, "ok", metrics,
                                 est.solution.iterations, est.solution.kkt)
    except (InvalidInputError, NumericError, ArithmeticError, ValueError,
            np.linalg.LinAlgError) as exc:
        nan = {m: math.nan for m in METRICS}
        return ReplicationRecord(point, rep, seed, pt.n, pt.k, pt.s, "failed", nan,
                                 error=f"{type(exc).__name__}: {exc}")


def _run_task(args):
    spec, point, rep = args
    return run_replication(spec, point, rep)


@dataclass(frozen=True)
class PointSummary:
    point: int
    n: int
    k: int
    s: float
    replications: int
    failed: int
    mean: dict
    se: dict

    @property
    def ok(self) -> bool:
        return self.failed < self.replications


@dataclass(frozen=True)
class ExperimentReport:
    records: tuple[ReplicationRecord, ...]
    summaries: tuple[PointSummary, ...]
    rate_fits: dict

    @property
    def all_failed(self) -> bool:
        return not any(s.ok for s in self.summaries)


def _mean_se(values: list[float]) -> tuple[float, float]:
    r = len(values)
    if r == 0:
        return math.nan, math.nan
    mean = math.fsum(values) / r
    if r == 1:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (r - 1)
    return mean, math.sqrt(var / r)


def summarize(spec: ExperimentSpec, records) -> ExperimentReport:
    """Aggregate records in ``(point, rep)`` order so results do not depend on scheduling."""
    records = tuple(sorted(records, key=lambda r: (r.point, r.rep)))
    summaries = []
    for i, pt in enumerate(spec.sweep):
        mine = [r for r in records if r.point == i]
        good = [r for r in mine if r.status == "ok"]
        mean, se = {}, {}
        for m in METRICS:
            mean[m], se[m] = _mean_se([r.metrics[m] for r in good])
        summaries.append(PointSummary(i, pt.n, pt.k, pt.s, len(mine), len(mine) - len(good),
                                      mean, se))
    fits = {}
    usable = [s for s in summaries if s.ok]
    for m in METRICS:
        pts = [(s.n, s.mean[m]) for s in usable if s.mean[m] > 0]
        if len({p[0] for p in pts}) >= 2:
            fits[m] = rate_fit(pts)
    return ExperimentReport(records, tuple(summaries), fits)


def run_experiment(spec: ExperimentSpec, threads: int = 1) -> ExperimentReport:
    """Run every ``(point, rep)`` pair, in a process pool when ``threads > 1``."""
    tasks = [(spec, p, r) for p in range(len(spec.sweep)) for r in range(spec.replications)]
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(threads, len(tasks))) as ex:
            records = list(ex.map(_run_task, tasks, chunksize=max(1, len(tasks) // (4 * threads))))
    else:
        records = [_run_task(t) for t in tasks]
    return summarize(spec, records)


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_report(report: ExperimentReport, out_dir: str) -> None:
    """Write ``replications.csv``, ``summary.csv`` and ``ratefits.csv``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "replications.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "rep", "seed", "n", "k", "s", "status", *METRICS,
                    "iterations", "kkt", "error"])
        for r in report.records:
            w.writerow([r.point, r.rep, r.seed, r.n, r.k, _fmt(float(r.s)), r.status,
                        *(_fmt(float(r.metrics[m])) for m in METRICS), r.iterations,
                        _fmt(float(r.kkt)), r.error])
    with open(os.path.join(out_dir, "summary.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["point", "n", "k", "s", "replications", "failed",
                    *(f"{m}_{stat}" for m in METRICS for stat in ("mean", "se"))])
        for s in report.summaries:
            w.writerow([s.point, s.n, s.k, _fmt(float(s.s)), s.replications, s.failed,
                        *(_fmt(float(s.mean[m] if stat == "mean" else s.se[m]))
                          for m in METRICS for stat in ("mean", "se"))])
    with open(os.path.join(out_dir, "ratefits.csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "axis", "slope", "intercept", "r_squared", "slope_se", "points"])
        for m, f in report.rate_fits.items():
            pts = ";".join(f"{int(n)}:{mse!r}" for n, mse in f.points)
            w.writerow([m, "n", _fmt(f.slope), _fmt(f.intercept), _fmt(f.r_squared),
                        _fmt(f.slope_se), pts])


# ---------------------------------------------------------------------------
# cross-validation of the budget
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CVResult:
    chosen: float
    candidates: tuple[float, ...]
    curve: tuple[float, ...]


def cv_folds(dataset: Dataset, folds: int) -> NDArray:
    """Stratified round-robin fold ids (0..folds-1) for the ``D2`` rows, -1 on ``D1``.

    ``D2`` rows are ordered by treatment (then row index) and dealt out in
    turn, so each level is spread as evenly as possible over the folds.
    """
    idx = np.nonzero(dataset.fold == D2)[0]
    if idx.size < folds:
        raise InvalidInputError(f"D2 has {idx.size} rows, fewer than the {folds} CV folds")
    if dataset.spec.is_single:
        key = dataset.a[idx]
        order = idx[np.lexsort((idx, key))]
    else:
        keys = row_keys(dataset.a[idx])
        order = idx[sorted(range(idx.size), key=lambda i: (keys[i], idx[i]))]
    out = np.full(dataset.n, -1, dtype=np.int64)
    out[order] = np.arange(order.size) % folds
    return out


def cross_validate_s(dataset: Dataset, model: NuisanceModel, candidates, psi0: float,
                     cfg: EstimatorConfig | None = None, folds: int = 5) -> CVResult:
    """Choose the budget by held-out estimated risk on ``D2``.

    For each CV fold the estimator is fitted on the other ``D2`` folds and
    scored by the risk assembled from the held-out rows, with the same
    ``D1`` nuisances and weights. Ties go to the smallest budget.
    """
    cands = tuple(float(c) for c in candidates)
    if not cands:
        raise InvalidInputError("candidates must not be empty")
    if folds < 2:
        raise InvalidInputError("need at least 2 CV folds")
    cfg = cfg or EstimatorConfig()
    if len(cands) == 1:
        return CVResult(cands[0], cands, (math.nan,))
    fid = cv_folds(dataset, folds)
    total = [0.0] * len(cands)
    is_d1 = dataset.fold == D1
    for f in range(folds):
        train = dataset.subset(is_d1 | ((fid >= 0) & (fid != f)))
        test = dataset.subset(is_d1 | (fid == f))
        train_risk = assemble(scaled_pseudo_outcomes(train, model, psi0))
        test_risk = assemble(scaled_pseudo_outcomes(test, model, psi0))
        for j, c in enumerate(cands):
            sol = solve(train_risk, replace(cfg, budget=c))
            total[j] += test_risk.evaluate(sol.beta)
    curve = tuple(t / folds for t in total)
    best = min(curve)
    tol = 1e-12 * max(1.0, abs(best))
    chosen = min(c for c, v in zip(cands, curve) if v <= best + tol)
    return CVResult(chosen, cands, curve)


__all__ = [
    "CVResult", "Design", "ExperimentReport", "ExperimentSpec", "NuisanceMode", "PointSummary",
    "ReplicationRecord", "SweepPoint", "TargetShape", "cross_validate_s",
    "cv_folds", "replication_seed", "run_experiment", "run_replication", "splitmix64",
    "summarize", "write_report",
]
