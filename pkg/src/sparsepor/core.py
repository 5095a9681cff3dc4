"""Shared domain types, fold splitting and empirical treatment proportions."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

D1 = 1
D2 = 2


class InvalidInputError(ValueError):
    """Raised when arguments violate a documented precondition."""


class NumericError(ArithmeticError):
    """Raised when a numerical routine cannot produce a trustworthy answer."""


class InternalError(RuntimeError):
    """Raised when an internal invariant is violated (indicates a bug)."""


class TreatmentKind(str, enum.Enum):
    SINGLE = "single"
    VECTOR = "vector"


class SparsityNorm(str, enum.Enum):
    L0 = "L0"
    L1 = "L1"


class Method(str, enum.Enum):
    LASSO = "lasso"
    BEST_SUBSET = "best_subset"
    SOFT_THRESHOLD = "soft_threshold"
    HARD_THRESHOLD = "hard_threshold"
    TRIVIAL_ZERO = "trivial_zero"
    PLUGIN_MEAN = "plugin_mean"


@dataclass(frozen=True)
class TreatmentSpec:
    """Treatment regime.

    ``SINGLE`` treatments take values in ``{1, ..., k}``; ``VECTOR``
    treatments are length-``k`` binary vectors.
    """

    kind: TreatmentKind
    k: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", TreatmentKind(self.kind))
        if int(self.k) != self.k or self.k < 1:
            raise InvalidInputError(f"k must be a positive integer, got {self.k!r}")
        object.__setattr__(self, "k", int(self.k))

    @property
    def is_single(self) -> bool:
        return self.kind is TreatmentKind.SINGLE

    def validate_treatments(self, a: NDArray) -> NDArray:
        """Return ``a`` in canonical dtype, raising on values outside the regime."""
        a = np.asarray(a)
        if self.is_single:
            if a.ndim != 1:
                raise InvalidInputError("single treatments must be a 1-d array of levels")
            if a.size and (np.any(a != np.round(a)) or a.min() < 1 or a.max() > self.k):
                raise InvalidInputError(f"levels must be integers in 1..{self.k}")
            return a.astype(np.int64)
        if a.ndim != 2 or a.shape[1] != self.k:
            raise InvalidInputError(f"vector treatments must have shape (n, {self.k})")
        if a.size and not np.all((a == 0) | (a == 1)):
            raise InvalidInputError("vector treatment entries must be 0 or 1")
        return a.astype(np.uint8)


def _freeze(arr: NDArray) -> NDArray:
    arr = np.array(arr, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Dataset:
    """``n`` observations ``(X, A, Y)`` with a fold label (``D1``/``D2``) per row."""

    spec: TreatmentSpec
    x: NDArray
    a: NDArray
    y: NDArray
    fold: NDArray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        a = self.spec.validate_treatments(self.a)
        y = np.asarray(self.y, dtype=float)
        fold = np.asarray(self.fold)
        n = y.shape[0]
        if y.ndim != 1 or x.shape[0] != n or a.shape[0] != n or fold.shape != (n,):
            raise InvalidInputError("x, a, y and fold must all have length n")
        if fold.size and not np.all((fold == D1) | (fold == D2)):
            raise InvalidInputError("fold labels must be 1 (D1) or 2 (D2)")
        object.__setattr__(self, "x", _freeze(x))
        object.__setattr__(self, "a", _freeze(a))
        object.__setattr__(self, "y", _freeze(y))
        object.__setattr__(self, "fold", _freeze(fold.astype(np.int8)))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def d(self) -> int:
        return int(self.x.shape[1])

    def subset(self, mask: NDArray) -> Dataset:
        mask = np.asarray(mask)
        return Dataset(self.spec, self.x[mask], self.a[mask], self.y[mask], self.fold[mask])

    def fold_part(self, label: int) -> Dataset:
        """Rows carrying fold ``label``."""
        return self.subset(self.fold == label)

    def with_folds(self, fold: NDArray) -> Dataset:
        return Dataset(self.spec, self.x, self.a, self.y, fold)


@dataclass(frozen=True)
class TargetParameter:
    """Intercept ``psi0`` and deviation vector ``psi`` with its sparsity budget."""

    psi0: float
    psi: NDArray
    sparsity_norm: SparsityNorm = SparsityNorm.L0
    s: float = field(default=math.inf)

    def __post_init__(self) -> None:
        psi = _freeze(np.asarray(self.psi, dtype=float).ravel())
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sparsity_norm", SparsityNorm(self.sparsity_norm))
        object.__setattr__(self, "psi0", float(self.psi0))
        if self.s < 0:
            raise InvalidInputError("sparsity budget must be non-negative")
        if self.sparsity_norm is SparsityNorm.L0:
            if np.count_nonzero(psi) > self.s:
                raise InvalidInputError("psi has more nonzero entries than the L0 budget")
        elif np.abs(psi).sum() > self.s * (1 + 1e-12):
            raise InvalidInputError("psi exceeds the L1 budget")

    @property
    def k(self) -> int:
        return int(self.psi.shape[0])

    @property
    def l0(self) -> int:
        return int(np.count_nonzero(self.psi))

    @property
    def l1(self) -> float:
        return float(np.abs(self.psi).sum())


@dataclass(frozen=True)
class EstimatorConfig:
    method: Method = Method.LASSO
    budget: float = 0.0
    solver_tol: float = 1e-10
    max_iters: int | None = None
    subset_mode: str = "exact_diagonal"

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if not self.budget >= 0:
            raise InvalidInputError("budget must be >= 0")
        if not self.solver_tol > 0:
            raise InvalidInputError("solver_tol must be > 0")
        if self.max_iters is not None and self.max_iters < 1:
            raise InvalidInputError("max_iters must be >= 1")

    def iteration_cap(self, k: int) -> int:
        # 50*k alone is far too few for ill-conditioned dense problems
        return self.max_iters if self.max_iters is not None else max(50 * k, 20_000)


def split_folds(n: int, ratio: float = 0.5, seed: int = 0) -> NDArray:
    """Randomly partition ``n`` indices into ``D1`` (``round(ratio * n)`` rows) and ``D2``.

    Returns an ``int8`` array of labels ``1``/``2``. Rounding is half-up and
    the ``D1`` size is clamped to ``[1, n - 1]`` so both folds are non-empty.
    """
    if n < 2:
        raise InvalidInputError(f"need n >= 2 to split into two folds, got {n}")
    if not 0 < ratio < 1:
        raise InvalidInputError("ratio must lie in (0, 1)")
    n1 = min(max(math.floor(ratio * n + 0.5), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    fold = np.full(n, D2, dtype=np.int8)
    fold[order[:n1]] = D1
    return fold


@dataclass(frozen=True)
class LevelProportions:
    """Empirical treatment proportions.

    For single treatments ``levels`` is ``1..k`` and ``weights`` has length
    ``k`` (zeros for unobserved levels). For vector treatments ``levels``
    holds the distinct observed combinations (rows, lexicographic order) and
    ``weights`` their frequencies.
    """

    spec: TreatmentSpec
    levels: NDArray
    weights: NDArray

    @property
    def observed(self) -> NDArray:
        """Boolean mask of levels with positive weight."""
        return self.weights > 0


def empirical_proportions(dataset: Dataset, fold: int | None = D1) -> LevelProportions:
    """Treatment proportions on one fold (or the whole dataset if ``fold`` is None)."""
    part = dataset if fold is None else dataset.fold_part(fold)
    if part.n == 0:
        raise InvalidInputError("cannot compute proportions on an empty fold")
    spec = dataset.spec
    if spec.is_single:
        counts = np.bincount(part.a, minlength=spec.k + 1)[1:]
        return LevelProportions(spec, np.arange(1, spec.k + 1), counts / part.n)
    levels, counts = np.unique(part.a, axis=0, return_counts=True)
    return LevelProportions(spec, levels.astype(np.uint8), counts / part.n)


def one_hot(levels: NDArray, k: int) -> NDArray:
    """Encode 1-based levels as one-hot rows."""
    levels = np.asarray(levels, dtype=np.int64)
    out = np.zeros((levels.shape[0], k), dtype=np.uint8)
    out[np.arange(levels.shape[0]), levels - 1] = 1
    return out


def from_one_hot(rows: NDArray) -> NDArray:
    rows = np.asarray(rows)
    if np.any(rows.sum(axis=1) != 1):
        raise InvalidInputError("rows are not one-hot")
    return rows.argmax(axis=1).astype(np.int64) + 1


def row_keys(rows: NDArray) -> list[bytes]:
    """Hashable keys for binary rows (packed bits)."""
    packed = np.packbits(np.asarray(rows, dtype=np.uint8), axis=1)
    return [r.tobytes() for r in packed]


def match_rows(queries: NDArray, levels: NDArray) -> NDArray:
    """Index of each query row within ``levels`` (or ``-1`` when absent)."""
    table = {key: i for i, key in enumerate(row_keys(levels))}
    return np.fromiter((table.get(key, -1) for key in row_keys(queries)),
                       dtype=np.int64, count=len(queries))
