"""Empirical risks as quadratic forms ``R(beta) = beta.G beta - 2 b.beta + constant``.

The additive constant of the risks is dropped (it does not move the
minimizer) except for the alternative risk, where it is kept so that
:func:`evaluate` reproduces the literal double sum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import InvalidInputError, LevelProportions, NumericError, match_rows
from .pseudo import PseudoOutcomeTable

DENSE_GRAM_MAX_K = 4096


@dataclass(frozen=True, eq=False)
class RiskQuadratic:
    """Quadratic risk with a diagonal, dense or implicit Gram term.

    Exactly one of ``diag``, ``gram`` and ``design`` is set. ``design`` is
    an ``n x k`` matrix ``V`` standing for ``G = V^T V / n``.
    """

    b: NDArray
    diag: NDArray | None = None
    gram: NDArray | None = None
    design: NDArray | None = None
    constant: float = 0.0

    def __post_init__(self) -> None:
        set_ = [m is not None for m in (self.diag, self.gram, self.design)]
        if sum(set_) != 1:
            raise InvalidInputError("exactly one Gram representation must be given")
        b = np.asarray(self.b, dtype=float)
        object.__setattr__(self, "b", b)
        if self.diag is not None and np.shape(self.diag) != b.shape:
            raise InvalidInputError("diag and b must have the same length")
        if self.gram is not None:
            g = np.asarray(self.gram, dtype=float)
            if g.shape != (b.size, b.size):
                raise InvalidInputError("gram must be k x k")
            object.__setattr__(self, "gram", 0.5 * (g + g.T))
        if self.design is not None and np.shape(self.design)[1] != b.size:
            raise InvalidInputError("design must have k columns")

    @property
    def k(self) -> int:
        return int(self.b.size)

    @property
    def is_diagonal(self) -> bool:
        return self.diag is not None

    def matvec(self, v: NDArray) -> NDArray:
        if self.diag is not None:
            return self.diag * v
        if self.gram is not None:
            return self.gram @ v
        return self.design.T @ (self.design @ v) / self.design.shape[0]

    def dense_gram(self) -> NDArray:
        if self.diag is not None:
            return np.diag(self.diag)
        if self.gram is not None:
            return self.gram
        return self.design.T @ self.design / self.design.shape[0]

    def gram_diagonal(self) -> NDArray:
        if self.diag is not None:
            return self.diag
        if self.gram is not None:
            return np.diag(self.gram).copy()
        return (self.design**2).mean(axis=0)

    def evaluate(self, beta: NDArray) -> float:
        return evaluate(self, beta)

    def gradient(self, beta: NDArray) -> NDArray:
        return 2.0 * (self.matvec(beta) - self.b)

    def check_psd(self, tol: float = 1e-10) -> None:
        """Raise :class:`NumericError` if ``G`` has an eigenvalue below ``-tol`` (relative)."""
        if self.diag is not None:
            lo, scale = float(self.diag.min(initial=0.0)), float(np.abs(self.diag).max(initial=1.0))
        elif self.gram is not None:
            eig = np.linalg.eigvalsh(self.gram)
            lo, scale = float(eig[0]), float(max(abs(eig[-1]), 1.0))
        else:
            return  # V^T V is PSD by construction
        if lo < -tol * scale:
            raise NumericError(f"Gram matrix is not PSD (min eigenvalue {lo:.3e})")


def evaluate(risk: RiskQuadratic, beta: NDArray) -> float:
    """``beta.G beta - 2 b.beta + constant``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (risk.k,):
        raise InvalidInputError(f"beta must have shape ({risk.k},), got {beta.shape}")
    return float(beta @ risk.matvec(beta) - 2.0 * risk.b @ beta + risk.constant)


def _varpi_of(table: PseudoOutcomeTable, varpi: LevelProportions | None) -> NDArray:
    varpi = table.model.varpi if varpi is None else varpi
    if table.model.spec.is_single:
        return varpi.weights[np.asarray(table.levels) - 1]
    idx = match_rows(table.levels, varpi.levels)
    return np.where(idx >= 0, varpi.weights[np.maximum(idx, 0)], 0.0)


def assemble_single(table: PseudoOutcomeTable,
                    varpi: LevelProportions | None = None) -> RiskQuadratic:
    """Risk for a single multi-valued treatment on ``D2``.

    ``G = diag(k N_a / n2)`` with ``N_a`` the ``D2`` count of level ``a``, and
    ``b_a = k varpi_a P_n^2{phi_a}`` with unscaled pseudo-outcomes ``phi_a``
    and ``D1`` proportions ``varpi_a``.
    """
    spec = table.model.spec
    if not spec.is_single:
        raise InvalidInputError("assemble_single needs a single treatment table")
    k, n2 = spec.k, table.n2
    counts = np.bincount(table.part.a, minlength=k + 1)[1:]
    diag = k * counts / n2
    b = np.zeros(k)
    b[np.asarray(table.levels) - 1] = k * _varpi_of(table, varpi) * table.level_means()
    return RiskQuadratic(b, diag=diag)


def assemble_vector(table: PseudoOutcomeTable,
                    varpi: LevelProportions | None = None) -> RiskQuadratic:
    """Risk for a binary vector treatment on ``D2``.

    ``G = P_n^2{A A^T}`` and ``b = sum_a varpi_a P_n^2{phi_a} a`` over the
    distinct ``D1`` combinations ``a``.
    """
    spec = table.model.spec
    if spec.is_single:
        raise InvalidInputError("assemble_vector needs a vector treatment table")
    a2 = table.part.a.astype(float)
    weights = _varpi_of(table, varpi) * table.level_means()
    b = np.asarray(table.levels, dtype=float).T @ weights if len(table.levels) else np.zeros(spec.k)
    if spec.k > DENSE_GRAM_MAX_K:
        return RiskQuadratic(b, design=a2)
    return RiskQuadratic(b, gram=a2.T @ a2 / table.n2)


def assemble(table: PseudoOutcomeTable, varpi: LevelProportions | None = None) -> RiskQuadratic:
    if table.model.spec.is_single:
        return assemble_single(table, varpi)
    return assemble_vector(table, varpi)


@dataclass(frozen=True, eq=False)
class AlternativeRisk:
    """Separable fixed-weight risk ``P_n^2 sum_a w_a (phi_a - beta_a)^2``.

    ``degenerate`` flags levels with zero weight, where ``beta_a`` is not
    identified by the risk.
    """

    risk: RiskQuadratic
    means: NDArray
    degenerate: NDArray


def assemble_alternative(table: PseudoOutcomeTable, weights: NDArray | float) -> AlternativeRisk:
    """Fixed-weight alternative risk from an unscaled table covering all ``k`` levels."""
    spec = table.model.spec
    if not spec.is_single:
        raise InvalidInputError("the alternative risk is defined for single treatments")
    k = spec.k
    if len(table.levels) != k:
        raise InvalidInputError("the alternative risk needs a table over all k levels "
                                "(build it with all_levels=True)")
    w = np.broadcast_to(np.asarray(weights, dtype=float), (k,)).copy()
    if np.any(w < 0):
        raise InvalidInputError("weights must be non-negative")
    means = table.level_means()
    second = np.array([np.mean(table.column(j, scaled=False) ** 2) for j in range(k)])
    risk = RiskQuadratic(w * means, diag=w, constant=float(w @ second))
    return AlternativeRisk(risk, means, w == 0)
