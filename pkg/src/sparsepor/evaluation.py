"""Error metrics and log-log rate fits."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .core import InvalidInputError


def weighted_mse_single(psi_hat: NDArray, psi_true: NDArray, weights: NDArray) -> float:
    """``sum_a w_a (psi_hat_a - psi_a)^2`` with weights summing to one."""
    psi_hat, psi_true, w = (np.asarray(v, dtype=float) for v in (psi_hat, psi_true, weights))
    if not psi_hat.shape == psi_true.shape == w.shape or psi_hat.ndim != 1:
        raise InvalidInputError("psi_hat, psi_true and weights must be vectors of equal length")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidInputError("weights must be non-negative and sum to one")
    return float(w @ (psi_hat - psi_true) ** 2)


def prediction_mse_vector(psi_hat: NDArray, psi_true: NDArray, second_moment: NDArray,
                          tol: float = 1e-10) -> float:
    """``Delta^T M Delta`` with ``Delta = psi_hat - psi_true`` and ``M = E[A A^T]``."""
    delta = np.asarray(psi_hat, dtype=float) - np.asarray(psi_true, dtype=float)
    m = np.asarray(second_moment, dtype=float)
    if m.shape != (delta.size, delta.size):
        raise InvalidInputError("second moment must be k x k")
    if not np.allclose(m, m.T, atol=tol) or np.linalg.eigvalsh(0.5 * (m + m.T))[0] < -tol:
        raise InvalidInputError("second moment matrix must be symmetric PSD")
    return float(delta @ m @ delta)


def empirical_second_moment(a: NDArray) -> NDArray:
    a = np.asarray(a, dtype=float)
    return a.T @ a / a.shape[0]


def bernoulli_half_second_moment(k: int) -> NDArray:
    """``E[A A^T]`` for iid Bernoulli(1/2) components: 1/4 off the diagonal, 1/2 on it."""
    m = np.full((k, k), 0.25)
    np.fill_diagonal(m, 0.5)
    return m


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through ``(log n, log mse)``."""

    slope: float
    intercept: float
    r_squared: float
    slope_se: float
    points: tuple[tuple[float, float], ...]


def rate_fit(points) -> RateFit:
    """Fit ``log(mse) = intercept + slope * log(n)``."""
    pts = tuple((float(n), float(m)) for n, m in points)
    if len(pts) < 2:
        raise InvalidInputError("a rate fit needs at least two points")
    ns, ms = np.array(pts).T
    if np.any(ms <= 0) or np.any(ns <= 0):
        raise InvalidInputError("sample sizes and mse values must be positive")
    if np.unique(ns).size < 2:
        raise InvalidInputError("a rate fit needs at least two distinct sample sizes")
    lx, ly = np.log(ns), np.log(ms)
    if np.ptp(ly) == 0:
        return RateFit(0.0, float(ly[0]), 1.0, 0.0, pts)
    fit = stats.linregress(lx, ly)
    se = float(fit.stderr) if len(pts) > 2 else 0.0
    return RateFit(float(fit.slope), float(fit.intercept), float(fit.rvalue**2), se, pts)
