"""Constrained minimization of quadratic risks.

* :func:`solve_lasso_constrained` minimizes over ``||beta||_1 <= s``: exact
  sort-and-threshold for diagonal Gram matrices, accelerated projected
  gradient otherwise.
* :func:`solve_best_subset` minimizes over ``||beta||_0 <= s``.
* :func:`brute_force_oracle` is an independent grid/enumeration check used by tests.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .core import EstimatorConfig, InvalidInputError, NumericError
from .risk import RiskQuadratic, evaluate

EXHAUSTIVE_BUDGET = 10**6
_ZERO_GRAM = 1e-14


@dataclass(frozen=True)
class Solution:
    """Solver output.

    ``kkt`` is the projected-gradient residual
    ``||beta - P(beta - grad/L)||_inf`` (0 for closed forms that are exact by
    construction). ``exact`` marks closed-form or enumeration answers and
    ``heuristic`` marks greedy ones.
    """

    beta: NDArray
    objective: float
    iterations: int = 0
    kkt: float = 0.0
    exact: bool = False
    converged: bool = True
    heuristic: bool = False


def _finish(risk: RiskQuadratic, beta: NDArray, **kw) -> Solution:
    beta = np.asarray(beta, dtype=float) + 0.0  # drop negative zeros
    return Solution(beta, evaluate(risk, beta), **kw)


# ---------------------------------------------------------------------------
# thresholding and projections
# ---------------------------------------------------------------------------

def soft_threshold_estimator(means: NDArray, lam: float) -> NDArray:
    """``sign(m) * (|m| - lam)_+`` coordinatewise."""
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    m = np.asarray(means, dtype=float)
    return np.sign(m) * np.maximum(np.abs(m) - lam, 0.0)


def hard_threshold_estimator(means: NDArray, lam: float) -> NDArray:
    """``m * 1(|m| > lam)`` coordinatewise."""
    if lam < 0:
        raise InvalidInputError("lambda must be non-negative")
    m = np.asarray(means, dtype=float)
    return np.where(np.abs(m) > lam, m, 0.0)


def project_l1_ball(v: NDArray, radius: float) -> NDArray:
    """Euclidean projection onto ``{beta : ||beta||_1 <= radius}`` (sort and threshold)."""
    if radius < 0:
        raise InvalidInputError("radius must be non-negative")
    v = np.asarray(v, dtype=float)
    if radius == 0:
        return np.zeros_like(v)
    u = np.abs(v)
    if u.sum() <= radius:
        return v.copy()
    srt = np.sort(u)[::-1]
    css = np.cumsum(srt)
    j = np.arange(1, u.size + 1)
    keep = srt * j > css - radius
    keep[0] = True  # always true in exact arithmetic; rounding can flip it for tiny radii
    rho = np.nonzero(keep)[0][-1]
    theta = (css[rho] - radius) / (rho + 1.0)
    return np.sign(v) * np.maximum(u - theta, 0.0)


def _lambda_max(risk: RiskQuadratic, iters: int = 50) -> float:
    """Largest eigenvalue of ``G``: exact for diagonal and small dense, power iteration otherwise."""
    if risk.is_diagonal:
        return float(risk.diag.max(initial=0.0))
    if risk.gram is not None and risk.k <= 512:
        return float(np.linalg.eigvalsh(risk.gram)[-1])
    v = np.ones(risk.k) / math.sqrt(risk.k)
    lam = 0.0
    for _ in range(iters):
        w = risk.matvec(v)
        nrm = float(np.linalg.norm(w))
        if nrm == 0:
            return 0.0
        new = float(v @ w)
        v = w / nrm
        if abs(new - lam) <= 1e-6 * max(abs(new), 1e-300):
            lam = new
            break
        lam = new
    return max(lam, float(np.linalg.norm(risk.matvec(v))))


def kkt_residual(risk: RiskQuadratic, beta: NDArray, radius: float, lip: float | None = None) -> float:
    """``||beta - P_s(beta - grad R(beta) / L)||_inf`` for the L1 ball of ``radius``."""
    if lip is None:
        lip = 2.0 * _lambda_max(risk) * 1.01
    lip = lip if lip > 0 else 1.0
    step = project_l1_ball(beta - risk.gradient(beta) / lip, radius)
    return float(np.max(np.abs(beta - step), initial=0.0))


# ---------------------------------------------------------------------------
# Lasso
# ---------------------------------------------------------------------------

def _diagonal_l1(g: NDArray, b: NDArray, s: float) -> NDArray:
    """Exact minimizer of ``sum g_a beta_a^2 - 2 b_a beta_a`` over the L1 ball.

    Coordinates with positive ``g`` follow ``sign(b)(|b| - theta/2)_+ / g``
    for a multiplier ``theta >= 0``. Zero-Gram coordinates are linear with
    slope ``2|b|`` per unit of budget; if no multiplier below the largest
    such slope exhausts the budget, the remainder goes to that coordinate
    (lowest index on ties).
    """
    k = b.size
    beta = np.zeros(k)
    if s == 0:
        return beta
    quad = g > _ZERO_GRAM
    ab = np.abs(b)
    lin = (~quad) & (ab > 0)
    t_star = float(2 * ab[lin].max()) if np.any(lin) else 0.0

    def spend(theta: float) -> float:
        return float(np.sum(np.maximum(ab[quad] - theta / 2, 0.0) / g[quad]))

    if spend(t_star) <= s:
        theta = t_star
    else:
        # solve spend(theta) = s on the piecewise-linear decreasing curve
        bq, gq = ab[quad], g[quad]
        order = np.argsort(-bq, kind="stable")
        bq, gq = bq[order], gq[order]
        num = np.cumsum(bq / gq)
        den = np.cumsum(1.0 / gq)
        # the first active set whose multiplier clears the next breakpoint is the right one
        theta = 0.0
        for m in range(bq.size):
            cand = 2.0 * (num[m] - s) / den[m]
            lower = 2.0 * bq[m + 1] if m + 1 < bq.size else 0.0
            if cand >= lower * (1 - 1e-12):
                theta = max(cand, 0.0)
                break
        theta = max(theta, t_star)
    beta[quad] = np.sign(b[quad]) * np.maximum(ab[quad] - theta / 2, 0.0) / g[quad]
    left = s - np.abs(beta).sum()
    if np.any(lin) and left > 0 and theta <= t_star:
        idx = np.nonzero(lin)[0]
        top = idx[np.argmax(ab[idx])]
        beta[top] = np.sign(b[top]) * left
    return beta


def _accelerated(risk: RiskQuadratic, prox, kkt, tol: float, max_iters: int,
                 penalty=lambda beta: 0.0) -> tuple[NDArray, int, float, bool]:
    """Monotone accelerated proximal gradient with adaptive restart.

    ``prox(v, step)`` maps a gradient step onto the feasible set (or applies
    a penalty's proximal map). ``L`` starts at ``1.01 * 2 lambda_max(G)`` and
    doubles whenever the quadratic upper bound fails.
    """
    lip = 2.0 * _lambda_max(risk) * 1.01
    if lip <= 0:
        lip = 1.0
    x = prox(np.zeros(risk.k), 1.0 / lip)
    fx = evaluate(risk, x) + penalty(x)
    y, t = x.copy(), 1.0
    res = kkt(x, lip)
    it = 0
    stalled = 0
    while res > tol and it < max_iters:
        it += 1
        gy = risk.gradient(y)
        z = prox(y - gy / lip, 1.0 / lip)
        d = z - y
        if d @ risk.matvec(d) > 0.5 * lip * (d @ d) * (1 + 1e-12):
            lip *= 2.0
            y, t = x.copy(), 1.0
            continue
        fz = evaluate(risk, z) + penalty(z)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        # near the optimum decreases drop below the resolution of the objective
        if fz <= fx + 8 * np.finfo(float).eps * max(1.0, abs(fx)):
            x_prev, x, fx = x, z, fz
            y = x + ((t - 1.0) / t_next) * (x - x_prev)
            t = t_next
            stalled = stalled + 1 if np.array_equal(x, x_prev) else 0
        else:
            y, t = x.copy(), 1.0  # restart from the incumbent
            stalled += 1
        res = kkt(x, lip)
        if stalled >= 50:
            break
    return x, it, res, res <= tol


def solve_lasso_constrained(risk: RiskQuadratic, s: float,
                            cfg: EstimatorConfig | None = None) -> Solution:
    """Minimize the risk subject to ``||beta||_1 <= s``."""
    cfg = cfg or EstimatorConfig()
    if not s >= 0:
        raise InvalidInputError("the L1 budget must be non-negative")
    risk.check_psd()
    if s == 0:
        return _finish(risk, np.zeros(risk.k), exact=True)
    if risk.is_diagonal:
        beta = _diagonal_l1(risk.diag, risk.b, float(s))
        return _finish(risk, beta, kkt=kkt_residual(risk, beta, s), exact=True)
    if np.isinf(s):
        return solve_plugin_mean(risk)
    prox = lambda v, step: project_l1_ball(v, s)  # noqa: E731
    kkt = lambda beta, lip: kkt_residual(risk, beta, s, lip)  # noqa: E731
    beta, it, res, ok = _accelerated(risk, prox, kkt, cfg.solver_tol, cfg.iteration_cap(risk.k))
    return _finish(risk, beta, iterations=it, kkt=res, converged=ok)


def solve_lasso_penalized(risk: RiskQuadratic, lam: float,
                          cfg: EstimatorConfig | None = None) -> Solution:
    """Minimize ``R(beta) + lam ||beta||_1``.

    Closed form for diagonal ``G``: ``beta_a = sign(b_a)(|b_a| - lam/2)_+ / g_a``.
    The reported objective excludes the penalty.
    """
    cfg = cfg or EstimatorConfig()
    if lam < 0:
        raise InvalidInputError("penalty must be non-negative")
    if risk.is_diagonal:
        g, b = risk.diag, risk.b
        quad = g > _ZERO_GRAM
        if np.any(~quad & (2 * np.abs(b) > lam)):
            raise NumericError("penalized risk is unbounded below along a zero-Gram coordinate")
        beta = np.zeros(risk.k)
        beta[quad] = soft_threshold_estimator(b[quad], lam / 2) / g[quad]
        return _finish(risk, beta, exact=True)
    prox = lambda v, step: soft_threshold_estimator(v, lam * step)  # noqa: E731

    def kkt(beta, lip):
        step = soft_threshold_estimator(beta - risk.gradient(beta) / lip, lam / lip)
        return float(np.max(np.abs(beta - step), initial=0.0))

    penalty = lambda beta: lam * float(np.abs(beta).sum())  # noqa: E731
    beta, it, res, ok = _accelerated(risk, prox, kkt, cfg.solver_tol, cfg.iteration_cap(risk.k),
                                     penalty)
    return _finish(risk, beta, iterations=it, kkt=res, converged=ok)


def solve_plugin_mean(risk: RiskQuadratic) -> Solution:
    """Unconstrained minimizer: ``b/G`` on the diagonal (0 on zero-Gram
    coordinates), minimum-norm least squares for dense ``G``."""
    if risk.is_diagonal:
        g = risk.diag
        beta = np.where(g > _ZERO_GRAM, risk.b / np.where(g > _ZERO_GRAM, g, 1.0), 0.0)
        return _finish(risk, beta, exact=True)
    beta = np.linalg.lstsq(risk.dense_gram(), risk.b, rcond=None)[0]
    return _finish(risk, beta, exact=True)


# ---------------------------------------------------------------------------
# best subset
# ---------------------------------------------------------------------------

def _restricted_ls(gram: NDArray, b: NDArray, support: tuple[int, ...]) -> tuple[NDArray, float]:
    k = b.size
    beta = np.zeros(k)
    if support:
        idx = list(support)
        beta[idx] = np.linalg.pinv(gram[np.ix_(idx, idx)]) @ b[idx]
    return beta, float(beta @ gram @ beta - 2 * b @ beta)


def solve_best_subset(risk: RiskQuadratic, s: int, cfg: EstimatorConfig | None = None,
                      mode: str | None = None, budget: int = EXHAUSTIVE_BUDGET) -> Solution:
    """Minimize the risk subject to ``||beta||_0 <= s``.

    Modes
    -----
    ``exact_diagonal``
        Diagonal ``G`` only. Scores ``b_a^2 / G_aa`` and keeps the top ``s``
        (lowest index on ties) at ``b_a / G_aa``; zero-Gram coordinates stay 0.
    ``exhaustive``
        Enumerates supports of size ``min(s, k)`` and solves each restricted
        least-squares problem (pseudo-inverse on singular blocks). Refuses
        when more than ``budget`` supports would be visited.
    ``greedy``
        Forward selection. Heuristic, with no optimality guarantee.
    """
    cfg = cfg or EstimatorConfig()
    mode = mode or cfg.subset_mode
    if s < 0 or int(s) != s:
        raise InvalidInputError("the L0 budget must be a non-negative integer")
    k = risk.k
    s = int(min(s, k))
    if mode == "exact_diagonal":
        if not risk.is_diagonal:
            raise InvalidInputError("exact_diagonal needs a diagonal Gram matrix")
        g, b = risk.diag, risk.b
        quad = g > _ZERO_GRAM
        score = np.where(quad, b**2 / np.where(quad, g, 1.0), -1.0)
        order = np.lexsort((np.arange(k), -score))
        keep = [i for i in order[:s] if quad[i]]
        beta = np.zeros(k)
        beta[keep] = b[keep] / g[keep]
        return _finish(risk, beta, exact=True)
    gram = risk.dense_gram()
    if mode == "exhaustive":
        count = math.comb(k, s)
        if count > budget:
            raise InvalidInputError(
                f"exhaustive search over {count} supports exceeds the budget of {budget}; "
                "use mode='greedy' (heuristic) or exact_diagonal for diagonal risks")
        best_beta, best_obj = np.zeros(k), 0.0
        for support in itertools.combinations(range(k), s):
            beta, obj = _restricted_ls(gram, risk.b, support)
            if obj < best_obj - 1e-13 * max(1.0, abs(best_obj)):
                best_beta, best_obj = beta, obj
        return _finish(risk, best_beta, iterations=count, exact=True)
    if mode == "greedy":
        support: tuple[int, ...] = ()
        beta, obj = np.zeros(k), 0.0
        for _ in range(s):
            trial = [(c,) + _restricted_ls(gram, risk.b, tuple(sorted(support + (c,))))
                     for c in range(k) if c not in support]
            c, b_new, o_new = min(trial, key=lambda item: (item[2], item[0]))
            if o_new >= obj:
                break
            support, beta, obj = tuple(sorted(support + (c,))), b_new, o_new
        return _finish(risk, beta, iterations=len(support), heuristic=True)
    raise InvalidInputError(f"unknown best subset mode {mode!r}")


# ---------------------------------------------------------------------------
# independent oracle
# ---------------------------------------------------------------------------

def brute_force_oracle(risk: RiskQuadratic, norm: str, s: float, grid_step: float = 1e-3,
                       chunk: int = 1_000_000) -> Solution:
    """Global minimizer by grid search (``norm='l1'``, ``k <= 3``) or support
    enumeration (``norm='l0'``).

    In grid mode ``k-1`` coordinates run over a grid of spacing ``grid_step``
    inside the ball and the remaining one is minimized exactly over its
    feasible interval; every coordinate takes that role once. Ties go to the
    first candidate found.
    """
    k = risk.k
    gram, b = risk.dense_gram(), risk.b
    if norm == "l0":
        if math.comb(k, int(min(s, k))) > EXHAUSTIVE_BUDGET:
            raise InvalidInputError("too many supports for the enumeration oracle")
        best, best_obj = np.zeros(k), 0.0
        for size in range(1, int(min(s, k)) + 1):
            for support in itertools.combinations(range(k), size):
                idx = list(support)
                sol = np.linalg.lstsq(gram[np.ix_(idx, idx)], b[idx], rcond=None)[0]
                beta = np.zeros(k)
                beta[idx] = sol
                obj = float(beta @ gram @ beta - 2 * b @ beta)
                if obj < best_obj - 1e-12 * max(1.0, abs(best_obj)):
                    best, best_obj = beta, obj
        return _finish(risk, best, exact=True)
    if norm != "l1":
        raise InvalidInputError("norm must be 'l1' or 'l0'")
    if k > 3:
        raise InvalidInputError("grid oracle supports k <= 3")
    if s == 0:
        return _finish(risk, np.zeros(k), exact=True)
    # grid symmetric about 0 plus the endpoints, so sparse corners are on it
    half = grid_step * np.arange(1, math.floor(s / grid_step) + 1)
    axis = np.unique(np.concatenate([-half, [0.0], half, [-s, s]]))
    axis = axis[np.abs(axis) <= s]
    if k == 1:
        heads = np.zeros((1, 0))
    else:
        heads = np.stack(np.meshgrid(*([axis] * (k - 1)), indexing="ij"), -1).reshape(-1, k - 1)
        heads = heads[np.abs(heads).sum(axis=1) <= s + 1e-12]
    best, best_obj = None, math.inf
    # each coordinate takes a turn as the exactly minimized one, so an optimum on
    # any face of the ball is reached to second order in the grid step
    for free in range(k):
        perm = [j for j in range(k) if j != free] + [free]
        g, bb = gram[np.ix_(perm, perm)], b[perm]
        gkk, bk = g[-1, -1], bb[-1]
        for start in range(0, heads.shape[0], chunk):
            h = heads[start:start + chunk]
            room = np.maximum(s - np.abs(h).sum(axis=1), 0.0)
            cross = h @ g[:-1, -1] if k > 1 else np.zeros(h.shape[0])
            lin = cross - bk  # derivative of the last coordinate / 2 at zero
            if gkk > _ZERO_GRAM:
                last = np.clip(-lin / gkk, -room, room)
            else:
                last = np.where(lin < 0, room, -room)
            full = np.column_stack([h, last])
            obj = np.einsum("ij,jk,ik->i", full, g, full) - 2 * full @ bb
            i = int(np.argmin(obj))
            if obj[i] < best_obj:
                best = np.empty(k)
                best[perm] = full[i]
                best_obj = float(obj[i])
    return _finish(risk, best, exact=True)
