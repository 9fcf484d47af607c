"""Mean / dispersion / asymmetry optimization on the long-only simplex.

``min_disp_portfolio`` solves

    min w' Sigma_R w   s.t.  1'w = 1, w >= 0, beta'w >= b*, mu'w >= m*

and ``tangency_portfolio`` maximizes the Sharpe ratio under ``beta'w >= b`` via
the homogenized program in ``y = w / (mu - r_f)'w``.  The asymmetry score
``A(b)`` maps ``b`` affinely onto ``[0, 1]``; the AS ratio is the tangency Sharpe
ratio divided by ``A(b)``.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize

from ._optim import linprog_bounded, qp_active_set
from .errors import DegenerateError, DomainError, InfeasibleError, NtsError, SolverError
from .market import MarketModel
from .nts_dist import beta_bound

log = logging.getLogger(__name__)

KKT_TOL = 1e-8
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_SCORE_MIN = 1e-12


@dataclass(frozen=True)
class FrontierPoint:
    w: Optional[np.ndarray]
    disp: float
    asym: float
    reward: float
    feasible: bool
    kkt_residual: float = float("nan")
    b_star: float = float("nan")
    m_star: float = float("nan")


@dataclass
class FrontierSurface:
    b_grid: np.ndarray
    m_grid: np.ndarray
    points: list[list[FrontierPoint]]
    errors: list[tuple[int, int, str]] = field(default_factory=list)

    def disp_matrix(self) -> np.ndarray:
        """Optimal dispersion, ``nan`` where infeasible; rows follow ``b_grid``."""
        return np.array([[p.disp if p.feasible else np.nan for p in row] for row in self.points])

    def feasible_mask(self) -> np.ndarray:
        return np.array([[p.feasible for p in row] for row in self.points])


@dataclass(frozen=True)
class AsRatioCurve:
    b: np.ndarray
    weights: list[Optional[np.ndarray]]
    sharpe: np.ndarray
    score: np.ndarray
    ratio: np.ndarray

    @property
    def feasible(self) -> np.ndarray:
        return np.isfinite(self.ratio)


def _infeasible(b_star: float, m_star: float) -> FrontierPoint:
    nan = float("nan")
    return FrontierPoint(None, nan, nan, nan, False, nan, b_star, m_star)


def min_disp_portfolio(m: MarketModel, b_star: float, m_star: float) -> FrontierPoint:
    """Minimum-dispersion long-only portfolio meeting the asymmetry and reward floors.

    Infeasible floors give ``feasible=False``; solver breakdowns raise
    :class:`SolverError`.
    """
    n = m.n_assets
    g = np.vstack([np.eye(n), m.beta[None, :], m.mu[None, :]])
    h = np.concatenate([np.zeros(n), [b_star, m_star]])
    try:
        start = linprog_bounded(
            np.zeros(n),
            a_eq=np.ones((1, n)),
            b_eq=np.ones(1),
            a_ub=-g[n:],
            b_ub=-h[n:],
            lo=np.zeros(n),
            hi=np.ones(n),
        ).x
    except InfeasibleError:
        return _infeasible(b_star, m_star)
    res = qp_active_set(2.0 * m.cov, None, np.ones((1, n)), np.ones(1), g, h, x0=start)
    w = np.clip(res.x, 0.0, None)
    w /= w.sum()
    return FrontierPoint(
        w=w,
        disp=math.sqrt(max(float(w @ m.cov @ w), 0.0)),
        asym=float(w @ m.beta),
        reward=float(w @ m.mu),
        feasible=True,
        kkt_residual=res.kkt_residual,
        b_star=b_star,
        m_star=m_star,
    )


def frontier_surface(
    m: MarketModel, n_b: int = 51, n_m: int = 51, threads: int = 1
) -> FrontierSurface:
    """Solve the program on an ``n_b x n_m`` grid of floors spanning the asset ranges."""
    if n_b < 1 or n_m < 1:
        raise DomainError("grid sizes must be positive")
    b_grid = np.linspace(m.beta.min(), m.beta.max(), n_b)
    m_grid = np.linspace(m.mu.min(), m.mu.max(), n_m)
    cells = [(i, j) for i in range(n_b) for j in range(n_m)]
    errors: list[tuple[int, int, str]] = []

    def solve(cell):
        i, j = cell
        try:
            return min_disp_portfolio(m, float(b_grid[i]), float(m_grid[j])), None
        except NtsError as exc:
            return _infeasible(float(b_grid[i]), float(m_grid[j])), f"{type(exc).__name__}: {exc}"

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            results = list(ex.map(solve, cells))
    else:
        results = [solve(c) for c in cells]
    points = [[None] * n_m for _ in range(n_b)]
    for (i, j), (pt, err) in zip(cells, results):
        points[i][j] = pt
        if err is not None:
            errors.append((i, j, err))
            log.warning("frontier cell (%d, %d) failed: %s", i, j, err)
    return FrontierSurface(b_grid, m_grid, points, errors)


# ---------------------------------------------------------------------------
# Tangency and AS ratio


def sharpe_ratio(m: MarketModel, w, r_f: float) -> float:
    w = np.asarray(w, dtype=float)
    sd = math.sqrt(max(float(w @ m.cov @ w), 0.0))
    if sd <= 0:
        raise DegenerateError("portfolio has zero dispersion")
    return (float(w @ m.mu) - r_f) / sd


@dataclass(frozen=True)
class TangencyResult:
    w: np.ndarray
    sharpe: float
    kkt_residual: float
    method: str


def _tangency_homogenized(m: MarketModel, r_f: float, b: float) -> Optional[TangencyResult]:
    n = m.n_assets
    g = np.vstack([np.eye(n), (m.beta - b)[None, :]])
    h = np.zeros(n + 1)
    a_eq = (m.mu - r_f)[None, :]
    try:
        res = qp_active_set(2.0 * m.cov, None, a_eq, np.ones(1), g, h)
    except InfeasibleError:
        return None
    y = np.clip(res.x, 0.0, None)
    w = y / y.sum()
    return TangencyResult(w, sharpe_ratio(m, w, r_f), res.kkt_residual, "homogenized")


def _tangency_fallback(m: MarketModel, r_f: float, b: float, starts: int = 8) -> TangencyResult:
    """Multi-start SLSQP on the simplex; used when no positive-excess portfolio meets ``b``."""
    n = m.n_assets
    if b > m.beta.max() + 1e-12:
        raise InfeasibleError(f"asymmetry floor {b:.6g} exceeds max beta {m.beta.max():.6g}")
    rng = np.random.default_rng(0)
    cons = [
        {"type": "eq", "fun": lambda w: w.sum() - 1.0, "jac": lambda w: np.ones(n)},
        {"type": "ineq", "fun": lambda w: m.beta @ w - b, "jac": lambda w: m.beta},
    ]

    def neg_sharpe(w):
        sd = math.sqrt(max(float(w @ m.cov @ w), 1e-300))
        return -(float(w @ m.mu) - r_f) / sd

    best = None
    top = int(np.argmax(m.beta))
    inits = [np.eye(n)[top]] + [rng.dirichlet(np.ones(n)) for _ in range(starts - 1)]
    for w0 in inits:
        res = minimize(
            neg_sharpe, w0, method="SLSQP", bounds=[(0.0, 1.0)] * n, constraints=cons,
            options={"ftol": 1e-14, "maxiter": 500},
        )
        w = np.clip(res.x, 0.0, None)
        if w.sum() <= 0 or m.beta @ (w / w.sum()) < b - 1e-9:
            continue
        w = w / w.sum()
        val = sharpe_ratio(m, w, r_f)
        if best is None or val > best.sharpe:
            best = TangencyResult(w, val, float("nan"), "fallback")
    if best is None:
        raise SolverError(f"tangency fallback found no feasible portfolio at b={b:.6g}")
    return best


def tangency(m: MarketModel, r_f: float, b: float) -> TangencyResult:
    """Max-Sharpe long-only portfolio with ``beta'w >= b`` and solver diagnostics."""
    if not np.max(m.mu) > r_f:
        raise DomainError("no asset has expected return above the risk-free rate")
    if b > m.beta.max() + 1e-12:
        raise InfeasibleError(f"asymmetry floor {b:.6g} exceeds max beta {m.beta.max():.6g}")
    res = _tangency_homogenized(m, r_f, b)
    if res is None:
        log.info("homogenized tangency infeasible at b=%.6g; using multi-start fallback", b)
        res = _tangency_fallback(m, r_f, b)
    return res


def tangency_portfolio(m: MarketModel, r_f: float, b: float) -> np.ndarray:
    return tangency(m, r_f, b).w


def as_score(b: float, alpha: float, theta: float) -> float:
    """Affine asymmetry score: 1 at ``-bound``, 0 at ``+bound``."""
    bound = beta_bound(alpha, theta)
    if not abs(b) <= bound:
        raise DomainError(f"|b|={abs(b):.6g} exceeds the admissible bound {bound:.6g}")
    return (bound - b) / (2.0 * bound)


def as_ratio(m: MarketModel, b: float, r_f: float) -> float:
    score = as_score(b, m.alpha, m.theta)
    if score < _SCORE_MIN:
        raise DegenerateError(f"asymmetry score {score:.3g} too small at b={b:.6g}")
    return tangency(m, r_f, b).sharpe / score


def _safe_point(m: MarketModel, b: float, r_f: float):
    try:
        t = tangency(m, r_f, b)
        score = as_score(b, m.alpha, m.theta)
        if score < _SCORE_MIN:
            raise DegenerateError("asymmetry score vanishes")
        return t.w, t.sharpe, score, t.sharpe / score
    except (InfeasibleError, DegenerateError, SolverError) as exc:
        log.debug("AS ratio undefined at b=%.6g: %s", b, exc)
        return None, float("nan"), float("nan"), float("nan")


def as_ratio_curve(m: MarketModel, r_f: float, n_b: int = 51, b_grid=None) -> AsRatioCurve:
    if not np.max(m.mu) > r_f:
        raise DomainError("no asset has expected return above the risk-free rate")
    b = np.linspace(m.beta.min(), m.beta.max(), n_b) if b_grid is None else np.asarray(b_grid, float)
    rows = [_safe_point(m, float(bi), r_f) for bi in b]
    return AsRatioCurve(
        b=b,
        weights=[r[0] for r in rows],
        sharpe=np.array([r[1] for r in rows]),
        score=np.array([r[2] for r in rows]),
        ratio=np.array([r[3] for r in rows]),
    )


def _golden_max(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 200):
    """Golden-section search for a maximum; returns the best ``(x, f(x))`` seen."""
    best = max(((lo, f(lo)), (hi, f(hi))), key=lambda item: item[1])
    a, c = lo, hi
    x1 = c - GOLDEN * (c - a)
    x2 = a + GOLDEN * (c - a)
    f1, f2 = f(x1), f(x2)
    for _ in range(max_iter):
        for x, fx in ((x1, f1), (x2, f2)):
            if fx > best[1]:
                best = (x, fx)
        if c - a <= tol * max(1.0, abs(a) + abs(c)):
            break
        if f1 >= f2:
            c, x2, f2 = x2, x1, f1
            x1 = c - GOLDEN * (c - a)
            f1 = f(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + GOLDEN * (c - a)
            f2 = f(x2)
    return best


def maximize_as_ratio(m: MarketModel, r_f: float, n_b: int = 51) -> tuple[float, float, np.ndarray]:
    """Coarse scan of the AS ratio over ``[min beta, max beta]`` then golden refinement.

    Returns ``(b_star, ratio, w_tangency(b_star))``.  Infeasible slices are
    skipped; refinement only replaces the coarse optimum when it improves it.
    """
    curve = as_ratio_curve(m, r_f, n_b)
    vals = np.where(curve.feasible, curve.ratio, -np.inf)
    if not np.any(np.isfinite(vals)):
        raise InfeasibleError("AS ratio undefined at every scanned b")
    k = int(np.argmax(vals))
    best_b, best_v = float(curve.b[k]), float(vals[k])
    lo = float(curve.b[max(k - 1, 0)])
    hi = float(curve.b[min(k + 1, curve.b.size - 1)])
    if hi > lo:
        def f(b):
            v = _safe_point(m, b, r_f)[3]
            return v if np.isfinite(v) else -np.inf

        xb, vb = _golden_max(f, lo, hi)
        if vb > best_v:
            best_b, best_v = float(xb), float(vb)
    return best_b, best_v, tangency(m, r_f, best_b).w


__all__ = [
    "FrontierPoint",
    "FrontierSurface",
    "AsRatioCurve",
    "TangencyResult",
    "min_disp_portfolio",
    "frontier_surface",
    "sharpe_ratio",
    "tangency",
    "tangency_portfolio",
    "as_score",
    "as_ratio",
    "as_ratio_curve",
    "maximize_as_ratio",
]
