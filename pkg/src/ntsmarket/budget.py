"""Local risk budgeting.

Each step solves the linear program

    min_dw  c'dw   s.t.  sum(dw) = 0,  mu'dw >= 0,  max(-d, -w_n) <= dw_n <= d

where ``c`` holds the marginal VaR or CVaR contributions at the current
weights.  Repeating the step walks the portfolio downhill in the linearized
risk while keeping expected return from falling and weights long-only.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from ._optim import linprog_bounded, qp_active_set
from .errors import DomainError, NtsError
from .market import MarketModel, check_simplex
from .nts_dist import DEFAULT_QUAD, QuadratureConfig
from . import risk

log = logging.getLogger(__name__)

Measure = Literal["VaR", "CVaR"]
Driver = Literal["nts", "gaussian"]


@dataclass(frozen=True)
class BudgetStep:
    delta_w: np.ndarray
    predicted_change: float
    measure: str
    box_radius: float


@dataclass(frozen=True)
class BudgetIterate:
    w: np.ndarray
    var: float
    cvar: float
    hist_var: float = float("nan")
    hist_cvar: float = float("nan")


@dataclass
class BudgetTrajectory:
    iterations: list[BudgetIterate] = field(default_factory=list)
    steps: list[BudgetStep] = field(default_factory=list)
    measure: str = "CVaR"
    driver: str = "nts"

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(it, name) for it in self.iterations])

    @property
    def weights(self) -> np.ndarray:
        return np.array([it.w for it in self.iterations])


def _check_measure(measure: str) -> str:
    if measure not in ("VaR", "CVaR"):
        raise DomainError(f"measure must be 'VaR' or 'CVaR', got {measure!r}")
    return measure


def local_risk_budget(c, mu, d: float, w, measure: Measure = "CVaR") -> BudgetStep:
    """Optimal local reallocation ``dw`` for marginal contributions ``c``.

    Among optimal solutions the one with the smallest Euclidean norm is
    returned, so a constant ``c`` gives ``dw = 0``.  Solver failures fall back to
    ``dw = 0`` with a warning.
    """
    _check_measure(measure)
    c = np.asarray(c, dtype=float).ravel()
    mu = np.asarray(mu, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    n = c.size
    if mu.size != n or w.size != n:
        raise DomainError("c, mu and w must have the same length")
    if not d >= 0:
        raise DomainError("box radius d must be nonnegative")
    zero = BudgetStep(np.zeros(n), 0.0, measure, d)
    if d == 0:
        return zero
    lo = np.maximum(-d, -np.clip(w, 0.0, None))
    hi = np.full(n, float(d))
    try:
        lp = linprog_bounded(
            c, a_eq=np.ones((1, n)), b_eq=np.zeros(1), a_ub=-mu[None, :], b_ub=np.zeros(1), lo=lo, hi=hi
        )
        best = lp.fun
        if best >= 0:
            return zero
        # minimum-norm point of the optimal face
        slack = 1e-14 * max(float(np.abs(c).max()) * d * n, 1e-300)
        g = np.vstack([np.eye(n), -np.eye(n), mu[None, :], -c[None, :]])
        h = np.concatenate([lo, -hi, [0.0], [-(best + slack)]])
        qp = qp_active_set(np.eye(n), None, np.ones((1, n)), np.zeros(1), g, h, x0=lp.x)
        dw = qp.x if c @ qp.x <= best + slack else lp.x
    except NtsError as exc:
        warnings.warn(f"budget LP failed ({exc}); using a zero step", RuntimeWarning, stacklevel=2)
        return zero
    dw = np.clip(dw, lo, hi)
    return BudgetStep(dw, float(c @ dw), measure, d)


def _contributions(m: MarketModel, w, eta: float, measure: str, driver: str, quad) -> np.ndarray:
    if driver == "nts":
        return risk.mct_var(m, w, eta, quad) if measure == "VaR" else risk.mct_cvar(m, w, eta, quad)
    if driver == "gaussian":
        g = m.gaussian()
        return risk.gaussian_mct_var(g, w, eta) if measure == "VaR" else risk.gaussian_mct_cvar(g, w, eta)
    raise DomainError(f"driver must be 'nts' or 'gaussian', got {driver!r}")


def iterative_budget(
    m: MarketModel,
    w0,
    d: float,
    eta: float,
    n_iter: int,
    measure: Measure = "CVaR",
    driver: Driver = "nts",
    returns: Optional[np.ndarray] = None,
    quad: QuadratureConfig = DEFAULT_QUAD,
) -> BudgetTrajectory:
    """Repeat the local step ``n_iter`` times from ``w0``.

    ``driver`` picks which model supplies the marginal contributions; the
    recorded VaR / CVaR always come from the NTS model ``m`` so trajectories
    driven by either model are directly comparable.  With a ``returns`` matrix
    (``T x N``) historical VaR / CVaR of the portfolio are recorded too.
    """
    from .backtest import historical_var_cvar

    _check_measure(measure)
    if n_iter < 0:
        raise DomainError("iteration count must be nonnegative")
    w = check_simplex(np.asarray(w0, dtype=float), tol=1e-10).copy()
    rets = None if returns is None else np.asarray(returns, dtype=float)
    traj = BudgetTrajectory(measure=measure, driver=driver)

    def record(k: int, w: np.ndarray) -> None:
        try:
            rep = risk.risk_report(m, w, eta, quad)
        except NtsError as exc:
            raise type(exc)(f"iteration {k}: {exc}") from exc
        hv = hc = float("nan")
        if rets is not None:
            hv, hc = historical_var_cvar(rets @ w, eta)
        traj.iterations.append(BudgetIterate(w.copy(), rep.var, rep.cvar, hv, hc))

    record(0, w)
    for k in range(1, n_iter + 1):
        try:
            c = _contributions(m, w, eta, measure, driver, quad)
        except NtsError as exc:
            raise type(exc)(f"iteration {k}: {exc}") from exc
        step = local_risk_budget(c, m.mu, d, w, measure)
        w = np.clip(w + step.delta_w, 0.0, None)
        w /= w.sum()
        traj.steps.append(step)
        record(k, w)
    return traj


__all__ = [
    "BudgetStep",
    "BudgetIterate",
    "BudgetTrajectory",
    "local_risk_budget",
    "iterative_budget",
]
