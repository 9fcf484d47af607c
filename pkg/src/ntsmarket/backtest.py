"""Rolling-window strategy evaluation and performance metrics.

At every rebalance date the two-step model is refitted on the trailing window,
the configured strategy is solved, and the weights are held for the next
``rebalance_every`` days.  Weights chosen at row ``t`` only see rows before
``t``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Optional

import numpy as np

from .errors import DomainError, InputError, NtsError
from .estimate import FIT_QUAD, ReturnPanel, fit_series, two_step_fit
from .frontier import as_score, maximize_as_ratio, tangency_portfolio
from .market import check_simplex
from .nts_dist import QuadratureConfig

log = logging.getLogger(__name__)

Strategy = Literal["AS-max", "Sharpe-max", "fixed-weights"]
STRATEGIES = ("AS-max", "Sharpe-max", "fixed-weights")


def historical_var_cvar(series, eta: float) -> tuple[float, float]:
    """Historical VaR and CVaR as positive losses.

    With ascending order statistics ``x_(1) <= ... <= x_(n)`` and
    ``k = ceil(eta * n)``, VaR is ``-x_(k)`` and CVaR is minus the mean of the
    observations at or below ``x_(k)``.
    """
    x = np.sort(np.asarray(series, dtype=float).ravel())
    n = x.size
    if not (0.0 < eta < 1.0):
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    # guard against eta * n landing a hair above an integer
    k = math.ceil(eta * n - 1e-9)
    if k < 1:
        raise InputError(f"need at least {math.ceil(1 / eta)} observations for eta={eta}, got {n}")
    cut = x[k - 1]
    return float(-cut), float(-x[x <= cut].mean())


@dataclass(frozen=True)
class BacktestConfig:
    window: int = 750
    rebalance_every: int = 10
    eta: float = 0.01
    r_f: float = 0.0
    strategy: Strategy = "AS-max"
    fixed_weights: Optional[tuple] = None
    n_b: int = 51
    threads: int = 1

    def __post_init__(self) -> None:
        if self.window < 250:
            raise DomainError("window must be at least 250 days")
        if self.rebalance_every < 1:
            raise DomainError("rebalance_every must be at least 1")
        if not (0.0 < self.eta < 0.5):
            raise DomainError("eta must lie in (0, 0.5)")
        if self.strategy not in STRATEGIES:
            raise DomainError(f"strategy must be one of {STRATEGIES}, got {self.strategy!r}")
        if self.strategy == "fixed-weights":
            if self.fixed_weights is None:
                raise DomainError("fixed-weights strategy needs fixed_weights")
            check_simplex(np.asarray(self.fixed_weights, dtype=float), tol=1e-10)


@dataclass
class BacktestResult:
    dates: tuple
    returns: np.ndarray
    rebalance_dates: list = field(default_factory=list)
    weights: list[np.ndarray] = field(default_factory=list)
    failures: list[tuple] = field(default_factory=list)

    @property
    def cumulative(self) -> np.ndarray:
        return np.cumsum(self.returns)


def _strategy_weights(panel: ReturnPanel, index, cfg: BacktestConfig, quad) -> np.ndarray:
    if cfg.strategy == "fixed-weights":
        return np.asarray(cfg.fixed_weights, dtype=float)
    fit = two_step_fit(panel, index, quad, threads=cfg.threads)
    m = fit.model
    if cfg.strategy == "AS-max":
        return maximize_as_ratio(m, cfg.r_f, cfg.n_b)[2]
    # the asymmetry floor at min(beta) never binds on the simplex
    return tangency_portfolio(m, cfg.r_f, float(m.beta.min()))


def rolling_backtest(
    panel: ReturnPanel, index, cfg: BacktestConfig, quad: QuadratureConfig = FIT_QUAD
) -> BacktestResult:
    """Daily returns ``w_t' R_t`` of the strategy after the first window.

    A failed fit or solve keeps the previous weights (equal weights before the
    first success) and is recorded in :attr:`BacktestResult.failures`.
    """
    idx = np.asarray(index, dtype=float).ravel()
    t_total = panel.n_obs
    if idx.size != t_total:
        raise InputError(f"index has {idx.size} observations, panel has {t_total}")
    if t_total <= cfg.window + cfg.rebalance_every:
        raise InputError(
            f"panel length {t_total} must exceed window + rebalance_every = {cfg.window + cfg.rebalance_every}"
        )
    if cfg.strategy == "fixed-weights" and len(cfg.fixed_weights) != panel.n_assets:
        raise DomainError("fixed_weights length does not match the panel")
    n = panel.n_assets
    w = np.full(n, 1.0 / n)
    out = np.empty(t_total - cfg.window)
    result = BacktestResult(dates=panel.dates[cfg.window :], returns=out)
    for start in range(cfg.window, t_total, cfg.rebalance_every):
        stamp = panel.dates[start]
        try:
            w_new = check_simplex(
                _strategy_weights(panel.window(start - cfg.window, start), idx[start - cfg.window : start], cfg, quad),
                tol=1e-8,
            )
            w = np.clip(w_new, 0.0, None) / np.clip(w_new, 0.0, None).sum()
        except NtsError as exc:
            result.failures.append((stamp, f"{type(exc).__name__}: {exc}"))
            log.warning("rebalance at %s failed, holding previous weights: %s", stamp, exc)
        stop = min(start + cfg.rebalance_every, t_total)
        out[start - cfg.window : stop - cfg.window] = panel.returns[start:stop] @ w
        result.rebalance_dates.append(stamp)
        result.weights.append(w.copy())
    return result


@dataclass(frozen=True)
class PerfReport:
    mean: float
    std: float
    alpha: float
    theta: float
    beta: float
    hist_var: float
    hist_cvar: float
    sharpe: float
    var_ratio: float
    cvar_ratio: float
    as_ratio_of_fit: float

    def rows(self) -> list[tuple[str, float]]:
        return [
            ("Mean", self.mean),
            ("Std", self.std),
            ("alpha", self.alpha),
            ("theta", self.theta),
            ("beta", self.beta),
            ("VaR", self.hist_var),
            ("CVaR", self.hist_cvar),
            ("Sharpe", self.sharpe),
            ("VaR Ratio", self.var_ratio),
            ("CVaR Ratio", self.cvar_ratio),
            ("AS Ratio", self.as_ratio_of_fit),
        ]

    def table(self) -> str:
        return "\n".join(f"{name:<12}{value: .6g}" for name, value in self.rows())


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else float("nan")


def perf_report(series, eta: float = 0.01, r_f: float = 0.0, quad: QuadratureConfig = FIT_QUAD) -> PerfReport:
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 250:
        raise InputError(f"performance report needs at least 250 observations, got {x.size}")
    mean, std, fit = fit_series(x, quad)
    hv, hc = historical_var_cvar(x, eta)
    p = fit.params
    sharpe = (mean - r_f) / std
    score = as_score(p.beta, p.alpha, p.theta)
    return PerfReport(
        mean=mean,
        std=std,
        alpha=p.alpha,
        theta=p.theta,
        beta=p.beta,
        hist_var=hv,
        hist_cvar=hc,
        sharpe=sharpe,
        var_ratio=_ratio(mean - r_f, hv),
        cvar_ratio=_ratio(mean - r_f, hc),
        as_ratio_of_fit=_ratio(sharpe, score),
    )


__all__ = [
    "historical_var_cvar",
    "BacktestConfig",
    "BacktestResult",
    "rolling_backtest",
    "PerfReport",
    "perf_report",
    "STRATEGIES",
]
