"""Portfolio VaR / CVaR and marginal contributions under the NTS and Gaussian models.

VaR and CVaR are positive loss magnitudes at lower-tail probability ``eta``:

    VaR  = -mu_bar - sigma_bar * F^{-1}(eta; beta_bar)
    CVaR = -mu_bar + sigma_bar * CVaR_std(eta; beta_bar)

Marginal contributions differentiate these through ``mu_bar``, ``sigma_bar``
and ``beta_bar``; the beta-sensitivity of the standardized quantile and CVaR
comes from :mod:`ntsmarket.nts_dist`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.stats import norm

from . import nts_dist
from .errors import DomainError
from .market import GaussianModel, MarketModel, project_gaussian, project_portfolio
from .nts_dist import DEFAULT_QUAD, QuadratureConfig


@dataclass(frozen=True)
class RiskReport:
    eta: float
    var: float
    cvar: float
    mct_var: np.ndarray
    mct_cvar: np.ndarray
    model_tag: Literal["NTS", "Gaussian"]

    def euler_gap(self, w) -> tuple[float, float]:
        """Relative gaps ``|w'MCT - risk| / |risk|`` for VaR and CVaR."""
        w = np.asarray(w, dtype=float)
        gv = abs(float(w @ self.mct_var) - self.var) / max(abs(self.var), 1e-300)
        gc = abs(float(w @ self.mct_cvar) - self.cvar) / max(abs(self.cvar), 1e-300)
        return gv, gc


def _check_eta(eta: float, upper: float = 0.5) -> None:
    if not (0.0 < eta <= upper):
        raise DomainError(f"eta must lie in (0, {upper}], got {eta}")


@dataclass
class _TailKernel:
    """Standardized tail quantities at one ``beta_bar``; computed lazily and reused."""

    params: nts_dist.StdNtsParams
    eta: float
    quad: QuadratureConfig

    def __post_init__(self) -> None:
        self._cache: dict[str, float] = {}

    def _get(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    @property
    def quantile(self) -> float:
        return self._get("q", lambda: nts_dist.stdnts_quantile(self.eta, self.params, self.quad))

    @property
    def dquantile(self) -> float:
        return self._get(
            "dq", lambda: nts_dist.quantile_dbeta(self.eta, self.params, self.quad, quantile=self.quantile)
        )

    @property
    def cvar(self) -> float:
        return self._get(
            "c", lambda: nts_dist.cvar_stdnts(self.eta, self.params, self.quad, quantile=self.quantile)
        )

    @property
    def dcvar(self) -> float:
        return self._get(
            "dc",
            lambda: nts_dist.cvar_dbeta(
                self.eta, self.params, self.quad, quantile=self.quantile, dquantile=self.dquantile
            ),
        )


def _setup(m: MarketModel, w, eta: float, q: QuadratureConfig):
    _check_eta(eta)
    proj = project_portfolio(m, w)
    kern = _TailKernel(m.std_params(proj.beta_bar), eta, q)
    return np.asarray(w, dtype=float), proj, kern


def _dsigma(cov: np.ndarray, w: np.ndarray, sigma_bar: float) -> np.ndarray:
    return cov @ w / sigma_bar


def var_portfolio(m: MarketModel, w, eta: float, q: QuadratureConfig = DEFAULT_QUAD) -> float:
    _, proj, kern = _setup(m, w, eta, q)
    return -proj.mu_bar - proj.sigma_bar * kern.quantile


def cvar_portfolio(m: MarketModel, w, eta: float, q: QuadratureConfig = DEFAULT_QUAD) -> float:
    _, proj, kern = _setup(m, w, eta, q)
    return -proj.mu_bar + proj.sigma_bar * kern.cvar


def _mct_var(m, w, proj, kern) -> np.ndarray:
    ds = _dsigma(m.cov, w, proj.sigma_bar)
    skew = m.sigma * m.beta - proj.beta_bar * ds
    return -m.mu - kern.quantile * ds - skew * kern.dquantile


def _mct_cvar(m, w, proj, kern) -> np.ndarray:
    ds = _dsigma(m.cov, w, proj.sigma_bar)
    skew = m.sigma * m.beta - proj.beta_bar * ds
    return -m.mu + kern.cvar * ds + skew * kern.dcvar


def mct_var(m: MarketModel, w, eta: float, q: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    """Marginal contribution to VaR, one entry per asset."""
    w, proj, kern = _setup(m, w, eta, q)
    return _mct_var(m, w, proj, kern)


def mct_cvar(m: MarketModel, w, eta: float, q: QuadratureConfig = DEFAULT_QUAD) -> np.ndarray:
    """Marginal contribution to CVaR, one entry per asset."""
    w, proj, kern = _setup(m, w, eta, q)
    return _mct_cvar(m, w, proj, kern)


def risk_report(m: MarketModel, w, eta: float, q: QuadratureConfig = DEFAULT_QUAD) -> RiskReport:
    w, proj, kern = _setup(m, w, eta, q)
    return RiskReport(
        eta=eta,
        var=-proj.mu_bar - proj.sigma_bar * kern.quantile,
        cvar=-proj.mu_bar + proj.sigma_bar * kern.cvar,
        mct_var=_mct_var(m, w, proj, kern),
        mct_cvar=_mct_cvar(m, w, proj, kern),
        model_tag="NTS",
    )


# ---------------------------------------------------------------------------
# Gaussian benchmark


def _normal_tail(eta: float) -> tuple[float, float]:
    z = float(norm.ppf(eta))
    return z, float(norm.pdf(z)) / eta


def gaussian_var_cvar(g: GaussianModel, w, eta: float) -> tuple[float, float]:
    _check_eta(eta)
    mu_bar, sigma_bar = project_gaussian(g, w)
    z, tail = _normal_tail(eta)
    return -mu_bar - sigma_bar * z, -mu_bar + sigma_bar * tail


def gaussian_mct_var(g: GaussianModel, w, eta: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _, sigma_bar = project_gaussian(g, w)
    z, _ = _normal_tail(eta)
    return -g.mu - z * (g.cov @ w) / sigma_bar


def gaussian_mct_cvar(g: GaussianModel, w, eta: float) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _, sigma_bar = project_gaussian(g, w)
    _, tail = _normal_tail(eta)
    return -g.mu + tail * (g.cov @ w) / sigma_bar


def gaussian_risk_report(g: GaussianModel, w, eta: float) -> RiskReport:
    var, cvar = gaussian_var_cvar(g, w, eta)
    return RiskReport(
        eta=eta,
        var=var,
        cvar=cvar,
        mct_var=gaussian_mct_var(g, w, eta),
        mct_cvar=gaussian_mct_cvar(g, w, eta),
        model_tag="Gaussian",
    )


def ascending_ranks(values) -> np.ndarray:
    """1-based ranks in ascending order (ties broken by position)."""
    order = np.argsort(np.asarray(values, dtype=float), kind="stable")
    ranks = np.empty(order.size, dtype=int)
    ranks[order] = np.arange(1, order.size + 1)
    return ranks


__all__ = [
    "RiskReport",
    "var_portfolio",
    "cvar_portfolio",
    "mct_var",
    "mct_cvar",
    "risk_report",
    "gaussian_var_cvar",
    "gaussian_mct_var",
    "gaussian_mct_cvar",
    "gaussian_risk_report",
    "ascending_ranks",
]
