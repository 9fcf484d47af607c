"""Multivariate NTS market model and portfolio projection.

Returns follow ``R = mu + diag(sigma) X`` with ``X`` an N-dimensional stdNTS
vector sharing one subordinator.  Any weighted portfolio reduces to a
univariate location-scale stdNTS law

    w'R  =d  mu_bar + sigma_bar * Xi,    Xi ~ stdNTS(alpha, theta, beta_bar)

with ``mu_bar = w'mu``, ``sigma_bar = sqrt(w' Sigma_R w)`` and
``beta_bar = w' diag(sigma) beta / sigma_bar``, so only the return covariance
``Sigma_R`` is needed for portfolio analytics.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateError, DomainError, InvalidModelError
from .nts_dist import StdNtsParams, SubordinatorParams, beta_bound, sample_subordinator, _rng

log = logging.getLogger(__name__)

PSD_RTOL = 1e-8
DIAG_TOL = 1e-10
SIGMA_BAR_MIN = 1e-12


def _as_vector(x, name: str, n: Optional[int] = None) -> np.ndarray:
    arr = np.array(x, dtype=float).reshape(-1)
    if n is not None and arr.size != n:
        raise InvalidModelError(f"{name} has length {arr.size}, expected {n}")
    if not np.all(np.isfinite(arr)):
        raise InvalidModelError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def _check_psd(mat: np.ndarray, name: str) -> np.ndarray:
    """Eigenvalue check with relative tolerance; returns a clipped copy when needed."""
    vals, vecs = np.linalg.eigh(mat)
    top = max(float(vals.max()), 0.0)
    if vals.min() < -PSD_RTOL * max(top, 1e-300):
        raise InvalidModelError(f"{name} is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    if vals.min() < 0:
        warnings.warn(f"{name}: clipping eigenvalues down to {vals.min():.3g} to zero", RuntimeWarning)
        vals = np.clip(vals, 0.0, None)
        mat = (vecs * vals) @ vecs.T
    return mat


def check_simplex(w, tol: float = 1e-12) -> np.ndarray:
    """Validate a long-only weight vector (entries >= 0, sum 1)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or not np.all(np.isfinite(w)):
        raise DomainError("weights must be a finite 1-D vector")
    if np.any(w < -tol) or abs(w.sum() - 1.0) > max(tol, 1e-12) * max(1, w.size):
        raise DomainError("weights must be nonnegative and sum to one")
    return w


@dataclass(frozen=True)
class PortfolioProjection:
    mu_bar: float
    sigma_bar: float
    beta_bar: float


@dataclass(frozen=True)
class GaussianModel:
    mu: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mu = _as_vector(self.mu, "mu")
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mu.size, mu.size):
            raise InvalidModelError("cov must be N x N")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * max(1.0, np.abs(cov).max())):
            raise InvalidModelError("cov must be symmetric")
        cov = _check_psd((cov + cov.T) / 2.0, "cov")
        cov.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "cov", cov)

    @property
    def n_assets(self) -> int:
        return self.mu.size


@dataclass(frozen=True)
class MarketModel:
    """NTS market model ``R = mu + diag(sigma) X``.

    Construction validates every invariant.  If ``cov`` cannot be produced by
    any admissible epsilon-correlation matrix the model is still usable for all
    projection analytics, but joint sampling is disabled (a warning is issued).
    """

    alpha: float
    theta: float
    beta: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    cov: np.ndarray
    assets: Optional[tuple] = None
    _eps_corr: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        SubordinatorParams(self.alpha, self.theta)
        beta = _as_vector(self.beta, "beta")
        n = beta.size
        mu = _as_vector(self.mu, "mu", n)
        sigma = _as_vector(self.sigma, "sigma", n)
        if np.any(sigma <= 0):
            raise InvalidModelError("sigma entries must be positive")
        bound = beta_bound(self.alpha, self.theta)
        if np.any(np.abs(beta) >= bound):
            raise InvalidModelError(f"every |beta_n| must be below {bound:.6g}")
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (n, n):
            raise InvalidModelError(f"cov has shape {cov.shape}, expected {(n, n)}")
        scale = max(1.0, float(np.abs(cov).max()))
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-12 * scale):
            raise InvalidModelError("cov must be symmetric")
        cov = (cov + cov.T) / 2.0
        if np.any(np.abs(np.diag(cov) - sigma**2) > DIAG_TOL * np.maximum(1.0, sigma**2)):
            raise InvalidModelError("diag(cov) must equal sigma^2")
        cov = _check_psd(cov, "cov")
        cov.setflags(write=False)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "cov", cov)
        if self.assets is not None:
            if len(self.assets) != n:
                raise InvalidModelError("assets must have one symbol per asset")
            object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        try:
            corr = _implied_corr(self.alpha, self.theta, beta, sigma, cov)
        except InvalidModelError as exc:
            warnings.warn(f"joint sampling disabled: {exc}", RuntimeWarning)
            corr = None
        object.__setattr__(self, "_eps_corr", corr)

    @classmethod
    def from_epsilon_corr(cls, alpha, theta, beta, mu, sigma, corr, assets=None) -> "MarketModel":
        """Build ``Sigma_R`` from an epsilon-correlation matrix.

        cov(X_k, X_l) = rho_kl gamma_k gamma_l + beta_k beta_l (2 - alpha) / (2 theta)
        """
        beta = np.asarray(beta, dtype=float)
        sigma = np.asarray(sigma, dtype=float)
        kappa = (2.0 - alpha) / (2.0 * theta)
        gamma = np.sqrt(1.0 - beta**2 * kappa)
        cov_x = np.asarray(corr, dtype=float) * np.outer(gamma, gamma) + np.outer(beta, beta) * kappa
        np.fill_diagonal(cov_x, 1.0)
        cov = cov_x * np.outer(sigma, sigma)
        np.fill_diagonal(cov, sigma**2)
        return cls(alpha, theta, beta, mu, sigma, cov, assets)

    @property
    def n_assets(self) -> int:
        return self.beta.size

    @property
    def beta_bound(self) -> float:
        return beta_bound(self.alpha, self.theta)

    @property
    def sampling_enabled(self) -> bool:
        return self._eps_corr is not None

    def gamma(self) -> np.ndarray:
        return np.sqrt(1.0 - self.beta**2 * (2.0 - self.alpha) / (2.0 * self.theta))

    def std_params(self, beta: float) -> StdNtsParams:
        return StdNtsParams(self.alpha, self.theta, beta)

    def gaussian(self) -> GaussianModel:
        """Gaussian benchmark sharing ``mu`` and ``Sigma_R``."""
        return GaussianModel(self.mu, self.cov)

    def replace(self, **changes) -> "MarketModel":
        fields = dict(
            alpha=self.alpha, theta=self.theta, beta=self.beta, mu=self.mu,
            sigma=self.sigma, cov=self.cov, assets=self.assets,
        )
        fields.update(changes)
        return MarketModel(**fields)


def _implied_corr(alpha, theta, beta, sigma, cov) -> np.ndarray:
    kappa = (2.0 - alpha) / (2.0 * theta)
    gamma = np.sqrt(1.0 - beta**2 * kappa)
    cov_x = cov / np.outer(sigma, sigma)
    rho = (cov_x - np.outer(beta, beta) * kappa) / np.outer(gamma, gamma)
    np.fill_diagonal(rho, 1.0)
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        k, l = np.unravel_index(np.argmax(np.abs(rho)), rho.shape)
        raise InvalidModelError(
            f"implied epsilon-correlation rho[{k},{l}]={rho[k, l]:.6g} lies outside [-1, 1]"
        )
    rho = np.clip(rho, -1.0, 1.0)
    rho = _check_psd(rho, "implied epsilon-correlation")
    np.fill_diagonal(rho, 1.0)
    rho.setflags(write=False)
    return rho


def implied_epsilon_corr(m: MarketModel) -> np.ndarray:
    """Correlation of the Gaussian factor implied by ``Sigma_R`` and ``beta``."""
    if m._eps_corr is None:
        return _implied_corr(m.alpha, m.theta, m.beta, m.sigma, m.cov)
    return m._eps_corr


# ---------------------------------------------------------------------------
# Projection and measures


def _weights(w, n: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).reshape(-1)
    if w.size != n or not np.all(np.isfinite(w)):
        raise DomainError(f"weights must be a finite vector of length {n}")
    return w


def project_portfolio(m: MarketModel, w) -> PortfolioProjection:
    """Reduce ``w'R`` to ``(mu_bar, sigma_bar, beta_bar)``."""
    w = _weights(w, m.n_assets)
    var = float(w @ m.cov @ w)
    sigma_bar = math.sqrt(max(var, 0.0))
    if sigma_bar <= SIGMA_BAR_MIN:
        raise DegenerateError(f"portfolio standard deviation {sigma_bar:.3g} is degenerate")
    beta_bar = float(w @ (m.sigma * m.beta)) / sigma_bar
    return PortfolioProjection(float(w @ m.mu), sigma_bar, beta_bar)


def project_gaussian(g: GaussianModel, w) -> tuple[float, float]:
    w = _weights(w, g.n_assets)
    sigma_bar = math.sqrt(max(float(w @ g.cov @ w), 0.0))
    if sigma_bar <= SIGMA_BAR_MIN:
        raise DegenerateError(f"portfolio standard deviation {sigma_bar:.3g} is degenerate")
    return float(w @ g.mu), sigma_bar


def asym_measure(w, m: MarketModel) -> float:
    """Asymmetric tail risk ``w' beta`` (negative means left-skewed)."""
    return float(_weights(w, m.n_assets) @ m.beta)


def disp_measure(w, m: MarketModel) -> float:
    """Dispersion risk ``sqrt(w' Sigma_R w)``."""
    w = _weights(w, m.n_assets)
    return math.sqrt(max(float(w @ m.cov @ w), 0.0))


def reward_measure(w, m: MarketModel) -> float:
    return float(_weights(w, m.n_assets) @ m.mu)


# ---------------------------------------------------------------------------
# Sampling


def sample_market(m: MarketModel, n: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """``n`` i.i.d. return vectors (rows) drawn from the joint law."""
    corr = implied_epsilon_corr(m)
    rng = _rng(seed)
    vals, vecs = np.linalg.eigh(corr)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    t = sample_subordinator(SubordinatorParams(m.alpha, m.theta), n, rng)
    eps = rng.standard_normal((n, m.n_assets)) @ root.T
    x = np.outer(t - 1.0, m.beta) + eps * (m.gamma() * np.sqrt(t)[:, None])
    return m.mu + x * m.sigma


def random_market(
    n_assets: int,
    alpha: float,
    theta: float,
    seed: int | None = None,
    beta_range: Sequence[float] = (-0.3, 0.3),
    mu_range: Sequence[float] = (0.0, 0.001),
    sigma_range: Sequence[float] = (0.01, 0.02),
    corr_strength: float = 0.4,
) -> MarketModel:
    """Synthetic model with a random valid epsilon-correlation (factor structure)."""
    rng = np.random.default_rng(seed)
    beta = rng.uniform(*beta_range, n_assets)
    mu = rng.uniform(*mu_range, n_assets)
    sigma = rng.uniform(*sigma_range, n_assets)
    load = rng.uniform(-1, 1, (n_assets, 2)) * corr_strength
    raw = load @ load.T + np.diag(1.0 - np.sum(load**2, axis=1).clip(max=0.9))
    d = np.sqrt(np.diag(raw))
    corr = raw / np.outer(d, d)
    return MarketModel.from_epsilon_corr(alpha, theta, beta, mu, sigma, corr)
