"""Standard normal tempered stable (stdNTS) law and its subordinator.

The tempered stable subordinator ``T`` with parameters ``(alpha, theta)`` has

    phi_T(u) = exp(-(2 theta^(1-alpha/2) / alpha) ((theta - iu)^(alpha/2) - theta^(alpha/2)))

so that ``E[T] = 1`` and ``var(T) = (2 - alpha) / (2 theta)``.  The standard
NTS variable is the mixture

    X = beta (T - 1) + gamma sqrt(T) eps,   gamma^2 = 1 - beta^2 (2 - alpha) / (2 theta)

which has zero mean and unit variance.  Everything below (CDF, density,
quantile, CVaR kernels and their beta-derivatives) is obtained from the
characteristic function by one-dimensional Fourier integrals evaluated with
composite Gauss-Legendre rules and panel doubling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BracketError, ConvergenceError, DegenerateError, DomainError

ArrayLike = Union[float, np.ndarray]

_GL_ORDER = 32
_MAX_TRUNCATION_GROWTH = 64
_QUANTILE_BRACKET_START = 10.0
_QUANTILE_BRACKET_MAX = 50.0
_SAMPLE_CHUNK = 2_000_000


@dataclass(frozen=True)
class SubordinatorParams:
    alpha: float
    theta: float

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 2.0) or not math.isfinite(self.alpha):
            raise DomainError(f"alpha must lie in (0, 2), got {self.alpha}")
        if not (self.theta > 0.0) or not math.isfinite(self.theta):
            raise DomainError(f"theta must be positive, got {self.theta}")

    @property
    def variance(self) -> float:
        return (2.0 - self.alpha) / (2.0 * self.theta)


def beta_bound(alpha: float, theta: float) -> float:
    """Open bound ``sqrt(2 theta / (2 - alpha))`` on admissible |beta|."""
    return math.sqrt(2.0 * theta / (2.0 - alpha))


@dataclass(frozen=True)
class StdNtsParams:
    alpha: float
    theta: float
    beta: float

    def __post_init__(self) -> None:
        SubordinatorParams(self.alpha, self.theta)
        if not math.isfinite(self.beta):
            raise DomainError("beta must be finite")
        if abs(self.beta) >= beta_bound(self.alpha, self.theta):
            raise DomainError(
                f"|beta|={abs(self.beta)} violates the bound "
                f"{beta_bound(self.alpha, self.theta):.6g} for alpha={self.alpha}, theta={self.theta}"
            )

    @property
    def gamma2(self) -> float:
        return 1.0 - self.beta**2 * (2.0 - self.alpha) / (2.0 * self.theta)

    def gamma(self) -> float:
        return math.sqrt(self.gamma2)

    @property
    def subordinator(self) -> SubordinatorParams:
        return SubordinatorParams(self.alpha, self.theta)

    def with_beta(self, beta: float) -> "StdNtsParams":
        return StdNtsParams(self.alpha, self.theta, beta)


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for the Fourier integrals.

    ``truncation`` is the initial upper limit in frequency; it is shortened when
    the characteristic function is already negligible there and doubled (at most
    64 times its value) when it is not.  ``nodes`` is the starting node count of
    the composite rule, doubled until two successive estimates agree to
    ``tolerance``.
    """

    truncation: float = 200.0
    nodes: int = 256
    tolerance: float = 1e-10
    delta: Union[float, str] = "auto"
    max_nodes: int = 2**16

    def __post_init__(self) -> None:
        if not self.truncation > 0:
            raise DomainError("truncation must be positive")
        if self.nodes < 64:
            raise DomainError("nodes must be at least 64")
        if not (0.0 < self.tolerance <= 1e-4):
            raise DomainError("tolerance must lie in (0, 1e-4]")
        if self.delta != "auto":
            if isinstance(self.delta, str) or not self.delta > 0:
                raise DomainError("delta must be positive or 'auto'")
        if self.max_nodes < self.nodes:
            raise DomainError("max_nodes must be >= nodes")


DEFAULT_QUAD = QuadratureConfig()


# ---------------------------------------------------------------------------
# Characteristic functions


def _coef(alpha: float, theta: float) -> float:
    return 2.0 * theta ** (1.0 - alpha / 2.0) / alpha


def subordinator_chf(u: ArrayLike, p: SubordinatorParams) -> np.ndarray:
    """Characteristic function of the tempered stable subordinator."""
    u = np.asarray(u, dtype=complex)
    base = p.theta - 1j * u
    if np.any(base.real <= 0):
        raise DomainError("theta - iu must have positive real part")
    a = p.alpha / 2.0
    return np.exp(-_coef(p.alpha, p.theta) * (base**a - p.theta**a))


def _log_chf(z: np.ndarray, p: StdNtsParams) -> np.ndarray:
    base = p.theta - 1j * p.beta * z + p.gamma2 * z * z / 2.0
    if np.any(base.real <= 0):
        raise DomainError(
            "theta - i beta z + gamma^2 z^2 / 2 left the right half-plane "
            "(damping too large?)"
        )
    a = p.alpha / 2.0
    return -1j * p.beta * z - _coef(p.alpha, p.theta) * (base**a - p.theta**a)


def stdnts_chf(z: ArrayLike, p: StdNtsParams) -> np.ndarray:
    """Characteristic function of stdNTS(alpha, theta, beta) at (complex) ``z``."""
    return np.exp(_log_chf(np.asarray(z, dtype=complex), p))


def psi(z: ArrayLike, p: StdNtsParams) -> np.ndarray:
    """Derivative of ``log stdnts_chf(z)`` with respect to beta."""
    z = np.asarray(z, dtype=complex)
    al, th, be = p.alpha, p.theta, p.beta
    base = 1.0 - 1j * z * be / th + p.gamma2 * z * z / (2.0 * th)
    if np.any(base.real <= 0):
        raise DomainError("psi: base left the right half-plane")
    return -1j * z + base ** (al / 2.0 - 1.0) * (1j * z + be * (2.0 - al) * z * z / (2.0 * th))


# ---------------------------------------------------------------------------
# Quadrature machinery


@lru_cache(maxsize=64)
def _composite_rule(upper: float, n_panels: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(_GL_ORDER)
    h = upper / n_panels
    left = np.arange(n_panels) * h
    nodes = (left[:, None] + (x[None, :] + 1.0) * (h / 2.0)).ravel()
    weights = np.tile(w * (h / 2.0), n_panels)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def _effective_upper(envelope: Callable[[float], float], cfg: QuadratureConfig) -> float:
    """Upper integration limit beyond which the integrand envelope is negligible."""
    eps = cfg.tolerance * 1e-2
    upper = cfg.truncation
    limit = cfg.truncation * _MAX_TRUNCATION_GROWTH
    while envelope(upper) > eps:
        upper *= 2.0
        if upper > limit:
            raise ConvergenceError(
                f"integrand still above {eps:g} at u={limit:g}; characteristic function decays too slowly"
            )
    while upper > 1.0 and envelope(upper / 2.0) <= eps:
        upper /= 2.0
    return upper


def _integrate(
    integrand: Callable[[np.ndarray], np.ndarray], upper: float, cfg: QuadratureConfig
) -> np.ndarray:
    """Integrate ``integrand(u)`` (shape ``(..., len(u))``) over ``[0, upper]``."""
    n_panels = max(1, cfg.nodes // _GL_ORDER)
    max_panels = max(n_panels, cfg.max_nodes // _GL_ORDER)
    prev = None
    while True:
        u, w = _composite_rule(float(upper), n_panels)
        val = integrand(u) @ w
        if prev is not None:
            err = float(np.max(np.abs(val - prev))) if np.size(val) else 0.0
            if err < cfg.tolerance:
                return val
        if n_panels >= max_panels:
            raise ConvergenceError(
                f"quadrature did not converge with {n_panels * _GL_ORDER} nodes on [0, {upper:g}]"
            )
        prev = val
        n_panels *= 2


def _chf_envelope(p: StdNtsParams) -> Callable[[float], float]:
    return lambda u: float(np.abs(stdnts_chf(u, p)))


def _batched(x: np.ndarray, fn: Callable[[np.ndarray], np.ndarray], size: int = 256) -> np.ndarray:
    out = np.empty(x.size, dtype=float)
    flat = x.ravel()
    for start in range(0, flat.size, size):
        out[start : start + size] = fn(flat[start : start + size])
    return out.reshape(x.shape)


# ---------------------------------------------------------------------------
# CDF / density / quantile


def stdnts_cdf(x: ArrayLike, p: StdNtsParams, q: QuadratureConfig = DEFAULT_QUAD) -> ArrayLike:
    """Gil-Pelaez inversion ``F(x) = 1/2 - (1/pi) int_0^inf Im[e^{-iux} phi(u)] / u du``."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise DomainError("stdnts_cdf requires finite x")
    upper = _effective_upper(_chf_envelope(p), q)

    def block(xb: np.ndarray) -> np.ndarray:
        def integrand(u: np.ndarray) -> np.ndarray:
            f = stdnts_chf(u, p) / u
            return np.imag(np.exp(-1j * np.outer(xb, u)) * f)

        return 0.5 - _integrate(integrand, upper, q) / math.pi

    vals = np.clip(_batched(xs, block), 0.0, 1.0)
    return float(vals) if vals.ndim == 0 else vals


def _clamp_density(vals: np.ndarray, tol: float) -> np.ndarray:
    if np.any(vals < -tol):
        raise ConvergenceError(f"negative density {vals.min():.3g} beyond round-off tolerance")
    return np.maximum(vals, 0.0)


def stdnts_pdf(x: ArrayLike, p: StdNtsParams, q: QuadratureConfig = DEFAULT_QUAD) -> ArrayLike:
    """Density ``(1/pi) int_0^inf Re[e^{-iux} phi(u)] du``."""
    xs = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xs)):
        raise DomainError("stdnts_pdf requires finite x")
    upper = _effective_upper(lambda u: _chf_envelope(p)(u) * max(u, 1.0), q)

    def block(xb: np.ndarray) -> np.ndarray:
        def integrand(u: np.ndarray) -> np.ndarray:
            return np.real(np.exp(-1j * np.outer(xb, u)) * stdnts_chf(u, p))

        return _integrate(integrand, upper, q) / math.pi

    vals = _clamp_density(_batched(xs, block), q.tolerance)
    return float(vals) if vals.ndim == 0 else vals


def stdnts_quantile(eta: float, p: StdNtsParams, q: QuadratureConfig = DEFAULT_QUAD) -> float:
    """Inverse CDF by geometric bracket expansion and Brent refinement."""
    if not (0.0 < eta < 1.0):
        raise DomainError(f"eta must lie in (0, 1), got {eta}")

    def g(x: float) -> float:
        return stdnts_cdf(x, p, q) - eta

    lo, hi = -_QUANTILE_BRACKET_START, _QUANTILE_BRACKET_START
    g_lo, g_hi = g(lo), g(hi)
    while g_lo > 0 or g_hi < 0:
        if hi >= _QUANTILE_BRACKET_MAX:
            raise BracketError(f"quantile {eta} not bracketed within +/-{_QUANTILE_BRACKET_MAX}")
        lo, hi = max(2 * lo, -_QUANTILE_BRACKET_MAX), min(2 * hi, _QUANTILE_BRACKET_MAX)
        g_lo, g_hi = g(lo), g(hi)
    if g_lo == 0:
        return lo
    if g_hi == 0:
        return hi
    root = brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(g(root)) >= 1e-10:
        raise ConvergenceError(f"quantile residual {abs(g(root)):.3g} exceeds 1e-10")
    return float(root)


# ---------------------------------------------------------------------------
# beta-derivatives


def cdf_dbeta(x: ArrayLike, p: StdNtsParams, q: QuadratureConfig = DEFAULT_QUAD) -> ArrayLike:
    """``dF/dbeta (x) = -(1/pi) int_0^inf Im[e^{-iux} psi(u) phi(u)] / u du``."""
    xs = np.asarray(x, dtype=float)
    upper = _effective_upper(
        lambda u: float(np.abs(stdnts_chf(u, p) * psi(u, p))) / max(u, 1e-300), q
    )

    def block(xb: np.ndarray) -> np.ndarray:
        def integrand(u: np.ndarray) -> np.ndarray:
            f = stdnts_chf(u, p) * psi(u, p) / u
            return np.imag(np.exp(-1j * np.outer(xb, u)) * f)

        return -_integrate(integrand, upper, q) / math.pi

    vals = _batched(xs, block)
    return float(vals) if vals.ndim == 0 else vals


def quantile_dbeta(
    eta: float, p: StdNtsParams, q: QuadratureConfig = DEFAULT_QUAD, quantile: float | None = None
) -> float:
    """Implicit-function derivative ``-(dF/dbeta)(x_eta) / f(x_eta)`` of the quantile."""
    x = stdnts_quantile(eta, p, q) if quantile is None else quantile
    dens = stdnts_pdf(x, p, q)
    if dens <= 1e-12:
        raise DegenerateError(f"density {dens:.3g} at the quantile is too small")
    return -cdf_dbeta(x, p, q) / dens


# ---------------------------------------------------------------------------
# Damped-contour CVaR kernel


def auto_delta(p: StdNtsParams) -> float:
    """Half of the positive root of ``gamma^2 d^2 / 2 - beta d - theta = 0``."""
    g2 = p.gamma2
    root = (p.beta + math.sqrt(p.beta**2 + 2.0 * g2 * p.theta)) / g2
    return 0.5 * root


def resolve_delta(p: StdNtsParams, q: QuadratureConfig) -> float:
    if q.delta == "auto":
        return auto_delta(p)
    d = float(q.delta)
    if p.theta + p.beta * d - p.gamma2 * d * d / 2.0 <= 0:
        raise DomainError(f"damping delta={d} lies outside the analytic strip")
    return d


def tight_delta(p: StdNtsParams, x: float) -> float:
    """Damping that minimizes ``e^{d x} |phi(i d)| / d^2``, the contour integrand at ``u = 0``.

    The objective is log-convex in ``d`` on the analytic strip, so the minimizer
    is unique.  It is used when the default damping leaves an integrand so large
    that cancellation defeats the quadrature tolerance.
    """
    upper = 2.0 * auto_delta(p)

    def log_mag(d: float) -> float:
        return d * x + float(np.real(_log_chf(np.asarray(1j * d), p))) - 2.0 * math.log(d)

    res = minimize_scalar(log_mag, bounds=(1e-6 * upper, 0.999 * upper), method="bounded",
                          options={"xatol": 1e-10 * upper})
    return float(res.x)


def _with_damping(p: StdNtsParams, q: QuadratureConfig, x: float, compute: Callable[[float], float]) -> float:
    if q.delta != "auto":
        return compute(resolve_delta(p, q))
    try:
        return compute(auto_delta(p))
    except ConvergenceError:
        return compute(tight_delta(p, x))


def cvar_stdnts(
    eta: float,
    p: StdNtsParams,
    q: QuadratureConfig = DEFAULT_QUAD,
    quantile: float | None = None,
) -> float:
    """CVaR (positive loss) of stdNTS at lower-tail level ``eta`` via the damped Fourier integral.

    CVaR = -x - (1/(pi eta)) Re int_0^inf e^{(iu + d) x} phi(-u + i d) / (-u + i d)^2 du,
    with ``x`` the eta-quantile and ``d`` the damping offset.  With ``delta="auto"``
    a quadrature failure at the default offset is retried once at
    :func:`tight_delta`.
    """
    if not (0.0 < eta < 1.0):
        raise DomainError(f"eta must lie in (0, 1), got {eta}")
    x = stdnts_quantile(eta, p, q) if quantile is None else quantile

    def compute(d: float) -> float:
        scale = math.exp(d * x)
        upper = _effective_upper(
            lambda u: scale * float(np.abs(stdnts_chf(-u + 1j * d, p))) / (u * u + d * d), q
        )

        def integrand(u: np.ndarray) -> np.ndarray:
            z = -u + 1j * d
            return np.real(np.exp((1j * u + d) * x) * stdnts_chf(z, p) / (z * z))

        integral = float(_integrate(integrand, upper, q))
        return -x - integral / (math.pi * eta)

    return _with_damping(p, q, x, compute)


def cvar_dbeta(
    eta: float,
    p: StdNtsParams,
    q: QuadratureConfig = DEFAULT_QUAD,
    quantile: float | None = None,
    dquantile: float | None = None,
) -> float:
    """Derivative of :func:`cvar_stdnts` with respect to beta."""
    x = stdnts_quantile(eta, p, q) if quantile is None else quantile
    dx = quantile_dbeta(eta, p, q, quantile=x) if dquantile is None else dquantile

    def compute(d: float) -> float:
        scale = math.exp(d * x)

        def env(u: float) -> float:
            z = -u + 1j * d
            mag = abs(complex(stdnts_chf(z, p))) / (u * u + d * d)
            return scale * mag * (abs(complex(psi(z, p))) + math.hypot(d, u) * abs(dx))

        upper = _effective_upper(env, q)

        def integrand(u: np.ndarray) -> np.ndarray:
            z = -u + 1j * d
            core = np.exp((1j * u + d) * x) * stdnts_chf(z, p) / (z * z)
            return np.real(core * ((d + 1j * u) * dx + psi(z, p)))

        integral = float(_integrate(integrand, upper, q))
        return -dx - integral / (math.pi * eta)

    return _with_damping(p, q, x, compute)


# ---------------------------------------------------------------------------
# Sampling


def _rng(seed: int | np.random.Generator | None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _positive_stable(a: float, scale: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Draws with Laplace transform ``exp(-scale * s^a)``, ``0 < a < 1`` (Kanter's representation)."""
    u = rng.uniform(0.0, math.pi, size)
    e = rng.standard_exponential(size)
    s = (np.sin(a * u) / np.sin(u) ** (1.0 / a)) * (np.sin((1.0 - a) * u) / e) ** ((1.0 - a) / a)
    return scale ** (1.0 / a) * s


def sample_subordinator(
    p: SubordinatorParams, n: int, seed: int | np.random.Generator | None = None
) -> np.ndarray:
    """Exact draws of the tempered stable subordinator.

    ``T`` is written as a sum of ``m = ceil(2 theta / alpha)`` i.i.d. pieces; each
    piece is a positive ``alpha/2``-stable draw accepted with probability
    ``exp(-theta s)``, which keeps the acceptance rate above ``1/e``.
    """
    if n < 1:
        raise DomainError("n must be >= 1")
    rng = _rng(seed)
    a = p.alpha / 2.0
    c = p.theta ** (1.0 - a) / a
    m = max(1, math.ceil(2.0 * p.theta / p.alpha))
    accept_rate = math.exp(-p.theta / (a * m))
    out = np.empty(n)
    chunk = max(1, _SAMPLE_CHUNK // m)
    for start in range(0, n, chunk):
        count = min(chunk, n - start)
        total = count * m
        pieces = np.empty(total)
        filled = 0
        while filled < total:
            need = total - filled
            batch = int(need * 1.1 / accept_rate) + 16
            s = _positive_stable(a, c / m, batch, rng)
            keep = s[rng.uniform(size=batch) <= np.exp(-p.theta * s)]
            take = min(need, keep.size)
            pieces[filled : filled + take] = keep[:take]
            filled += take
        out[start : start + count] = pieces.reshape(count, m).sum(axis=1)
    return out


def sample_stdnts(p: StdNtsParams, n: int, seed: int | np.random.Generator | None = None) -> np.ndarray:
    """Draws ``beta (T - 1) + gamma sqrt(T) Z``."""
    rng = _rng(seed)
    t = sample_subordinator(p.subordinator, n, rng)
    z = rng.standard_normal(n)
    return p.beta * (t - 1.0) + p.gamma() * np.sqrt(t) * z
