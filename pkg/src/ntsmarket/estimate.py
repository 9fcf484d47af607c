"""Two-step stdNTS estimation from return panels.

Step one fits ``(alpha, theta, beta)`` to the standardized residuals of an index
by least squares between the model CDF and a kernel-smoothed empirical CDF.
Step two keeps ``(alpha, theta)`` and fits one ``beta`` per asset the same way.
Location, scale and the return covariance come from sample moments.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, kolmogorov, ndtr

from .errors import ConvergenceError, DegenerateError, DomainError, InputError, SolverError
from .market import MarketModel
from .nts_dist import (
    QuadratureConfig,
    StdNtsParams,
    _composite_rule,
    _effective_upper,
    beta_bound,
    stdnts_cdf,
    stdnts_chf,
)

ALPHA_BOX = (0.05, 1.95)
THETA_BOX = (1e-3, 50.0)
BETA_SHRINK = 0.99
MIN_PANEL_LENGTH = 250
MIN_RESIDUALS = 30

# looser than the default engine so one objective evaluation stays in milliseconds;
# the node cap turns slowly decaying corners of the box into penalties instead of stalls
FIT_QUAD = QuadratureConfig(tolerance=1e-8, max_nodes=2**13)
_PENALTY = 1e3
_SCREEN_EVALS = 120
_REFINE_TOP = 2
# above this many residuals the KS test reads the CDF from a monotone interpolant
_KS_EXACT_MAX = 4096


# ---------------------------------------------------------------------------
# Data containers


@dataclass(frozen=True)
class ReturnPanel:
    """Daily log-returns, ``returns[t, n]`` for date ``t`` and asset ``n``."""

    dates: tuple
    assets: tuple
    returns: np.ndarray

    def __post_init__(self) -> None:
        r = np.array(self.returns, dtype=float)
        if r.ndim == 1:
            r = r[:, None]
        if r.ndim != 2:
            raise InputError("returns must be a T x N matrix")
        object.__setattr__(self, "returns", r)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "assets", tuple(str(a) for a in self.assets))
        t, n = r.shape
        if len(self.dates) != t:
            raise InputError(f"{len(self.dates)} dates for {t} return rows")
        if len(self.assets) != n:
            raise InputError(f"{len(self.assets)} symbols for {n} return columns")
        if len(set(self.assets)) != n:
            raise InputError("duplicate asset symbols")
        if t < MIN_PANEL_LENGTH:
            raise InputError(f"panel has {t} rows, at least {MIN_PANEL_LENGTH} required")
        if not np.all(np.isfinite(r)):
            raise InputError("returns contain missing or non-finite values")
        for i in range(1, t):
            if not self.dates[i] > self.dates[i - 1]:
                raise InputError(f"dates not strictly increasing at row {i + 1}: {self.dates[i]}")

    @property
    def n_obs(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]

    def column(self, name: str) -> np.ndarray:
        return self.returns[:, self.assets.index(name)]

    def window(self, start: int, stop: int) -> "ReturnPanel":
        return ReturnPanel(self.dates[start:stop], self.assets, self.returns[start:stop])


@dataclass(frozen=True)
class SmoothedEcdf:
    grid: np.ndarray
    values: np.ndarray
    bandwidth: float


@dataclass(frozen=True)
class FitResult:
    params: StdNtsParams
    ks_stat: float
    p_value: float
    objective: float
    at_bound: bool = False


@dataclass(frozen=True)
class TwoStepFit:
    model: MarketModel
    index_fit: FitResult
    asset_fits: list[FitResult] = field(default_factory=list)

    @property
    def flagged_assets(self) -> list[str]:
        names = self.model.assets or tuple(str(i) for i in range(self.model.n_assets))
        return [names[i] for i, f in enumerate(self.asset_fits) if f.at_bound]


# ---------------------------------------------------------------------------
# CSV ingestion


def _parse_date(text: str, row: int) -> _dt.date:
    try:
        return _dt.date.fromisoformat(text.strip())
    except ValueError:
        raise InputError(f"row {row}, column 1: cannot parse date {text!r}") from None


def read_price_csv(path: Union[str, Path]) -> tuple[list, list[str], np.ndarray]:
    """Read ``date,SYM1,SYM2,...`` rows; returns ``(dates, symbols, values)``."""
    path = Path(path)
    try:
        fh = path.open(newline="")
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path}: empty file") from None
        if len(header) < 2:
            raise InputError(f"{path}: header needs a date column and at least one symbol")
        symbols = [h.strip() for h in header[1:]]
        if any(not s for s in symbols):
            raise InputError(f"{path}: row 1: empty symbol in header")
        dates, rows = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise InputError(f"{path}: row {lineno}: expected {len(header)} columns, found {len(rec)}")
            dates.append(_parse_date(rec[0], lineno))
            vals = []
            for col, cell in enumerate(rec[1:], start=2):
                try:
                    v = float(cell)
                except ValueError:
                    raise InputError(f"{path}: row {lineno}, column {col}: not a number: {cell!r}") from None
                if not math.isfinite(v):
                    raise InputError(f"{path}: row {lineno}, column {col}: non-finite value")
                vals.append(v)
            rows.append(vals)
    if not rows:
        raise InputError(f"{path}: no data rows")
    return dates, symbols, np.array(rows, dtype=float)


def panel_from_values(dates, symbols, values, kind: str = "prices") -> ReturnPanel:
    """Build a :class:`ReturnPanel`; ``kind='prices'`` converts to log-returns."""
    values = np.asarray(values, dtype=float)
    if kind == "prices":
        bad = np.argwhere(values <= 0)
        if bad.size:
            r, c = bad[0]
            raise InputError(f"row {r + 2}, column {c + 2}: price must be positive")
        return ReturnPanel(tuple(dates[1:]), symbols, np.diff(np.log(values), axis=0))
    if kind == "returns":
        return ReturnPanel(tuple(dates), symbols, values)
    raise InputError(f"unknown data kind {kind!r}; use 'prices' or 'returns'")


def read_panel(path: Union[str, Path], kind: str = "prices") -> ReturnPanel:
    dates, symbols, values = read_price_csv(path)
    return panel_from_values(dates, symbols, values, kind)


def align(panel: ReturnPanel, index: ReturnPanel) -> tuple[ReturnPanel, np.ndarray]:
    """Restrict both inputs to their common dates; returns the panel and the index series."""
    if index.n_assets != 1:
        raise InputError(f"index file must hold one series, found {index.n_assets}")
    common = sorted(set(panel.dates) & set(index.dates))
    pos_p = {d: i for i, d in enumerate(panel.dates)}
    pos_i = {d: i for i, d in enumerate(index.dates)}
    rows_p = [pos_p[d] for d in common]
    rows_i = [pos_i[d] for d in common]
    aligned = ReturnPanel(tuple(common), panel.assets, panel.returns[rows_p])
    return aligned, index.returns[rows_i, 0]


# ---------------------------------------------------------------------------
# Moments and smoothing


def standardize(series) -> tuple[float, float, np.ndarray]:
    """Sample mean, sample std (divisor ``T - 1``) and standardized residuals."""
    x = np.asarray(series, dtype=float).ravel()
    if x.size < 2:
        raise DegenerateError("standardize needs at least two observations")
    mean = float(x.mean())
    std = float(x.std(ddof=1))
    if not std > 1e-14:
        raise DegenerateError(f"series is degenerate (std={std:.3g})")
    z = (x - mean) / std
    # one polishing pass removes round-off in the moments
    z = (z - z.mean()) / z.std(ddof=1)
    return mean, std, z


def sample_covariance(panel: Union[ReturnPanel, np.ndarray]) -> np.ndarray:
    r = panel.returns if isinstance(panel, ReturnPanel) else np.atleast_2d(np.asarray(panel, dtype=float))
    if r.shape[0] < 2:
        raise DegenerateError("covariance needs at least two observations")
    c = np.atleast_2d(np.cov(r, rowvar=False, ddof=1))
    return 0.5 * (c + c.T)


def silverman_bandwidth(x: np.ndarray) -> float:
    return 1.06 * float(np.std(x, ddof=1)) * x.size ** (-0.2)


def smoothed_ecdf(
    residuals, bandwidth: Union[float, str] = "silverman", grid_size: int = 201
) -> SmoothedEcdf:
    """Gaussian-kernel CDF estimate on ``grid_size`` points over ``[min - 3h, max + 3h]``."""
    x = np.sort(np.asarray(residuals, dtype=float).ravel())
    if x.size < MIN_RESIDUALS:
        raise InputError(f"need at least {MIN_RESIDUALS} residuals, got {x.size}")
    if grid_size < 2:
        raise DomainError("grid_size must be at least 2")
    h = silverman_bandwidth(x) if bandwidth == "silverman" else float(bandwidth)
    if not h > 0:
        raise DomainError("bandwidth must be positive")
    grid = np.linspace(x[0] - 3 * h, x[-1] + 3 * h, grid_size)
    vals = np.empty(grid_size)
    for start in range(0, grid_size, 16):
        g = grid[start : start + 16]
        vals[start : start + 16] = ndtr((g[:, None] - x[None, :]) / h).mean(axis=1)
    vals = np.clip(np.maximum.accumulate(vals), 0.0, 1.0)
    return SmoothedEcdf(grid=grid, values=vals, bandwidth=h)


# ---------------------------------------------------------------------------
# Curve fit


class GridCdf:
    """Model CDF on a fixed grid with the Fourier kernels precomputed.

    ``F(x_j) = 1/2 - (1/pi) sum_k w_k [cos(u_k x_j) Im phi(u_k) - sin(u_k x_j) Re phi(u_k)] / u_k``
    on a composite Gauss-Legendre rule over ``[0, U]``.  ``U`` follows the
    characteristic-function envelope; panels are sized to the largest ``|x_j|``
    so each one spans a bounded number of oscillations.  Kernel matrices are
    cached per ``U``, so an objective evaluation costs one characteristic-function
    evaluation and two matrix-vector products.
    """

    # 32-point Gauss-Legendre stays accurate to ~1e-30 at this phase per panel
    _PANEL_PHASE = 24.0
    # node budget relative to ``quad.max_nodes``; the oscillation count scales with U*max|x|
    _NODE_FACTOR = 4
    _CACHE_SIZE = 4

    def __init__(self, grid, quad: QuadratureConfig = FIT_QUAD) -> None:
        self.grid = np.asarray(grid, dtype=float)
        self.quad = quad
        self._xmax = max(float(np.abs(self.grid).max()), 1.0)
        self._cache: dict[float, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    def _kernels(self, upper: float):
        if upper not in self._cache:
            n_panels = max(8, 1 << max(0, math.ceil(math.log2(upper * self._xmax / self._PANEL_PHASE))))
            cap = self._NODE_FACTOR * self.quad.max_nodes
            if n_panels * 32 > cap:
                raise ConvergenceError(f"grid CDF needs more than {cap} nodes")
            if len(self._cache) >= self._CACHE_SIZE:
                self._cache.pop(next(iter(self._cache)))
            u, w = _composite_rule(float(upper), n_panels)
            ux = np.outer(self.grid, u)
            scale = w / u
            self._cache[upper] = (u, np.cos(ux) * scale, np.sin(ux) * scale)
        return self._cache[upper]

    def __call__(self, p: StdNtsParams) -> np.ndarray:
        upper = _effective_upper(lambda t: float(np.abs(stdnts_chf(t, p))), self.quad)
        u, c, s = self._kernels(upper)
        phi = stdnts_chf(u, p)
        return np.clip(0.5 - (c @ phi.imag - s @ phi.real) / math.pi, 0.0, 1.0)


def _sse(ecdf: SmoothedEcdf, p: StdNtsParams, evaluator: GridCdf) -> float:
    try:
        model = evaluator(p)
    except (ConvergenceError, DomainError):
        return _PENALTY
    r = model - ecdf.values
    return float(r @ r)


def _decode(z: np.ndarray) -> tuple[float, float, float]:
    lo_a, hi_a = ALPHA_BOX
    alpha = lo_a + (hi_a - lo_a) * float(expit(z[0]))
    lt0, lt1 = math.log(THETA_BOX[0]), math.log(THETA_BOX[1])
    theta = math.exp(lt0 + (lt1 - lt0) * float(expit(z[1])))
    beta = BETA_SHRINK * beta_bound(alpha, theta) * math.tanh(z[2])
    return alpha, theta, beta


def _encode(alpha: float, theta: float, beta: float) -> np.ndarray:
    lo_a, hi_a = ALPHA_BOX
    u = (alpha - lo_a) / (hi_a - lo_a)
    lt0, lt1 = math.log(THETA_BOX[0]), math.log(THETA_BOX[1])
    v = (math.log(theta) - lt0) / (lt1 - lt0)
    frac = beta / (BETA_SHRINK * beta_bound(alpha, theta))
    return np.array([math.log(u / (1 - u)), math.log(v / (1 - v)), math.atanh(frac)])


# coarse lattice of starting points over (alpha, theta, beta / bound)
_STARTS = [(a, t, b) for a in (0.6, 1.4) for t in (0.3, 3.0) for b in (-0.25, 0.25)]


def fit_stdnts_full(
    ecdf: SmoothedEcdf, quad: QuadratureConfig = FIT_QUAD, starts: Optional[Sequence] = None
) -> tuple[StdNtsParams, float]:
    """Least-squares fit of ``(alpha, theta, beta)`` to a smoothed ECDF.

    The box constraints are enforced by a smooth change of variables.  A short
    Nelder-Mead run from every start screens the lattice; the two best are then
    refined to convergence and the lower objective wins.
    """
    evaluator = GridCdf(ecdf.grid, quad)

    def obj(z: np.ndarray) -> float:
        a, t, b = _decode(z)
        try:
            p = StdNtsParams(a, t, b)
        except DomainError:
            return _PENALTY
        return _sse(ecdf, p, evaluator)

    screened = []
    for a, t, fb in starts or _STARTS:
        z0 = _encode(a, t, fb * BETA_SHRINK * beta_bound(a, t))
        res = minimize(obj, z0, method="Nelder-Mead", options={"maxfev": _SCREEN_EVALS})
        if np.isfinite(res.fun) and res.fun < _PENALTY:
            screened.append((float(res.fun), res.x))
    if not screened:
        raise SolverError("curve fit failed from every starting point")
    screened.sort(key=lambda item: item[0])
    best: Optional[tuple[float, np.ndarray]] = None
    for _, z0 in screened[:_REFINE_TOP]:
        res = minimize(
            obj,
            z0,
            method="Nelder-Mead",
            options={"xatol": 1e-7, "fatol": 1e-15, "maxiter": 4000, "maxfev": 6000},
        )
        if best is None or res.fun < best[0]:
            best = (float(res.fun), res.x)
    a, t, b = _decode(best[1])
    return StdNtsParams(a, t, b), best[0]


def fit_beta_given(
    ecdf: SmoothedEcdf, alpha: float, theta: float, quad: QuadratureConfig = FIT_QUAD
) -> tuple[float, float]:
    """One-dimensional least-squares fit of ``beta``; returns ``(beta, objective)``."""
    bound = BETA_SHRINK * beta_bound(alpha, theta)
    evaluator = GridCdf(ecdf.grid, quad)

    def obj(b: float) -> float:
        return _sse(ecdf, StdNtsParams(alpha, theta, b), evaluator)

    # coarse scan guards against a bounded search landing in a side basin
    scan = np.linspace(-bound, bound, 21)
    vals = np.array([obj(b) for b in scan])
    k = int(np.argmin(vals))
    lo, hi = scan[max(k - 1, 0)], scan[min(k + 1, scan.size - 1)]
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded", options={"xatol": 1e-7})
    if not np.isfinite(res.fun) or res.fun >= _PENALTY:
        raise SolverError(f"beta fit failed for alpha={alpha}, theta={theta}")
    b, f = float(res.x), float(res.fun)
    if vals[k] < f:
        b, f = float(scan[k]), float(vals[k])
    return b, f


# ---------------------------------------------------------------------------
# Goodness of fit


def ks_test(residuals, p: StdNtsParams, cdf=None) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test of ``residuals`` against stdNTS(p).

    Uses the raw step ECDF and the asymptotic Kolmogorov distribution at
    ``(sqrt(n) + 0.12 + 0.11 / sqrt(n)) * D``.  The p-value treats ``p`` as known.
    Large samples read the CDF from :func:`model_cdf`; ``cdf`` may override the
    model CDF with any vectorized callable.
    """
    x = np.sort(np.asarray(residuals, dtype=float).ravel())
    n = x.size
    if n < MIN_RESIDUALS:
        raise InputError(f"need at least {MIN_RESIDUALS} residuals, got {n}")
    if cdf is None:
        cdf = model_cdf(p, x[0], x[-1]) if n > _KS_EXACT_MAX else (lambda v: stdnts_cdf(v, p))
    f = np.asarray(cdf(x), dtype=float)
    return ks_from_cdf_values(f)


def model_cdf(p: StdNtsParams, lo: float, hi: float, points: int = 4097):
    """Monotone cubic interpolant of the exact CDF on ``[lo, hi]``."""
    grid = np.linspace(lo, hi, points)
    vals = np.maximum.accumulate(stdnts_cdf(grid, p))
    return PchipInterpolator(grid, vals, extrapolate=True)


def ks_from_cdf_values(f_sorted) -> tuple[float, float]:
    """KS statistic and p-value from model CDF values at the sorted sample."""
    f = np.asarray(f_sorted, dtype=float)
    n = f.size
    i = np.arange(1, n + 1)
    d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n), 0.0))
    sn = math.sqrt(n)
    p = float(kolmogorov((sn + 0.12 + 0.11 / sn) * d)) if d > 0 else 1.0
    return d, min(max(p, 0.0), 1.0)


# ---------------------------------------------------------------------------
# Pipeline


def fit_series(series, quad: QuadratureConfig = FIT_QUAD) -> tuple[float, float, FitResult]:
    """Full three-parameter fit of one series; returns ``(mean, std, FitResult)``."""
    mean, std, z = standardize(series)
    p, obj = fit_stdnts_full(smoothed_ecdf(z), quad)
    d, pv = ks_test(z, p)
    return mean, std, FitResult(p, d, pv, obj, _at_bound(p))


def _at_bound(p: StdNtsParams) -> bool:
    return abs(p.beta) >= BETA_SHRINK * beta_bound(p.alpha, p.theta) * (1 - 1e-6)


def _fit_asset(col: np.ndarray, alpha: float, theta: float, quad: QuadratureConfig):
    mean, std, z = standardize(col)
    beta, obj = fit_beta_given(smoothed_ecdf(z), alpha, theta, quad)
    p = StdNtsParams(alpha, theta, beta)
    d, pv = ks_test(z, p)
    return mean, std, FitResult(p, d, pv, obj, _at_bound(p))


def two_step_fit(
    panel: ReturnPanel,
    index_series,
    quad: QuadratureConfig = FIT_QUAD,
    threads: int = 1,
) -> TwoStepFit:
    """Index fit for ``(alpha, theta)``, then one ``beta`` per asset.

    Assets whose fitted ``beta`` sits on the box edge are flagged with a warning
    and reported by :attr:`TwoStepFit.flagged_assets`.
    """
    idx = np.asarray(index_series, dtype=float).ravel()
    if idx.size != panel.n_obs:
        raise InputError(f"index has {idx.size} observations, panel has {panel.n_obs}")
    _, _, index_fit = fit_series(idx, quad)
    alpha, theta = index_fit.params.alpha, index_fit.params.theta
    cols = [panel.returns[:, n] for n in range(panel.n_assets)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(lambda c: _fit_asset(c, alpha, theta, quad), cols))
    else:
        out = [_fit_asset(c, alpha, theta, quad) for c in cols]
    mu = np.array([o[0] for o in out])
    sigma = np.array([o[1] for o in out])
    fits = [o[2] for o in out]
    beta = np.array([f.params.beta for f in fits])
    cov = sample_covariance(panel)
    # the per-column std and the covariance diagonal share the same estimator
    np.fill_diagonal(cov, sigma**2)
    model = MarketModel(alpha, theta, beta, mu, sigma, cov, assets=panel.assets)
    result = TwoStepFit(model, index_fit, fits)
    if result.flagged_assets:
        warnings.warn(
            "beta at the box bound for: " + ", ".join(result.flagged_assets), RuntimeWarning, stacklevel=2
        )
    return result


__all__ = [
    "ReturnPanel",
    "SmoothedEcdf",
    "FitResult",
    "TwoStepFit",
    "read_price_csv",
    "read_panel",
    "panel_from_values",
    "align",
    "standardize",
    "sample_covariance",
    "smoothed_ecdf",
    "fit_stdnts_full",
    "fit_beta_given",
    "ks_test",
    "ks_from_cdf_values",
    "fit_series",
    "two_step_fit",
]
