"""Normal tempered stable (NTS) market model for portfolio tail-risk analysis."""

from __future__ import annotations

from .errors import (
    BracketError,
    ConvergenceError,
    DegenerateError,
    DomainError,
    InfeasibleError,
    InputError,
    InvalidModelError,
    NtsError,
    SolverError,
)
from .market import GaussianModel, MarketModel, PortfolioProjection, project_portfolio, random_market, sample_market
from .nts_dist import (
    DEFAULT_QUAD,
    QuadratureConfig,
    StdNtsParams,
    SubordinatorParams,
    cvar_stdnts,
    sample_stdnts,
    stdnts_cdf,
    stdnts_chf,
    stdnts_pdf,
    stdnts_quantile,
)

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "ConvergenceError",
    "DegenerateError",
    "DomainError",
    "InfeasibleError",
    "InputError",
    "InvalidModelError",
    "NtsError",
    "SolverError",
    "GaussianModel",
    "MarketModel",
    "PortfolioProjection",
    "project_portfolio",
    "random_market",
    "sample_market",
    "DEFAULT_QUAD",
    "QuadratureConfig",
    "StdNtsParams",
    "SubordinatorParams",
    "cvar_stdnts",
    "sample_stdnts",
    "stdnts_cdf",
    "stdnts_chf",
    "stdnts_pdf",
    "stdnts_quantile",
]
