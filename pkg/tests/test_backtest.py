from __future__ import annotations

import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntsmarket.backtest import BacktestConfig, historical_var_cvar, perf_report, rolling_backtest
from ntsmarket.errors import DegenerateError, DomainError, InputError
from ntsmarket.estimate import ReturnPanel
from ntsmarket.frontier import tangency
from ntsmarket.market import random_market, sample_market
from ntsmarket.nts_dist import StdNtsParams, cvar_stdnts, sample_stdnts, stdnts_quantile


def _panel(r, start=dt.date(2001, 1, 1)):
    dates = tuple(start + dt.timedelta(days=i) for i in range(r.shape[0]))
    return ReturnPanel(dates, tuple(f"S{i}" for i in range(r.shape[1])), r)


@pytest.fixture(scope="module")
def synth():
    m = random_market(3, 0.98, 0.23, seed=2, beta_range=(-0.3, 0.1), mu_range=(0.0002, 0.001))
    r = sample_market(m, 310, seed=3)
    return m, r


def test_historical_examples():
    x = -np.arange(100, 0, -1) / 100.0
    assert historical_var_cvar(x, 0.01) == pytest.approx((1.0, 1.0))
    var, cvar = historical_var_cvar(x, 0.05)
    assert var == pytest.approx(0.96) and cvar == pytest.approx(0.98)


def test_historical_matches_analytic():
    p = StdNtsParams(0.98, 0.23, -0.1)
    x = sample_stdnts(p, 1_000_000, seed=1)
    var, cvar = historical_var_cvar(x, 0.01)
    assert var == pytest.approx(-stdnts_quantile(0.01, p), rel=0.01)
    assert cvar == pytest.approx(cvar_stdnts(0.01, p), rel=0.01)


@given(st.lists(st.floats(-1, 1), min_size=20, max_size=300), st.floats(0.05, 0.5))
def test_hist_cvar_at_least_var(vals, eta):
    var, cvar = historical_var_cvar(vals, eta)
    assert cvar >= var - 1e-15


def test_historical_validation():
    with pytest.raises(DomainError):
        historical_var_cvar([1.0, 2.0], 0.0)
    with pytest.raises(InputError):
        historical_var_cvar([], 0.01)


def test_config_validation():
    with pytest.raises(DomainError):
        BacktestConfig(window=100)
    with pytest.raises(DomainError):
        BacktestConfig(rebalance_every=0)
    with pytest.raises(DomainError):
        BacktestConfig(strategy="momentum")
    with pytest.raises(DomainError):
        BacktestConfig(strategy="fixed-weights")
    with pytest.raises(DomainError):
        BacktestConfig(strategy="fixed-weights", fixed_weights=(0.5, 0.6))


def test_fixed_weights_pass_through(synth):
    _, r = synth
    w = (0.2, 0.5, 0.3)
    cfg = BacktestConfig(window=250, rebalance_every=7, strategy="fixed-weights", fixed_weights=w)
    res = rolling_backtest(_panel(r), r.mean(axis=1), cfg)
    np.testing.assert_array_equal(res.returns, r[250:] @ np.array(w))
    np.testing.assert_allclose(res.cumulative, np.cumsum(r[250:] @ np.array(w)))
    assert len(res.rebalance_dates) == math.ceil(60 / 7)
    assert res.dates[0] == _panel(r).dates[250]


def test_panel_too_short(synth):
    _, r = synth
    with pytest.raises(InputError):
        rolling_backtest(_panel(r[:255]), r[:255].mean(axis=1), BacktestConfig(window=250))


@pytest.fixture(scope="module")
def as_max_run(synth):
    _, r = synth
    cfg = BacktestConfig(window=250, rebalance_every=25, strategy="AS-max", n_b=11)
    return cfg, rolling_backtest(_panel(r), r.mean(axis=1), cfg)


def test_as_max_weights_on_simplex(as_max_run):
    _, res = as_max_run
    assert not res.failures
    assert len(res.weights) == 3
    for w in res.weights:
        assert abs(w.sum() - 1) < 1e-12 and np.all(w >= 0)


def test_deterministic_and_shift_equivariant(synth, as_max_run):
    cfg, res = as_max_run
    _, r = synth
    again = rolling_backtest(_panel(r), r.mean(axis=1), cfg)
    np.testing.assert_array_equal(again.returns, res.returns)
    # dropping the first k rows shifts every rebalance by k days
    k = 25
    shifted = rolling_backtest(_panel(r[k:], _panel(r).dates[k]), r[k:].mean(axis=1), cfg)
    np.testing.assert_array_equal(shifted.weights[0], res.weights[1])
    np.testing.assert_array_equal(shifted.returns, res.returns[k:])


def test_no_look_ahead(synth, as_max_run):
    cfg, res = as_max_run
    _, r = synth
    future = r.copy()
    future[275:] = future[275:][::-1] * 3.0
    alt = rolling_backtest(_panel(future), future.mean(axis=1), cfg)
    np.testing.assert_array_equal(alt.weights[0], res.weights[0])
    np.testing.assert_array_equal(alt.returns[:25], res.returns[:25])


def test_failure_holds_previous_weights(synth):
    _, r = synth
    bad = r.copy()
    bad[:, 1] = 0.0
    cfg = BacktestConfig(window=250, rebalance_every=25, strategy="Sharpe-max")
    res = rolling_backtest(_panel(bad), bad.mean(axis=1), cfg)
    assert len(res.failures) == 3
    np.testing.assert_array_equal(res.weights[0], np.full(3, 1 / 3))
    assert "DegenerateError" in res.failures[0][1]


@pytest.fixture(scope="module")
def gaussian_report():
    x = np.random.default_rng(3).standard_normal(5000)
    return x, perf_report(x, 0.01, 0.0)


def _fitted_skewness(rep):
    kappa2 = (2 - rep.alpha) / (2 * rep.theta)
    kappa3 = (2 - rep.alpha) * (4 - rep.alpha) / (4 * rep.theta**2)
    gamma2 = 1 - rep.beta**2 * kappa2
    return rep.beta**3 * kappa3 + 3 * rep.beta * gamma2 * kappa2


def test_perf_report_gaussian_series(gaussian_report):
    x, rep = gaussian_report
    assert abs(rep.sharpe) < 3 / math.sqrt(x.size)
    # the fitted law must be as symmetric as the data allow
    assert abs(_fitted_skewness(rep)) < 3 * math.sqrt(6 / x.size)
    assert rep.hist_cvar >= rep.hist_var
    assert rep.var_ratio == pytest.approx(rep.mean / rep.hist_var)
    assert [name for name, _ in rep.rows()][-1] == "AS Ratio"
    assert "CVaR Ratio" in rep.table()


@pytest.mark.xfail(
    strict=True,
    reason="Gaussian data drive the fit to the near-Gaussian corner of the box, where beta "
    "enters the law only through beta*(2-alpha)/(2 theta) and is not identified",
)
def test_perf_report_gaussian_beta_small(gaussian_report):
    _, rep = gaussian_report
    assert abs(rep.beta) < 0.03


def test_perf_report_errors():
    with pytest.raises(DegenerateError):
        perf_report(np.full(300, 0.001))
    with pytest.raises(InputError):
        perf_report(np.zeros(100))


@pytest.mark.slow
def test_realized_sharpe_near_in_sample_optimum():
    m = random_market(3, 0.98, 0.23, seed=4, beta_range=(-0.3, 0.1), mu_range=(0.0005, 0.0015))
    r = sample_market(m, 1250, seed=8)
    panel = _panel(r)
    optimum = tangency(m, 0.0, m.beta.min()).sharpe
    for strategy in ("Sharpe-max", "AS-max"):
        cfg = BacktestConfig(window=250, rebalance_every=100, strategy=strategy, n_b=11)
        res = rolling_backtest(panel, r.mean(axis=1), cfg)
        realized = res.returns.mean() / res.returns.std(ddof=1)
        se = math.sqrt((1 + 0.5 * realized**2) / res.returns.size)
        assert abs(realized - optimum) < 3 * se, (strategy, realized, optimum)
