from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntsmarket.errors import DegenerateError, DomainError, InfeasibleError
from ntsmarket.frontier import (
    KKT_TOL,
    as_ratio,
    as_ratio_curve,
    as_score,
    frontier_surface,
    maximize_as_ratio,
    min_disp_portfolio,
    sharpe_ratio,
    tangency,
    tangency_portfolio,
)
from ntsmarket.market import MarketModel, random_market
from ntsmarket.nts_dist import beta_bound

from oracles import simplex_grid


@pytest.fixture(scope="module")
def m3():
    return random_market(3, 0.98, 0.23, seed=5, beta_range=(-0.4, 0.3), mu_range=(0.0002, 0.001))


def test_identity_covariance_gives_equal_weights():
    n, s = 5, 0.02
    m = MarketModel.from_epsilon_corr(1.0, 1.0, np.zeros(n), np.full(n, 0.001), np.full(n, s), np.eye(n))
    pt = min_disp_portfolio(m, -1.0, 0.0)
    np.testing.assert_allclose(pt.w, np.full(n, 1 / n), atol=1e-12)
    assert pt.disp == pytest.approx(s / math.sqrt(n))


@pytest.mark.parametrize("frac_b, frac_m", [(0.2, 0.3), (0.5, 0.5), (0.8, 0.1), (0.1, 0.9)])
def test_min_disp_against_grid(m3, frac_b, frac_m):
    b = m3.beta.min() + frac_b * np.ptp(m3.beta)
    r = m3.mu.min() + frac_m * np.ptp(m3.mu)
    w = simplex_grid()
    ok = (w @ m3.beta >= b) & (w @ m3.mu >= r)
    pt = min_disp_portfolio(m3, b, r)
    if not ok.any():
        assert not pt.feasible or pt.disp > 0
        return
    brute = np.sqrt(np.einsum("ij,jk,ik->i", w[ok], m3.cov, w[ok])).min()
    assert pt.feasible
    assert pt.disp <= brute + 1e-12
    assert brute - pt.disp < 2e-4
    assert pt.kkt_residual < KKT_TOL
    assert pt.asym >= b - 1e-12 and pt.reward >= r - 1e-12


def test_unreachable_reward_is_infeasible(m3):
    pt = min_disp_portfolio(m3, m3.beta.min(), m3.mu.max() * 1.01)
    assert not pt.feasible and pt.w is None and math.isnan(pt.disp)


def test_surface_properties():
    m = random_market(6, 0.98, 0.23, seed=3, beta_range=(-0.5, 0.2))
    surf = frontier_surface(m, 11, 11)
    assert not surf.errors
    mask = surf.feasible_mask()
    disp = surf.disp_matrix()
    assert mask[0, 0]
    for i in range(11):
        for j in range(11):
            pt = surf.points[i][j]
            if pt.feasible:
                assert pt.kkt_residual < KKT_TOL
    # nested feasible sets: optimal dispersion nondecreasing in either floor
    for i in range(11):
        d = disp[i][mask[i]]
        assert np.all(np.diff(d) >= -1e-12)
    for j in range(11):
        d = disp[:, j][mask[:, j]]
        assert np.all(np.diff(d) >= -1e-12)


def test_surface_threads_match_serial():
    m = random_market(4, 1.2, 1.0, seed=2)
    a = frontier_surface(m, 5, 5)
    b = frontier_surface(m, 5, 5, threads=3)
    np.testing.assert_array_equal(a.disp_matrix(), b.disp_matrix())


def test_surface_rejects_empty_grid(m3):
    with pytest.raises(DomainError):
        frontier_surface(m3, 0, 5)


# ---------------------------------------------------------------------------
# Tangency


def test_tangency_two_symmetric_assets():
    m = MarketModel.from_epsilon_corr(1.0, 1.0, [0.1, -0.1], [0.011, 0.011], [0.02, 0.02], np.eye(2))
    m = m.replace(cov=np.diag([0.0004, 0.0004]))
    w = tangency_portfolio(m, 0.001, -0.5)
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


@pytest.mark.parametrize("frac", [0.0, 0.4, 0.7, 0.95])
def test_tangency_against_grid(m3, frac):
    b = m3.beta.min() + frac * np.ptp(m3.beta)
    r_f = 0.0001
    w = simplex_grid()
    ok = w @ m3.beta >= b
    sd = np.sqrt(np.einsum("ij,jk,ik->i", w[ok], m3.cov, w[ok]))
    brute = ((w[ok] @ m3.mu - r_f) / sd).max()
    t = tangency(m3, r_f, b)
    assert t.sharpe >= brute - 1e-12
    assert t.sharpe - brute < 1e-3
    assert m3.beta @ t.w >= b - 1e-10


def test_tangency_binding_floor(m3):
    r_f = 0.0
    free = tangency(m3, r_f, m3.beta.min())
    b = free.w @ m3.beta + 0.5 * (m3.beta.max() - free.w @ m3.beta)
    t = tangency(m3, r_f, b)
    assert t.w @ m3.beta == pytest.approx(b, abs=1e-8)
    assert t.sharpe <= free.sharpe + 1e-12


@given(st.floats(0.1, 10.0), st.floats(0.1, 10.0))
def test_tangency_scale_invariance(c, d):
    m = random_market(4, 0.98, 0.23, seed=14, mu_range=(0.0001, 0.001))
    r_f = 0.00005
    base = tangency_portfolio(m, r_f, m.beta.min())
    scaled = MarketModel(m.alpha, m.theta, m.beta, r_f + d * (m.mu - r_f), math.sqrt(c) * m.sigma, c * m.cov)
    np.testing.assert_allclose(tangency_portfolio(scaled, r_f, m.beta.min()), base, atol=1e-9)


def test_tangency_errors(m3):
    with pytest.raises(DomainError):
        tangency(m3, 1.0, 0.0)
    with pytest.raises(InfeasibleError):
        tangency(m3, 0.0, m3.beta.max() + 0.01)


def test_tangency_fallback_when_excess_floor_is_negative():
    # only the low-return asset meets the floor, and it earns below r_f
    m = MarketModel.from_epsilon_corr(1.0, 1.0, [-0.3, 0.4], [0.002, 0.0001], [0.01, 0.01], np.eye(2))
    t = tangency(m, 0.0005, 0.35)
    assert t.method == "fallback"
    assert m.beta @ t.w >= 0.35 - 1e-9


def test_sharpe_ratio_degenerate():
    m = random_market(2, 1.0, 1.0, seed=1)
    with pytest.raises(DegenerateError):
        sharpe_ratio(m, np.zeros(2), 0.0)


# ---------------------------------------------------------------------------
# AS score and ratio


def test_as_score_examples():
    assert as_score(-0.5, 1.2, 1.0) == pytest.approx(0.6581, abs=1e-4)
    assert as_score(0.5, 1.2, 1.0) == pytest.approx(0.3419, abs=1e-4)
    assert as_score(0.0, 1.2, 1.0) == 0.5
    bound = beta_bound(1.2, 1.0)
    assert as_score(-bound, 1.2, 1.0) == 1.0
    assert as_score(bound, 1.2, 1.0) == 0.0
    with pytest.raises(DomainError):
        as_score(bound * 1.01, 1.2, 1.0)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0), st.floats(0.1, 1.9), st.floats(0.1, 5.0))
def test_as_score_affine(f1, f2, alpha, theta):
    bound = beta_bound(alpha, theta)
    b1, b2 = f1 * bound, f2 * bound
    lhs = as_score(b1, alpha, theta) - as_score(b2, alpha, theta)
    assert lhs == pytest.approx((b2 - b1) / (2 * bound), abs=1e-14)


def test_as_ratio_unit_score_equals_sharpe(m3):
    bound = m3.beta_bound
    assert as_ratio(m3, -bound, 0.0) == pytest.approx(tangency(m3, 0.0, -bound).sharpe)


def test_as_ratio_increases_on_flat_sharpe(m3):
    lo = -m3.beta_bound * 0.9
    bs = np.linspace(lo, m3.beta.min(), 5)
    vals = [as_ratio(m3, b, 0.0) for b in bs]
    assert np.all(np.diff(vals) > 0)


def test_as_ratio_vanishing_score(m3):
    with pytest.raises(DegenerateError):
        as_ratio(m3, m3.beta_bound, 0.0)


def test_maximize_single_asset():
    m = MarketModel(1.0, 1.0, [-0.2], [0.001], [0.01], [[0.0001]])
    b, val, w = maximize_as_ratio(m, 0.0)
    assert b == pytest.approx(-0.2)
    np.testing.assert_array_equal(w, [1.0])


def test_maximize_beats_scan_and_dense_grid():
    m = random_market(5, 0.98, 0.23, seed=21, beta_range=(-0.4, 0.2), mu_range=(0.0, 0.001))
    curve = as_ratio_curve(m, 0.0, 51)
    b, val, w = maximize_as_ratio(m, 0.0)
    assert val >= np.nanmax(curve.ratio)
    assert m.beta.min() <= b <= m.beta.max()
    dense = as_ratio_curve(m, 0.0, b_grid=np.linspace(m.beta.min(), m.beta.max(), 401))
    assert abs(val - np.nanmax(dense.ratio)) < 1e-3
    np.testing.assert_allclose(w, tangency_portfolio(m, 0.0, b))


def test_as_ratio_curve_requires_positive_excess(m3):
    with pytest.raises(DomainError):
        as_ratio_curve(m3, 1.0)
