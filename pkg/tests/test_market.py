from __future__ import annotations

import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ntsmarket.errors import DegenerateError, DomainError, InvalidModelError
from ntsmarket.frontier import as_score
from ntsmarket.market import (
    GaussianModel,
    MarketModel,
    asym_measure,
    check_simplex,
    disp_measure,
    implied_epsilon_corr,
    project_gaussian,
    project_portfolio,
    random_market,
    reward_measure,
    sample_market,
)
from ntsmarket.nts_dist import StdNtsParams, stdnts_cdf

weights3 = st.lists(st.floats(0.0, 1.0), min_size=3, max_size=3).filter(lambda v: sum(v) > 1e-3).map(
    lambda v: np.asarray(v) / sum(v)
)


def test_example_projection(example_market):
    proj = project_portfolio(example_market, [0.0, 0.5, 0.5])
    assert proj.mu_bar == pytest.approx(0.05, abs=1e-12)
    assert proj.sigma_bar == pytest.approx(0.2, abs=1e-12)
    assert proj.beta_bar == pytest.approx(-1 / math.sqrt(2), abs=1e-12)


def test_example_asymmetry_scores(example_market):
    m = example_market
    a_left = as_score(asym_measure([0.0, 0.5, 0.5], m), m.alpha, m.theta)
    a_right = as_score(asym_measure([0.5, 0.5, 0.0], m), m.alpha, m.theta)
    assert a_left == pytest.approx(0.6581, abs=1e-4)
    assert a_right == pytest.approx(0.3419, abs=1e-4)
    assert a_left + a_right == pytest.approx(1.0, abs=1e-14)


def test_measures(example_market):
    w = np.array([0.2, 0.3, 0.5])
    assert asym_measure(w, example_market) == pytest.approx(-0.3)
    assert reward_measure(w, example_market) == pytest.approx(0.05)
    assert disp_measure(w, example_market) == pytest.approx(math.sqrt(0.08 * np.sum(w**2)))


@given(weights3, st.floats(0.1, 10.0))
def test_projection_homogeneity(w, c):
    m = random_market(3, 1.1, 0.8, seed=4)
    a = project_portfolio(m, w)
    b = project_portfolio(m, c * w)
    assert b.mu_bar == pytest.approx(c * a.mu_bar, rel=1e-12)
    assert b.sigma_bar == pytest.approx(c * a.sigma_bar, rel=1e-12)
    assert b.beta_bar == pytest.approx(a.beta_bar, rel=1e-10, abs=1e-14)


@given(weights3)
def test_projected_beta_admissible(w):
    m = random_market(3, 0.98, 0.23, seed=8, beta_range=(-0.6, 0.6))
    assert abs(project_portfolio(m, w).beta_bar) < m.beta_bound


def test_single_asset_projection():
    m = random_market(4, 1.0, 1.0, seed=2)
    e = np.eye(4)[2]
    proj = project_portfolio(m, e)
    assert proj.sigma_bar == pytest.approx(m.sigma[2])
    assert proj.beta_bar == pytest.approx(m.beta[2])


def test_portfolio_law_is_projected_law():
    m = random_market(4, 0.98, 0.23, seed=3, beta_range=(-0.5, 0.2))
    w = np.array([0.1, 0.2, 0.3, 0.4])
    r = sample_market(m, 200_000, seed=9) @ w
    proj = project_portfolio(m, w)
    z = np.sort((r - proj.mu_bar) / proj.sigma_bar)
    grid = np.linspace(-4, 3, 71)
    ecdf = np.searchsorted(z, grid, side="right") / z.size
    model = stdnts_cdf(grid, StdNtsParams(m.alpha, m.theta, proj.beta_bar))
    # DKW band at 1e-4 false-alarm probability
    assert np.max(np.abs(ecdf - model)) < math.sqrt(math.log(2 / 1e-4) / (2 * z.size))


def test_sample_covariance_matches_model():
    m = random_market(3, 1.4, 2.0, seed=5)
    x = sample_market(m, 400_000, seed=1)
    np.testing.assert_allclose(np.cov(x.T), m.cov, atol=4e-6)
    np.testing.assert_allclose(x.mean(axis=0), m.mu, atol=1.5e-4)


def test_from_epsilon_corr_round_trip():
    rho = np.array([[1.0, 0.3, -0.2], [0.3, 1.0, 0.1], [-0.2, 0.1, 1.0]])
    m = MarketModel.from_epsilon_corr(1.2, 1.0, [0.3, -0.4, 0.1], [0.001, 0.0, 0.002], [0.01, 0.02, 0.015], rho)
    np.testing.assert_allclose(implied_epsilon_corr(m), rho, atol=1e-12)
    np.testing.assert_allclose(np.diag(m.cov), m.sigma**2)


def test_gaussian_benchmark_shares_moments(market5):
    g = market5.gaussian()
    w = np.full(5, 0.2)
    mu_bar, sd = project_gaussian(g, w)
    proj = project_portfolio(market5, w)
    assert mu_bar == pytest.approx(proj.mu_bar)
    assert sd == pytest.approx(proj.sigma_bar)


# ---------------------------------------------------------------------------
# Validation


def _base(**kw):
    d = dict(alpha=1.0, theta=1.0, beta=[0.1, -0.1], mu=[0.0, 0.0], sigma=[0.1, 0.2],
             cov=[[0.01, 0.0], [0.0, 0.04]])
    d.update(kw)
    return d


@pytest.mark.parametrize(
    "kw",
    [
        dict(sigma=[0.1, -0.2]),
        dict(beta=[2.0, 0.0]),
        dict(mu=[0.0]),
        dict(cov=[[0.01, 0.001], [0.0, 0.04]]),
        dict(cov=[[0.02, 0.0], [0.0, 0.04]]),
        dict(cov=[[0.01, 0.05], [0.05, 0.04]]),
        dict(cov=np.eye(3)),
        dict(beta=[float("nan"), 0.0]),
    ],
)
def test_invalid_models(kw):
    with pytest.raises(InvalidModelError):
        MarketModel(**_base(**kw))


def test_invalid_subordinator_is_domain_error():
    with pytest.raises(DomainError):
        MarketModel(**_base(alpha=2.5))


def test_inconsistent_epsilon_corr_disables_sampling():
    # strong common beta with zero return covariance needs |rho| > 1
    kw = _base(beta=[0.9, 0.9], alpha=1.0, theta=0.5)
    with pytest.warns(RuntimeWarning):
        m = MarketModel(**kw)
    assert not m.sampling_enabled
    with pytest.raises(InvalidModelError):
        sample_market(m, 10)
    assert project_portfolio(m, [0.5, 0.5]).sigma_bar > 0


def test_degenerate_portfolio():
    m = MarketModel(**_base())
    with pytest.raises(DegenerateError):
        project_portfolio(m, [0.0, 0.0])


def test_weight_validation(example_market):
    with pytest.raises(DomainError):
        project_portfolio(example_market, [0.5, 0.5])
    with pytest.raises(DomainError):
        project_portfolio(example_market, [0.5, float("nan"), 0.5])
    with pytest.raises(DomainError):
        check_simplex(np.array([0.7, 0.7, -0.4]))
    with pytest.raises(DomainError):
        check_simplex(np.array([0.5, 0.6]))
    np.testing.assert_array_equal(check_simplex(np.array([0.25, 0.75])), [0.25, 0.75])


def test_gaussian_model_validation():
    with pytest.raises(InvalidModelError):
        GaussianModel([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_replace_revalidates(example_market):
    m2 = example_market.replace(mu=np.array([0.01, 0.02, 0.03]))
    assert m2.mu[2] == 0.03
    with pytest.raises(InvalidModelError):
        example_market.replace(beta=np.array([5.0, 0.0, 0.0]))


def test_random_market_is_reproducible():
    a = random_market(6, 0.98, 0.23, seed=1)
    b = random_market(6, 0.98, 0.23, seed=1)
    np.testing.assert_array_equal(a.cov, b.cov)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert random_market(30, 0.98, 0.23, seed=2).sampling_enabled


def test_asymmetry_examples(example_market):
    m = example_market
    assert asym_measure([0.0, 0.5, 0.5], m) == pytest.approx(-0.5)
    assert asym_measure([0.5, 0.0, 0.5], m) == pytest.approx(0.0)
    assert asym_measure([1.0, 0.0, 0.0], m) == pytest.approx(1.0)
    assert disp_measure([0.0, 0.5, 0.5], m) == pytest.approx(0.2)
    assert disp_measure([0.0, 1.0, 0.0], m) == pytest.approx(math.sqrt(0.08))


def test_zero_return_covariance_correlation_choice():
    # rho_kl = -beta_k beta_l kappa / (gamma_k gamma_l) cancels the common-subordinator term
    alpha, theta = 1.2, 1.0
    beta = np.array([1.0, 0.0, -1.0])
    kappa = (2 - alpha) / (2 * theta)
    gamma = np.sqrt(1 - beta**2 * kappa)
    rho = -np.outer(beta, beta) * kappa / np.outer(gamma, gamma)
    np.fill_diagonal(rho, 1.0)
    m = MarketModel.from_epsilon_corr(alpha, theta, beta, np.full(3, 0.05), np.full(3, math.sqrt(0.08)), rho)
    np.testing.assert_allclose(m.cov, 0.08 * np.eye(3), atol=1e-15)


def test_identity_covariance_dispersion():
    s, n = 0.03, 6
    m = MarketModel.from_epsilon_corr(1.0, 1.0, np.zeros(n), np.zeros(n), np.full(n, s), np.eye(n))
    assert disp_measure(np.full(n, 1 / n), m) == pytest.approx(s / math.sqrt(n))


def test_symmetric_implied_corr_is_return_corr():
    m = random_market(4, 1.2, 1.0, seed=3).replace(beta=np.zeros(4))
    d = np.sqrt(np.diag(m.cov))
    np.testing.assert_allclose(implied_epsilon_corr(m), m.cov / np.outer(d, d), atol=1e-12)


def test_project_gaussian_examples():
    n = 4
    g = GaussianModel(np.zeros(n), np.eye(n))
    assert project_gaussian(g, np.full(n, 1 / n)) == pytest.approx((0.0, 1 / math.sqrt(n)))
    g2 = GaussianModel([0.1, 0.2], [[0.04, 0.01], [0.01, 0.09]])
    assert project_gaussian(g2, [0.0, 1.0]) == pytest.approx((0.2, 0.3))


def test_sampled_portfolio_moments_and_skew():
    m = random_market(3, 0.98, 0.23, seed=31, beta_range=(-0.6, -0.2))
    w = np.array([0.3, 0.3, 0.4])
    r = sample_market(m, 1_000_000, seed=2) @ w
    proj = project_portfolio(m, w)
    se = r.std() / math.sqrt(r.size)
    assert abs(r.mean() - proj.mu_bar) < 3 * se
    assert r.std() == pytest.approx(proj.sigma_bar, rel=5e-3)
    assert np.mean((r - r.mean()) ** 3) < 0
