from __future__ import annotations

import math
import time
from contextlib import contextmanager

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ntsmarket.market import MarketModel, random_market
from ntsmarket.nts_dist import StdNtsParams

settings.register_profile(
    "default", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

# (alpha, theta, beta) sets used across tests; all satisfy the admissibility bound
PARAM_SETS = [
    (0.98, 0.23, -0.1),
    (0.5, 1.0, -0.3),
    (1.0, 1.0, 0.0),
    (1.5, 1.0, 0.3),
    (1.2, 1.0, -0.5),
    (0.5, 0.5, 0.3),
]


@pytest.fixture(params=PARAM_SETS, ids=lambda t: "a{}-t{}-b{}".format(*t))
def params(request) -> StdNtsParams:
    return StdNtsParams(*request.param)


@pytest.fixture
def example_market() -> MarketModel:
    """Three assets with beta (1, 0, -1), equal mean and variance, uncorrelated returns."""
    s = math.sqrt(0.08)
    return MarketModel(
        alpha=1.2,
        theta=1.0,
        beta=np.array([1.0, 0.0, -1.0]),
        mu=np.full(3, 0.05),
        sigma=np.full(3, s),
        cov=np.eye(3) * 0.08,
    )


@pytest.fixture
def market5() -> MarketModel:
    return random_market(5, 0.98, 0.23, seed=11)



# ---------------------------------------------------------------------------
# acceptance verdicts, one line each, printed in the terminal summary

_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def criterion(request):
    """Context manager recording a PASS/FAIL line for an acceptance criterion.

    The body receives a dict; whatever it stores under ``"detail"`` is appended
    to the verdict line.
    """
    verdicts = request.config.stash[_VERDICTS]

    @contextmanager
    def run(number: int, title: str):
        info: dict = {}
        start = time.perf_counter()
        status = "FAIL"
        try:
            yield info
            status = "PASS"
        finally:
            took = time.perf_counter() - start
            detail = info.get("detail", "")
            line = f"criterion {number:>2} {status}  {title} ({took:.1f} s){': ' + detail if detail else ''}"
            verdicts.append((number, line))
            print(line)

    return run


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    verdicts = config.stash.get(_VERDICTS, [])
    if not verdicts:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(verdicts):
        terminalreporter.write_line(line)
