import math

import pytest

from stopside import Problem
from stopside.catalog import (
    call_reward,
    exponential_reward,
    gbm,
    reflected_bm_drift,
    shifted_call_reward,
    skew_bm,
    standard_bm,
    sticky_bm,
)

STICKY_ALPHA_1 = (math.sqrt(5.0) - 1.0) ** 2 / 8.0
STICKY_ALPHA_2 = 0.5


def bm_call_problem(alpha=0.5):
    d = standard_bm()
    return Problem(d, call_reward(d, 0.0), alpha)


def gbm_call_problem(mu, sigma2, alpha, strike):
    d = gbm(mu, math.sqrt(sigma2))
    return Problem(d, call_reward(d, strike), alpha)


def skew_call_problem(beta=0.9, alpha=1.0):
    d = skew_bm(beta)
    return Problem(d, call_reward(d, 0.0), alpha)


def skew_nofit_problem():
    d = skew_bm(1.0 / 3.0)
    return Problem(d, shifted_call_reward(d, 1.0), 0.125)


def sticky_problem(alpha, theta=1.0):
    d = sticky_bm(theta)
    return Problem(d, shifted_call_reward(d, 1.0), alpha)


def russian_problem(alpha, r, sigma):
    d = reflected_bm_drift(r, sigma)
    return Problem(d, exponential_reward(d, sigma), alpha)


def russian_threshold(alpha, r, sigma):
    """Closed-form optimal level for the running-maximum payoff problem."""
    delta = (r + sigma**2 / 2.0) / sigma
    gam = math.sqrt(2.0 * alpha + delta**2)
    return (1.0 / (2.0 * gam)) * math.log(
        ((gam + delta) / (gam - delta))
        * ((gam - delta + sigma) / (gam + delta - sigma)))


@pytest.fixture(scope="session")
def all_catalog_diffusions():
    return [
        standard_bm(),
        gbm(0.0, math.sqrt(2.0)),
        gbm(0.05, 0.3),
        reflected_bm_drift(0.05, 0.3),
        skew_bm(0.9),
        skew_bm(1.0 / 3.0),
        sticky_bm(1.0),
    ]
