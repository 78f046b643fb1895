import math

import numpy as np
import pytest

from stopside.catalog import (
    CATALOG,
    build_reward,
    call_reward,
    exponential_reward,
    expression_reward,
    gbm,
    gbm_exponents,
    reflected_bm_drift,
    shifted_call_reward,
    skew_bm,
    standard_bm,
    sticky_bm,
)
from stopside.diffusion import hitting_laplace
from stopside.errors import ParameterOutOfRange

ALPHAS = (0.1, 0.5, 1.0, 2.0)


def _window(d):
    lo = d.interval.left if math.isfinite(d.interval.left) else -2.0
    hi = d.interval.right if math.isfinite(d.interval.right) else 2.0
    pad = 0.02 * (hi - lo)
    return lo + pad, hi - pad


def _check_pair_invariants(d, alpha):
    pair = d.fundamental_pair_for(alpha)
    lo, hi = _window(d)
    xs = np.linspace(lo, hi, 41)
    psi_vals = [pair.psi(float(x)) for x in xs]
    phi_vals = [pair.phi(float(x)) for x in xs]
    assert all(v > 0 for v in psi_vals + phi_vals)
    assert all(a < b for a, b in zip(psi_vals, psi_vals[1:]))
    assert all(a > b for a, b in zip(phi_vals, phi_vals[1:]))
    for x in xs[::5]:
        x = float(x)
        assert pair.psi_ds_left(x) <= pair.psi_ds_right(x) + 1e-12
        assert pair.phi_ds_left(x) <= pair.phi_ds_right(x) + 1e-12
        assert pair.phi_ds_right(x) < 0.0 < pair.psi_ds_left(x)
    assert pair.wronskian > 0


class TestStandardBm:
    def test_psi_at_one(self):
        pair = standard_bm().fundamental_pair_for(0.5)
        assert pair.psi(1.0) == pytest.approx(math.e, rel=1e-14)

    def test_wronskian(self):
        assert standard_bm().fundamental_pair_for(0.5).wronskian == pytest.approx(2.0)

    def test_hitting_transform(self):
        assert hitting_laplace(standard_bm(), 0.5, 0.0, 1.0) == pytest.approx(
            math.exp(-1.0))


class TestGbm:
    def test_golden_ratio_exponent(self):
        g1, _ = gbm_exponents(0.0, math.sqrt(2.0), 1.0)
        assert g1 == pytest.approx((1.0 + math.sqrt(5.0)) / 2.0, rel=1e-12)

    def test_exponent_ordering_when_rate_dominates_drift(self):
        rng = np.random.default_rng(10)
        for _ in range(40):
            mu = float(rng.uniform(-1.0, 1.0))
            sigma = float(rng.uniform(0.1, 2.0))
            alpha = max(mu, 0.0) + float(rng.uniform(0.01, 1.0))
            g1, g2 = gbm_exponents(mu, sigma, alpha)
            assert g2 < 0.0 < 1.0 < g1

    def test_monotone_solutions(self):
        _check_pair_invariants(gbm(0.05, 0.3), 0.1)

    def test_sigma_validated(self):
        with pytest.raises(ParameterOutOfRange):
            gbm(0.0, 0.0)


class TestReflectedBm:
    def test_zero_slope_at_barrier(self):
        d = reflected_bm_drift(0.05, 0.3)
        pair = d.fundamental_pair_for(0.1)
        h = 1e-7
        slope = (pair.psi(h) - pair.psi(0.0)) / h
        assert abs(slope) <= 1e-6

    def test_defining_equation(self):
        from stopside.diffusion import apply_generator
        d = reflected_bm_drift(0.1, 0.5)
        pair = d.fundamental_pair_for(0.5)
        for x in (0.3, 0.9, 1.7):
            assert apply_generator(d, pair.psi, x) == pytest.approx(
                0.5 * pair.psi(x), rel=1e-6)

    def test_parameters_validated(self):
        with pytest.raises(ParameterOutOfRange):
            reflected_bm_drift(0.0, 0.3)
        with pytest.raises(ParameterOutOfRange):
            reflected_bm_drift(0.1, -1.0)


class TestSkewBm:
    def test_half_reduces_to_standard(self):
        pair = skew_bm(0.5).fundamental_pair_for(0.7)
        ref = standard_bm().fundamental_pair_for(0.7)
        for x in (-1.5, -0.2, 0.0, 0.3, 2.0):
            assert pair.psi(x) == pytest.approx(ref.psi(x), rel=1e-12)

    def test_gluing_condition(self):
        # beta * psi'(0+) = (1 - beta) * psi'(0-), reconstructing the
        # x-derivatives from the s-derivatives (s' = 1/beta right of 0)
        for beta in (0.2, 1.0 / 3.0, 0.9):
            pair = skew_bm(beta).fundamental_pair_for(0.125)
            dx_right = pair.psi_ds_right(0.0) * (1.0 / beta)
            dx_left = pair.psi_ds_left(0.0) * (1.0 / (1.0 - beta))
            assert beta * dx_right == pytest.approx((1.0 - beta) * dx_left,
                                                    rel=1e-10)

    def test_value_at_origin(self):
        pair = skew_bm(1.0 / 3.0).fundamental_pair_for(0.125)
        assert pair.psi(0.0) == 1.0
        assert pair.phi(0.0) == 1.0

    def test_beta_validated(self):
        for bad in (0.0, 1.0, -0.3, 2.0):
            with pytest.raises(ParameterOutOfRange):
                skew_bm(bad)


class TestStickyBm:
    def test_gluing_residual(self):
        for alpha in (0.28, 0.5, 2.0):
            pair = sticky_bm(1.0).fundamental_pair_for(alpha)
            jump = pair.psi_ds_right(0.0) - pair.psi_ds_left(0.0)
            assert abs(2.0 * alpha * pair.psi(0.0) - jump) <= 1e-10

    def test_continuity_at_origin(self):
        pair = sticky_bm(1.0).fundamental_pair_for(0.7)
        eps = 1e-12
        assert pair.psi(eps) == pytest.approx(pair.psi(-eps), rel=1e-9)

    def test_half_rate_coefficients(self):
        # alpha = 1/2 makes c = 1; continuity and the atom gluing give the
        # 2x2 system with solution A = 3/2, B = -1/2
        pair = sticky_bm(1.0).fundamental_pair_for(0.5)
        x = 0.8
        val = 1.5 * math.exp(x) - 0.5 * math.exp(-x)
        assert pair.psi(x) == pytest.approx(val, rel=1e-12)

    def test_theta_validated(self):
        with pytest.raises(ParameterOutOfRange):
            sticky_bm(0.0)


class TestCatalogRegistry:
    def test_five_entries(self):
        assert len(CATALOG) == 5

    def test_pair_invariants_all_entries(self, all_catalog_diffusions):
        for d in all_catalog_diffusions:
            for alpha in ALPHAS:
                _check_pair_invariants(d, alpha)

    def test_construct_rejects_unknown_and_missing(self):
        with pytest.raises(ParameterOutOfRange):
            CATALOG["gbm"].construct(mu=0.0, sigma=1.0, nope=2.0)
        with pytest.raises(ParameterOutOfRange):
            CATALOG["gbm"].construct(mu=0.0)

    def test_sticky_default_theta(self):
        d = CATALOG["sticky_bm"].construct()
        assert d.speed.atoms == ((0.0, 2.0),)


class TestRewardBuilders:
    def test_call_image_on_gbm(self):
        d = gbm(0.05, 0.3)
        rw = call_reward(d, 1.0)
        # alpha (y - K) - mu y at alpha=0.1, mu=0.05, K=1, y=2 vanishes
        assert rw.generator_image_closed_form(0.1, 2.0) == pytest.approx(0.0,
                                                                         abs=1e-15)

    def test_russian_image_positive_multiple(self):
        d = reflected_bm_drift(0.05, 0.3)
        rw = exponential_reward(d, 0.3)
        for y in (0.0, 0.5, 2.0):
            assert rw.generator_image_closed_form(0.1, y) == pytest.approx(
                (0.1 + 0.05) * math.exp(0.3 * y), rel=1e-12)

    def test_skew_rrc_at_glue_point(self):
        d = skew_bm(1.0 / 3.0)
        rw = shifted_call_reward(d, 1.0)
        assert rw.rrc_point == 0.0

    def test_sticky_rrc_at_support_edge(self):
        d = sticky_bm(1.0)
        rw = shifted_call_reward(d, 1.0)
        assert rw.rrc_point == -1.0

    def test_expression_reward_support_edge(self):
        d = standard_bm()
        rw = expression_reward(d, "pos(x-1)")
        assert rw.g(2.0) == 1.0
        assert rw.g(0.0) == 0.0
        assert rw.rrc_point == pytest.approx(1.0, abs=1e-6)

    def test_build_reward_dispatch(self):
        d = standard_bm()
        assert build_reward(d, {"kind": "call", "strike": 2.0}).g(3.0) == 1.0
        assert build_reward(d, {"kind": "shifted_call", "shift": 1.0}).g(0.0) == 1.0
        assert build_reward(d, {"kind": "exponential", "rate": 0.5}).g(0.0) == 1.0
        assert build_reward(d, {"kind": "expression", "text": "exp(0.5*x)"}).g(0.0) == 1.0
        with pytest.raises(ParameterOutOfRange):
            build_reward(d, {"kind": "nope"})
