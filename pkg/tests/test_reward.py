import math

import numpy as np
import pytest

from conftest import (
    gbm_call_problem,
    russian_problem,
    skew_call_problem,
    skew_nofit_problem,
    sticky_problem,
)
from stopside.catalog import call_reward, gbm, skew_bm, standard_bm
from stopside.errors import NegativeReward, ParseError
from stopside.reward import (
    Reward,
    check_rrc,
    generator_image,
    parse_reward,
)


class TestGeneratorImage:
    def test_gbm_call_vanishes_at_balance_point(self):
        # alpha (y - K) - mu y at alpha=0.1, mu=0.05, K=1, y=2 is exactly 0;
        # cross-checked against brute-force differencing below
        d = gbm(0.05, 0.3)
        rw = call_reward(d, 1.0)
        assert generator_image(d, rw, 0.1, 2.0) == pytest.approx(0.0, abs=1e-15)
        numeric = Reward(g=rw.g, rrc_point=1.0, kinks=(1.0,))
        assert generator_image(d, numeric, 0.1, 2.0) == pytest.approx(0.0,
                                                                      abs=1e-6)

    def test_skew_positive_part(self):
        p = skew_call_problem(beta=0.9, alpha=1.0)
        for y in (0.5, 1.0, 3.0):
            assert generator_image(p.diffusion, p.reward, 1.0, y) == \
                pytest.approx(1.0 * y, rel=1e-12)

    def test_russian_exponential(self):
        p = russian_problem(0.1, 0.05, 0.3)
        for y in (0.2, 1.0):
            assert generator_image(p.diffusion, p.reward, 0.1, y) == \
                pytest.approx((0.1 + 0.05) * math.exp(0.3 * y), rel=1e-12)

    def test_closed_form_matches_numeric_fallback(self):
        cases = [
            (gbm_call_problem(0.05, 0.09, 0.1, 1.0), np.linspace(1.3, 4.0, 20)),
            (sticky_problem(0.28), np.linspace(0.25, 3.0, 20)),
            (russian_problem(0.1, 0.05, 0.3), np.linspace(0.3, 2.0, 20)),
        ]
        for p, ys in cases:
            rw = p.reward
            numeric = Reward(g=rw.g, rrc_point=rw.rrc_point, kinks=rw.kinks)
            for y in ys:
                y = float(y)
                if p.diffusion.speed.atom_mass_at(y):
                    continue
                closed = generator_image(p.diffusion, rw, p.alpha, y)
                fallback = generator_image(p.diffusion, numeric, p.alpha, y)
                assert fallback == pytest.approx(closed, rel=1e-5, abs=1e-7)


class TestCheckRrc:
    def test_gbm_call_passes_when_rate_dominates(self):
        p = gbm_call_problem(0.05, 0.09, 0.1, 1.0)
        rep = check_rrc(p.diffusion, p.reward, p.alpha, 1.0)
        assert rep.integrability_ok and rep.limit_ok

    def test_gbm_call_limit_fails_otherwise(self):
        d = gbm(0.3, 0.3)
        rw = call_reward(d, 1.0)
        assert not check_rrc(d, rw, 0.1, 1.0).limit_ok
        assert not check_rrc(d, rw, 0.3, 1.0).limit_ok

    def test_bounded_reward_passes(self):
        d = standard_bm()
        rw = Reward(g=lambda x: 2.0 + math.sin(x), rrc_point=0.0)
        rep = check_rrc(d, rw, 0.5, 0.0)
        assert rep.limit_ok
        assert rep.limit_estimate <= 1e-10

    def test_paper_examples_pass_at_stated_points(self):
        cases = [
            (gbm_call_problem(0.0, 2.0, 1.0, 1.0), 1.0),
            (russian_problem(0.1, 0.05, 0.3), 0.0),
            (skew_call_problem(0.9, 1.0), 0.0),
            (skew_nofit_problem(), 0.0),
            (sticky_problem(0.28), -1.0),
        ]
        for p, x1 in cases:
            rep = check_rrc(p.diffusion, p.reward, p.alpha, x1)
            assert rep.integrability_ok, (p.reward.name, rep.details)
            assert rep.limit_ok, (p.reward.name, rep.details)


class TestParseReward:
    def test_positive_part(self):
        rw = parse_reward("pos(x-1)")
        assert rw.g(2.0) == 1.0
        assert rw.g(0.0) == 0.0

    def test_exponential(self):
        assert parse_reward("exp(0.5*x)").g(0.0) == 1.0
        assert parse_reward("exp(0.5*x)").g(2.0) == pytest.approx(math.e)

    def test_shifted_positive_part(self):
        rw = parse_reward("pos(x+1)")
        assert rw.g(-2.0) == 0.0
        assert rw.g(0.5) == 1.5

    @pytest.mark.parametrize("expr,direct", [
        ("x", lambda x: x),
        ("2.5", lambda x: 2.5),
        ("x+2", lambda x: x + 2),
        ("x*x+1", lambda x: x * x + 1),
        ("x^2+1", lambda x: x**2 + 1),
        ("(x+3)/2", lambda x: (x + 3) / 2),
        ("max(x, 0-x)", lambda x: abs(x)),
        ("pos(x)", lambda x: max(x, 0.0)),
        ("exp(x)-0", lambda x: math.exp(x)),
        ("ln(x^2+2)", lambda x: math.log(x * x + 2)),
        ("max(x, 1, 0-x)", lambda x: max(x, 1.0, -x)),
        ("2*x^2 - x + 1e1", lambda x: 2 * x * x - x + 10.0),
    ])
    def test_round_trip(self, expr, direct):
        rng = np.random.default_rng(6)
        g = parse_reward(expr, domain=(0.2, 3.0)).g
        for x in rng.uniform(0.2, 3.0, size=50):
            x = float(x)
            assert g(x) == pytest.approx(direct(x), rel=1e-12, abs=1e-12)

    def test_parse_error_position_and_expected(self):
        with pytest.raises(ParseError) as exc:
            parse_reward("pos(x")
        assert exc.value.position == 5
        assert ")" in exc.value.expected

        with pytest.raises(ParseError) as exc:
            parse_reward("x+")
        assert exc.value.position == 2

        with pytest.raises(ParseError):
            parse_reward("foo(x)")
        with pytest.raises(ParseError):
            parse_reward("max(x)")
        with pytest.raises(ParseError):
            parse_reward("x^x")
        with pytest.raises(ParseError):
            parse_reward("x 1")

    def test_negative_reward_rejected(self):
        with pytest.raises(NegativeReward):
            parse_reward("x-10")


class TestRewardReflect:
    def test_round_trip(self):
        d = skew_bm(0.4)
        rw = call_reward(d, 0.5)
        back = rw.reflect().reflect()
        for x in (-1.0, 0.0, 0.5, 2.0):
            assert back.g(x) == rw.g(x)
        assert back.rrc_point == rw.rrc_point
        assert back.kinks == rw.kinks

    def test_image_mirrors(self):
        d = standard_bm()
        rw = call_reward(d, 0.0)
        refl = rw.reflect()
        assert refl.g(-2.0) == 2.0
        assert refl.generator_image_closed_form(0.5, -2.0) == \
            rw.generator_image_closed_form(0.5, 2.0)
