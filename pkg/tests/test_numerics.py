import math

import numpy as np
import pytest

from stopside.diffusion import SpeedMeasure
from stopside.errors import DivergentIntegral, NoRoot
from stopside.numerics import (
    QuadratureOptions,
    RegionSpec,
    find_largest_root,
    integrate_against_measure,
    one_sided_derivative,
)

STICKY_SPEED = SpeedMeasure(density=lambda x: 2.0, atoms=((0.0, 2.0),))
LEBESGUE2 = SpeedMeasure(density=lambda x: 2.0)


class TestRegionSpec:
    def test_empty_region_rejected(self):
        with pytest.raises(ValueError):
            RegionSpec(1.0, 1.0)

    def test_contains_honors_inclusion_flags(self):
        r = RegionSpec(0.0, 1.0, include_lower=False, include_upper=True)
        assert not r.contains(0.0)
        assert r.contains(1.0)
        assert r.contains(0.5)
        assert not r.contains(2.0)


class TestIntegrateAgainstMeasure:
    def test_sticky_speed_over_closed_interval(self):
        # 2 * Lebesgue([-1,1]) + atom mass: 2*2 + 2 = 6, by hand
        val = integrate_against_measure(lambda y: 1.0, STICKY_SPEED,
                                        RegionSpec(-1.0, 1.0))
        assert val == pytest.approx(6.0, rel=1e-12)

    def test_open_endpoint_excludes_atom(self):
        val = integrate_against_measure(lambda y: 1.0, STICKY_SPEED,
                                        RegionSpec(0.0, 1.0, include_lower=False))
        assert val == pytest.approx(2.0, rel=1e-12)

    def test_improper_upper_endpoint(self):
        # integral of y e^-y over (1, inf) is 2/e; doubled by the density
        val = integrate_against_measure(lambda y: math.exp(-y) * y, LEBESGUE2,
                                        RegionSpec(1.0, math.inf))
        assert val == pytest.approx(4.0 / math.e, rel=1e-9)

    def test_power_law_tail(self):
        # slow decay exercises the geometric remainder extrapolation
        val = integrate_against_measure(lambda y: y**-2.5, LEBESGUE2,
                                        RegionSpec(1.0, math.inf))
        assert val == pytest.approx(2.0 / 1.5, rel=1e-8)

    def test_divergent_tail_detected(self):
        with pytest.raises(DivergentIntegral):
            integrate_against_measure(lambda y: 1.0, LEBESGUE2,
                                      RegionSpec(0.0, math.inf))

    def test_additivity_random_piecewise(self):
        rng = np.random.default_rng(42)
        opts = QuadratureOptions()
        for _ in range(5):
            a, b, c = np.sort(rng.uniform(-2.0, 2.0, size=3))
            if b - a < 1e-3 or c - b < 1e-3:
                continue
            kink = float(rng.uniform(a, c))
            coef = rng.uniform(-1.0, 1.0, size=3)

            def f(y):
                base = coef[0] * y * y + coef[1] * math.sin(3.0 * y)
                return base + coef[2] * abs(y - kink)

            whole = integrate_against_measure(f, STICKY_SPEED, RegionSpec(a, c, False, True), opts)
            parts = (integrate_against_measure(f, STICKY_SPEED, RegionSpec(a, b, False, True), opts)
                     + integrate_against_measure(f, STICKY_SPEED, RegionSpec(b, c, False, True), opts))
            assert whole == pytest.approx(parts, rel=2.0 * opts.rel_tol, abs=1e-10)

    def test_atom_change_is_exact(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            point = float(rng.uniform(-0.5, 0.5))
            mass = float(rng.uniform(0.1, 2.0))
            with_atom = SpeedMeasure(density=lambda x: 1.0 + x * x,
                                     atoms=((point, mass),))
            without = SpeedMeasure(density=lambda x: 1.0 + x * x)
            f = lambda y: math.cos(y) + 2.0
            inside = (integrate_against_measure(f, with_atom, RegionSpec(-1.0, 1.0))
                      - integrate_against_measure(f, without, RegionSpec(-1.0, 1.0)))
            assert inside == pytest.approx(f(point) * mass, rel=1e-12)
            excluded = (integrate_against_measure(
                f, with_atom, RegionSpec(point, 1.0, include_lower=False))
                - integrate_against_measure(
                    f, without, RegionSpec(point, 1.0, include_lower=False)))
            assert excluded == pytest.approx(0.0, abs=1e-12)


class TestFindLargestRoot:
    def test_picks_larger_of_two_roots(self):
        x = find_largest_root(lambda x: (x - 1.0) * (x - 3.0), 0.0, 10.0, 1e-10)
        assert x == pytest.approx(3.0, abs=1e-9)

    def test_sqrt_two(self):
        x = find_largest_root(lambda x: x * x - 2.0, 0.0, 10.0, 1e-10)
        assert x == pytest.approx(math.sqrt(2.0), abs=1e-9)

    def test_residual_value_small_at_root(self):
        h = lambda x: math.sin(x)
        x = find_largest_root(h, 0.5, 7.0, 1e-12)
        assert abs(h(x)) <= 1e-10

    def test_tangential_root(self):
        x = find_largest_root(lambda x: (x - 1.0) ** 2, 0.0, 4.0, 1e-7)
        assert x == pytest.approx(1.0, abs=1e-3)
        assert abs((x - 1.0) ** 2) <= 1e-6

    def test_no_root_raises(self):
        with pytest.raises(NoRoot):
            find_largest_root(lambda x: 1.0 + x * x, -1.0, 1.0, 1e-10,
                              max_refinements=2)

    def test_root_at_grid_endpoint(self):
        x = find_largest_root(lambda x: x - 2.0, 0.0, 2.0, 1e-10)
        assert x == pytest.approx(2.0, abs=1e-9)


class TestOneSidedDerivative:
    def test_square_right(self):
        d = one_sided_derivative(lambda x: x * x, lambda x: x, 1.0, "right")
        assert d == pytest.approx(2.0, rel=1e-7)

    def test_absolute_value_left(self):
        d = one_sided_derivative(abs, lambda x: x, 0.0, "left")
        assert d == pytest.approx(-1.0, rel=1e-9)

    def test_polynomials_and_exponentials(self):
        rng = np.random.default_rng(3)
        for _ in range(8):
            x = float(rng.uniform(-1.5, 1.5))
            c = float(rng.uniform(0.3, 2.0))
            d = one_sided_derivative(lambda t: math.exp(c * t), lambda t: t,
                                     x, "right")
            assert d == pytest.approx(c * math.exp(c * x), rel=1e-7)
            d2 = one_sided_derivative(lambda t: t**3 - 2.0 * t, lambda t: t,
                                      x, "left")
            assert d2 == pytest.approx(3.0 * x * x - 2.0, rel=1e-7, abs=1e-8)

    def test_nonidentity_coordinate(self):
        # df/dcoord at x where coord = x^3: f'(x)/coord'(x)
        d = one_sided_derivative(lambda t: math.sin(t), lambda t: t**3,
                                 1.2, "right")
        assert d == pytest.approx(math.cos(1.2) / (3 * 1.2**2), rel=1e-6)

    def test_side_argument_validated(self):
        with pytest.raises(ValueError):
            one_sided_derivative(abs, lambda x: x, 0.0, "up")
