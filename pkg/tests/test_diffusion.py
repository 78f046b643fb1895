import math

import numpy as np
import pytest

from stopside.catalog import skew_bm, standard_bm, sticky_bm
from stopside.diffusion import (
    StateInterval,
    apply_generator,
    green,
    hitting_laplace,
    reflect,
    resolvent,
)
from stopside.errors import OutOfDomain


def _interior_samples(d, n=20, seed=0):
    rng = np.random.default_rng(seed)
    lo = d.interval.left if math.isfinite(d.interval.left) else -2.0
    hi = d.interval.right if math.isfinite(d.interval.right) else 2.0
    pad = 0.05 * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, size=n)


class TestStateInterval:
    def test_included_boundary_must_reflect(self):
        with pytest.raises(ValueError):
            StateInterval(0.0, 1.0, left_in_state=True, left_behavior="natural")

    def test_excluded_boundary_must_be_natural(self):
        with pytest.raises(ValueError):
            StateInterval(0.0, 1.0, right_behavior="reflecting")

    def test_contains(self):
        iv = StateInterval(0.0, math.inf, left_in_state=True,
                           left_behavior="reflecting")
        assert iv.contains(0.0)
        assert iv.contains(5.0)
        assert not iv.contains(-1.0)
        assert not iv.contains(math.inf)


class TestGreen:
    def test_value_at_origin(self):
        # psi = e^x, phi = e^-x, w = 2 at alpha = 1/2; cross-checked against
        # the closed-form resolvent density e^{-sqrt(2a)|x-y|}/(2 sqrt(2a))
        d = standard_bm()
        assert green(d, 0.5, 0.0, 0.0) == pytest.approx(0.5, rel=1e-12)

    def test_off_diagonal(self):
        d = standard_bm()
        assert green(d, 0.5, 0.0, 1.0) == pytest.approx(0.5 * math.exp(-1.0),
                                                        rel=1e-12)

    def test_closed_form_resolvent_density(self):
        d = standard_bm()
        rng = np.random.default_rng(1)
        for alpha in (0.25, 1.0):
            c = math.sqrt(2.0 * alpha)
            for _ in range(10):
                x, y = rng.uniform(-2, 2, size=2)
                assert green(d, alpha, x, y) == pytest.approx(
                    math.exp(-c * abs(x - y)) / (2.0 * c), rel=1e-12)

    def test_symmetry(self, all_catalog_diffusions):
        rng = np.random.default_rng(11)
        for d in all_catalog_diffusions:
            xs = _interior_samples(d, 10, seed=5)
            ys = rng.permutation(xs)
            for x, y in zip(xs, ys):
                gxy = green(d, 0.7, float(x), float(y))
                gyx = green(d, 0.7, float(y), float(x))
                assert abs(gxy - gyx) <= 1e-12 * gxy

    def test_out_of_domain(self):
        from stopside.catalog import gbm
        d = gbm(0.0, 1.0)
        with pytest.raises(OutOfDomain):
            green(d, 0.5, -1.0, 1.0)


class TestHittingLaplace:
    def test_at_level(self):
        d = standard_bm()
        assert hitting_laplace(d, 0.5, 0.7, 0.7) == 1.0

    def test_bm_unit_level(self):
        d = standard_bm()
        assert hitting_laplace(d, 0.5, 0.0, 1.0) == pytest.approx(
            math.exp(-1.0), rel=1e-12)

    def test_monotone_in_start(self, all_catalog_diffusions):
        for d in all_catalog_diffusions:
            xs = np.sort(_interior_samples(d, 12, seed=2))
            z = float(xs[len(xs) // 2])
            vals = [hitting_laplace(d, 0.8, float(x), z) for x in xs]
            below = [v for x, v in zip(xs, vals) if x <= z]
            above = [v for x, v in zip(xs, vals) if x >= z]
            assert all(b1 <= b2 + 1e-12 for b1, b2 in zip(below, below[1:]))
            assert all(a1 >= a2 - 1e-12 for a1, a2 in zip(above, above[1:]))
            assert all(0.0 < v <= 1.0 for v in vals)


class TestApplyGenerator:
    def test_bm_square(self):
        d = standard_bm()
        for x in (-1.3, 0.0, 0.4, 2.0):
            assert apply_generator(d, lambda t: t * t, x) == pytest.approx(
                1.0, abs=1e-6)

    def test_defining_equation_at_origin(self):
        d = standard_bm()
        pair = d.fundamental_pair_for(0.5)
        val = apply_generator(d, pair.psi, 0.0)
        assert val == pytest.approx(0.5 * pair.psi(0.0), rel=1e-6)

    def test_sticky_kink_uses_atom_mass(self):
        # |x| has derivative jump 2 at the atom of mass 2: L|x|(0) = 1
        d = sticky_bm(1.0)
        assert apply_generator(d, abs, 0.0) == pytest.approx(1.0, rel=1e-7)

    def test_alpha_harmonicity(self, all_catalog_diffusions):
        for d in all_catalog_diffusions:
            for alpha in (0.1, 0.5, 2.0):
                pair = d.fundamental_pair_for(alpha)
                for x in _interior_samples(d, 6, seed=4):
                    x = float(x)
                    if d.speed.atom_mass_at(x):
                        continue
                    lp = apply_generator(d, pair.psi, x)
                    assert lp == pytest.approx(alpha * pair.psi(x), rel=1e-6)
                    lq = apply_generator(d, pair.phi, x)
                    assert lq == pytest.approx(alpha * pair.phi(x), rel=1e-6)

    def test_reflecting_boundary_limit(self):
        from stopside.catalog import reflected_bm_drift
        d = reflected_bm_drift(0.05, 0.3)
        pair = d.fundamental_pair_for(0.1)
        val = apply_generator(d, pair.psi, 0.0)
        assert val == pytest.approx(0.1 * pair.psi(0.0), rel=1e-5)


class TestWronskian:
    def test_constant_across_interior(self, all_catalog_diffusions):
        for d in all_catalog_diffusions:
            for alpha in (0.1, 0.5, 1.0, 2.0):
                pair = d.fundamental_pair_for(alpha)
                vals = []
                for x in _interior_samples(d, 20, seed=9):
                    x = float(x)
                    w = (pair.psi_ds_right(x) * pair.phi(x)
                         - pair.psi(x) * pair.phi_ds_right(x))
                    vals.append(w)
                spread = (max(vals) - min(vals)) / pair.wronskian
                assert spread <= 1e-8
                assert pair.wronskian == pytest.approx(vals[0], rel=1e-8)


class TestResolvent:
    def test_constant_gives_inverse_rate(self, all_catalog_diffusions):
        # strongest end-to-end consistency check of s, m, psi, phi and w
        for d in all_catalog_diffusions:
            for alpha in (0.5, 1.0):
                for x in _interior_samples(d, 4, seed=13):
                    val = resolvent(d, alpha, lambda y: 1.0, float(x))
                    assert abs(val - 1.0 / alpha) <= 1e-6 / alpha

    def test_zero(self):
        d = standard_bm()
        assert resolvent(d, 0.5, lambda y: 0.0, 0.3) == 0.0

    def test_inversion_identity(self):
        # R_alpha(alpha - L) f = f for f in the generator's domain
        d = standard_bm()
        alpha = 0.5
        f = lambda x: math.exp(-x * x)
        u = lambda y: alpha * f(y) - 0.5 * (4.0 * y * y - 2.0) * f(y)
        for x in (-0.7, 0.0, 1.1):
            assert resolvent(d, alpha, u, x) == pytest.approx(f(x), abs=1e-6)


class TestAtomGluing:
    def test_sticky_derivative_jump(self):
        for theta in (1.0, 0.35):
            d = sticky_bm(theta)
            for alpha in (0.28, 1.0):
                pair = d.fundamental_pair_for(alpha)
                jump = pair.psi_ds_right(0.0) - pair.psi_ds_left(0.0)
                expected = 2.0 * theta * alpha * pair.psi(0.0)
                assert jump == pytest.approx(expected, rel=1e-8)


class TestReflect:
    def test_involution(self):
        d = skew_bm(0.3)
        dd = reflect(reflect(d))
        pair = d.fundamental_pair_for(0.8)
        pair2 = dd.fundamental_pair_for(0.8)
        for x in (-1.1, -0.2, 0.0, 0.5, 2.0):
            assert pair2.psi(x) == pytest.approx(pair.psi(x), rel=1e-12)
            assert pair2.phi(x) == pytest.approx(pair.phi(x), rel=1e-12)
            assert dd.speed.density(x) == pytest.approx(d.speed.density(x))
            assert dd.scale.value(x) == pytest.approx(d.scale.value(x))

    def test_standard_bm_symmetric(self):
        d = standard_bm()
        r = reflect(d)
        pair = d.fundamental_pair_for(0.5)
        rpair = r.fundamental_pair_for(0.5)
        for x in (-1.0, 0.0, 0.7):
            assert rpair.psi(x) == pytest.approx(pair.psi(x), rel=1e-12)
        assert rpair.wronskian == pytest.approx(pair.wronskian, rel=1e-10)

    def test_skew_maps_to_complementary_parameter(self):
        beta = 0.3
        r = reflect(skew_bm(beta))
        direct = skew_bm(1.0 - beta)
        rp = r.fundamental_pair_for(0.6)
        dp = direct.fundamental_pair_for(0.6)
        for x in (-0.8, -0.1, 0.0, 0.4, 1.5):
            assert rp.psi(x) == pytest.approx(dp.psi(x), rel=1e-12)
        assert rp.wronskian == pytest.approx(dp.wronskian, rel=1e-10)

    def test_interval_and_atoms_mirrored(self):
        from stopside.catalog import reflected_bm_drift
        r = reflect(reflected_bm_drift(0.05, 0.3))
        assert r.interval.right == 0.0
        assert r.interval.right_in_state
        assert r.interval.right_behavior == "reflecting"
        rs = reflect(sticky_bm(2.0))
        assert rs.speed.atoms == ((0.0, 4.0),)
