"""Closed-form diffusion constructors and matching reward builders.

Five stock models: standard Brownian motion, geometric Brownian motion,
Brownian motion with negative drift reflected at zero, skew Brownian motion
and sticky Brownian motion.  Each ships its scale, speed and fundamental
solutions in closed form (no ODE solving anywhere), plus a Monte Carlo
stepper tag for the oracle module.

The reward builders return payoffs with generator images in closed form for
the model they are paired with; everything else falls back to numeric
differencing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

from .diffusion import (
    NATURAL,
    REFLECTING,
    Diffusion,
    ScaleFunction,
    SpeedMeasure,
    StateInterval,
)
from .errors import ParameterOutOfRange
from .reward import Reward, parse_reward

INF = math.inf


def standard_bm() -> Diffusion:
    """Standard Brownian motion on the whole line: s(x) = x, m(dx) = 2 dx."""
    interval = StateInterval(-INF, INF)
    scale = ScaleFunction(value=lambda x: x, derivative=lambda x: 1.0)
    speed = SpeedMeasure(density=lambda x: 2.0)

    def factory(alpha: float) -> dict:
        c = math.sqrt(2.0 * alpha)
        return {
            "psi": lambda x: math.exp(c * x),
            "phi": lambda x: math.exp(-c * x),
            "psi_ds_right": lambda x: c * math.exp(c * x),
            "psi_ds_left": lambda x: c * math.exp(c * x),
            "phi_ds_right": lambda x: -c * math.exp(-c * x),
            "phi_ds_left": lambda x: -c * math.exp(-c * x),
        }

    return Diffusion(interval, scale, speed, factory, name="standard_bm",
                     stepper={"kind": "bm"})


def gbm(mu: float, sigma: float) -> Diffusion:
    """Geometric Brownian motion on (0, inf) with generator
    (sigma^2/2) x^2 f'' + mu x f'."""
    if not sigma > 0:
        raise ParameterOutOfRange(f"sigma must be positive, got {sigma}")
    nu = 2.0 * mu / sigma**2
    interval = StateInterval(0.0, INF)
    if abs(1.0 - nu) < 1e-14:
        s_val = lambda x: math.log(x)
    else:
        s_val = lambda x: (x ** (1.0 - nu) - 1.0) / (1.0 - nu)
    scale = ScaleFunction(value=s_val, derivative=lambda x: x ** (-nu))
    speed = SpeedMeasure(density=lambda x: (2.0 / sigma**2) * x ** (nu - 2.0))

    def factory(alpha: float) -> dict:
        base = 0.5 - mu / sigma**2
        disc = math.sqrt(base**2 + 2.0 * alpha / sigma**2)
        g1, g2 = base + disc, base - disc
        return {
            "psi": lambda x: x**g1,
            "phi": lambda x: x**g2,
            "psi_ds_right": lambda x: g1 * x ** (g1 - 1.0 + nu),
            "psi_ds_left": lambda x: g1 * x ** (g1 - 1.0 + nu),
            "phi_ds_right": lambda x: g2 * x ** (g2 - 1.0 + nu),
            "phi_ds_left": lambda x: g2 * x ** (g2 - 1.0 + nu),
        }

    return Diffusion(interval, scale, speed, factory, name="gbm",
                     stepper={"kind": "gbm", "mu": mu, "sigma": sigma})


def gbm_exponents(mu: float, sigma: float, alpha: float) -> tuple[float, float]:
    """Roots (increasing, decreasing) of (sigma^2/2) g(g-1) + mu g - alpha = 0."""
    base = 0.5 - mu / sigma**2
    disc = math.sqrt(base**2 + 2.0 * alpha / sigma**2)
    return base + disc, base - disc


def reflected_bm_drift(r: float, sigma: float) -> Diffusion:
    """Unit-volatility Brownian motion with drift -delta, delta =
    (r + sigma^2/2)/sigma, reflected at 0 (the Russian-option driver)."""
    if not r > 0:
        raise ParameterOutOfRange(f"r must be positive, got {r}")
    if not sigma > 0:
        raise ParameterOutOfRange(f"sigma must be positive, got {sigma}")
    delta = (r + sigma**2 / 2.0) / sigma
    interval = StateInterval(0.0, INF, left_in_state=True,
                             left_behavior=REFLECTING, right_behavior=NATURAL)
    scale = ScaleFunction(
        value=lambda x: (math.exp(2.0 * delta * x) - 1.0) / (2.0 * delta),
        derivative=lambda x: math.exp(2.0 * delta * x),
    )
    speed = SpeedMeasure(density=lambda x: 2.0 * math.exp(-2.0 * delta * x))

    def factory(alpha: float) -> dict:
        gam = math.sqrt(2.0 * alpha + delta**2)

        def psi(x):
            return ((gam - delta) * math.exp((gam + delta) * x)
                    + (gam + delta) * math.exp(-(gam - delta) * x)) / (2.0 * gam)

        def psi_prime(x):
            return ((gam**2 - delta**2) / (2.0 * gam)) * (
                math.exp((gam + delta) * x) - math.exp(-(gam - delta) * x))

        def phi(x):
            return math.exp(-(gam - delta) * x)

        def phi_prime(x):
            return -(gam - delta) * math.exp(-(gam - delta) * x)

        sp = scale.derivative
        return {
            "psi": psi,
            "phi": phi,
            "psi_ds_right": lambda x: psi_prime(x) / sp(x),
            "psi_ds_left": lambda x: psi_prime(x) / sp(x),
            "phi_ds_right": lambda x: phi_prime(x) / sp(x),
            "phi_ds_left": lambda x: phi_prime(x) / sp(x),
        }

    return Diffusion(interval, scale, speed, factory, name="reflected_bm_drift",
                     stepper={"kind": "reflected_bm", "delta": delta,
                              "r": r, "sigma": sigma})


def skew_bm(beta: float) -> Diffusion:
    """Skew Brownian motion: Brownian away from 0, crossing upward with
    probability beta.  Functions in its generator domain glue as
    beta f'(0+) = (1 - beta) f'(0-)."""
    if not 0.0 < beta < 1.0:
        raise ParameterOutOfRange(f"beta must lie in (0, 1), got {beta}")
    interval = StateInterval(-INF, INF)
    scale = ScaleFunction(
        value=lambda x: x / beta if x >= 0 else x / (1.0 - beta),
        derivative=lambda x: 1.0 / beta if x >= 0 else 1.0 / (1.0 - beta),
        derivative_left=lambda x: 1.0 / beta if x > 0 else 1.0 / (1.0 - beta),
    )
    speed = SpeedMeasure(
        density=lambda x: 2.0 * beta if x >= 0 else 2.0 * (1.0 - beta),
        density_breakpoints=(0.0,),
    )

    def factory(alpha: float) -> dict:
        c = math.sqrt(2.0 * alpha)
        a_plus = (1.0 - 2.0 * beta) / beta           # sinh coefficient, x > 0
        a_minus = (1.0 - 2.0 * beta) / (1.0 - beta)  # sinh coefficient, x < 0

        def psi(x):
            if x <= 0:
                return math.exp(c * x)
            return a_plus * math.sinh(c * x) + math.exp(c * x)

        def psi_prime(x, side):
            if x < 0 or (x == 0 and side == "left"):
                return c * math.exp(c * x)
            return a_plus * c * math.cosh(c * x) + c * math.exp(c * x)

        def phi(x):
            if x >= 0:
                return math.exp(-c * x)
            return a_minus * math.sinh(c * x) + math.exp(-c * x)

        def phi_prime(x, side):
            if x > 0 or (x == 0 and side == "right"):
                return -c * math.exp(-c * x)
            return a_minus * c * math.cosh(c * x) - c * math.exp(-c * x)

        sp_r, sp_l = scale.deriv_right, scale.deriv_left
        return {
            "psi": psi,
            "phi": phi,
            "psi_ds_right": lambda x: psi_prime(x, "right") / sp_r(x),
            "psi_ds_left": lambda x: psi_prime(x, "left") / sp_l(x),
            "phi_ds_right": lambda x: phi_prime(x, "right") / sp_r(x),
            "phi_ds_left": lambda x: phi_prime(x, "left") / sp_l(x),
        }

    return Diffusion(interval, scale, speed, factory, name="skew_bm",
                     stepper={"kind": "skew", "beta": beta})


def sticky_bm(theta: float = 1.0) -> Diffusion:
    """Brownian motion sticky at 0: s(x) = x, m(dx) = 2 dx + 2 theta delta_0.
    Functions in its generator domain satisfy
    f'(0+) - f'(0-) = theta f''(0+)."""
    if not theta > 0:
        raise ParameterOutOfRange(f"theta must be positive, got {theta}")
    interval = StateInterval(-INF, INF)
    scale = ScaleFunction(value=lambda x: x, derivative=lambda x: 1.0)
    speed = SpeedMeasure(density=lambda x: 2.0, atoms=((0.0, 2.0 * theta),))

    def factory(alpha: float) -> dict:
        c = math.sqrt(2.0 * alpha)
        # Continuity at 0 and the atom gluing fix the x > 0 coefficients.
        a_coef = 1.0 + 0.5 * theta * c
        b_coef = -0.5 * theta * c

        def psi(x):
            if x <= 0:
                return math.exp(c * x)
            return a_coef * math.exp(c * x) + b_coef * math.exp(-c * x)

        def psi_prime(x, side):
            if x < 0 or (x == 0 and side == "left"):
                return c * math.exp(c * x)
            return c * (a_coef * math.exp(c * x) - b_coef * math.exp(-c * x))

        def phi(x):
            if x >= 0:
                return math.exp(-c * x)
            return a_coef * math.exp(-c * x) + b_coef * math.exp(c * x)

        def phi_prime(x, side):
            if x > 0 or (x == 0 and side == "right"):
                return -c * math.exp(-c * x)
            return c * (-a_coef * math.exp(-c * x) + b_coef * math.exp(c * x))

        return {
            "psi": psi,
            "phi": phi,
            "psi_ds_right": lambda x: psi_prime(x, "right"),
            "psi_ds_left": lambda x: psi_prime(x, "left"),
            "phi_ds_right": lambda x: phi_prime(x, "right"),
            "phi_ds_left": lambda x: phi_prime(x, "left"),
        }

    return Diffusion(interval, scale, speed, factory, name="sticky_bm",
                     stepper={"kind": "sticky", "theta": theta})


# --------------------------------------------------------------------------
# Catalog registry
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CatalogEntry:
    name: str
    parameter_schema: tuple[tuple[str, float, float], ...]  # (name, lo, hi), open bounds
    build: Callable[..., Diffusion]
    defaults: tuple[tuple[str, float], ...] = ()

    def construct(self, **params) -> Diffusion:
        known = {name for name, _, _ in self.parameter_schema}
        unknown = set(params) - known
        if unknown:
            raise ParameterOutOfRange(
                f"{self.name}: unknown parameter(s) {sorted(unknown)}")
        values = dict(self.defaults)
        values.update(params)
        missing = known - set(values)
        if missing:
            raise ParameterOutOfRange(
                f"{self.name}: missing parameter(s) {sorted(missing)}")
        for pname, lo, hi in self.parameter_schema:
            v = values[pname]
            if not lo < v < hi:
                raise ParameterOutOfRange(
                    f"{self.name}: {pname}={v} outside ({lo}, {hi})")
        return self.build(**values)


CATALOG: dict[str, CatalogEntry] = {
    "standard_bm": CatalogEntry("standard_bm", (), standard_bm),
    "gbm": CatalogEntry("gbm", (("mu", -INF, INF), ("sigma", 0.0, INF)), gbm),
    "reflected_bm_drift": CatalogEntry(
        "reflected_bm_drift", (("r", 0.0, INF), ("sigma", 0.0, INF)),
        reflected_bm_drift),
    "skew_bm": CatalogEntry("skew_bm", (("beta", 0.0, 1.0),), skew_bm),
    "sticky_bm": CatalogEntry("sticky_bm", (("theta", 0.0, INF),), sticky_bm,
                              defaults=(("theta", 1.0),)),
}


# --------------------------------------------------------------------------
# Reward builders paired with catalog models
# --------------------------------------------------------------------------

def _family(d: Diffusion) -> str:
    return (d.stepper or {}).get("kind", "")


def call_reward(d: Diffusion, strike: float = 0.0) -> Reward:
    """g(x) = (x - strike)^+ with the generator image in closed form.

    The image is given piecewise on the whole interval (zero below the
    strike, where g vanishes identically), so quadrature never needs the
    numeric fallback near the kink.
    """
    k = strike
    g = lambda x: max(x - k, 0.0)
    fam = _family(d)
    if fam == "gbm":
        mu = d.stepper["mu"]
        image = lambda a, y: a * (y - k) - mu * y if y > k else 0.0
    elif fam == "reflected_bm":
        delta = d.stepper["delta"]
        image = lambda a, y: a * (y - k) + delta if y > k else 0.0
    elif fam == "sticky":
        theta = d.stepper["theta"]

        def image(a, y):
            if y == 0.0 and k == 0.0:
                # kink sits on the sticky atom: atom form of the operator
                return -1.0 / (2.0 * theta)
            return a * (y - k) if y > k else 0.0
    else:  # Brownian family: L = f''/2 away from special points
        image = lambda a, y: a * (y - k) if y > k else 0.0
    rrc = max(k, 0.0) if fam == "skew" else k
    return Reward(g=g, generator_image_closed_form=image, rrc_point=rrc,
                  kinks=(k,), closed_form_valid_from=-INF,
                  name=f"call(strike={k:g})")


def shifted_call_reward(d: Diffusion, shift: float = 1.0) -> Reward:
    """g(x) = (x + shift)^+; the §-free analogue of call with a negated
    strike, kept separate because the CLI exposes it by this name."""
    return _rename(call_reward(d, -shift), f"shifted_call(shift={shift:g})")


def exponential_reward(d: Diffusion, rate: float) -> Reward:
    """g(x) = exp(rate * x) with the model-specific generator image."""
    if rate == 0.0:
        raise ParameterOutOfRange("rate must be nonzero")
    g = lambda x: math.exp(rate * x)
    fam = _family(d)
    if fam == "reflected_bm":
        delta = d.stepper["delta"]
        image = lambda a, y: (a - rate**2 / 2.0 + delta * rate) * math.exp(rate * y)
        return Reward(g=g, generator_image_closed_form=image, rrc_point=0.0,
                      closed_form_valid_from=0.0,
                      name=f"exponential(rate={rate:g})")
    if fam == "gbm":
        mu, sigma = d.stepper["mu"], d.stepper["sigma"]
        image = lambda a, y: (a * math.exp(rate * y)
                              - (0.5 * sigma**2 * y**2 * rate**2 + mu * y * rate)
                              * math.exp(rate * y))
        return Reward(g=g, generator_image_closed_form=image, rrc_point=None,
                      closed_form_valid_from=-INF,
                      name=f"exponential(rate={rate:g})")
    if fam == "sticky":
        # At the sticky point the image uses the atom form of the operator;
        # g is smooth there, so Lg(0) = 0 and the image is a * g(0).
        def image(a, y):
            if y == 0.0:
                return a
            return (a - rate**2 / 2.0) * math.exp(rate * y)
        return Reward(g=g, generator_image_closed_form=image, rrc_point=0.0,
                      closed_form_valid_from=-INF,
                      name=f"exponential(rate={rate:g})")
    image = lambda a, y: (a - rate**2 / 2.0) * math.exp(rate * y)
    rrc = 0.0 if fam == "skew" else None
    return Reward(g=g, generator_image_closed_form=image, rrc_point=rrc,
                  closed_form_valid_from=-INF,
                  name=f"exponential(rate={rate:g})")


def expression_reward(d: Diffusion, text: str) -> Reward:
    """Parse a reward expression and sample-validate it on the state interval."""
    lo = d.interval.left if math.isfinite(d.interval.left) else -5.0
    hi = d.interval.right if math.isfinite(d.interval.right) else max(5.0, lo + 10.0)
    pad = 1e-9 * (1.0 + abs(lo))
    rw = parse_reward(text, domain=(lo + pad, hi))
    edge = _support_left_edge(rw.g, lo + pad, hi)
    rrc = edge
    if _family(d) == "skew" and edge is not None:
        rrc = max(edge, 0.0)
    return Reward(g=rw.g, rrc_point=rrc, name=rw.name)


def _support_left_edge(g, lo, hi, n=512):
    """Smallest sampled x with g > 0, bisection-refined.  None if g never
    vanishes on the left (support reaches the window edge)."""
    xs = [lo + (hi - lo) * i / n for i in range(n + 1)]
    vals = []
    for x in xs:
        try:
            vals.append(g(x))
        except (ValueError, ZeroDivisionError, OverflowError):
            vals.append(math.nan)
    first_pos = next((i for i, v in enumerate(vals) if v > 0), None)
    if first_pos is None or first_pos == 0:
        return None
    a, b = xs[first_pos - 1], xs[first_pos]
    for _ in range(80):
        mid = 0.5 * (a + b)
        try:
            if g(mid) > 0:
                b = mid
            else:
                a = mid
        except (ValueError, ZeroDivisionError, OverflowError):
            a = mid
    return 0.5 * (a + b)


def _rename(rw: Reward, name: str) -> Reward:
    from dataclasses import replace
    return replace(rw, name=name)


def build_reward(d: Diffusion, spec: dict) -> Reward:
    """Reward from a CLI-style description dict (see the config schema)."""
    kind = spec["kind"]
    if kind == "call":
        return call_reward(d, spec.get("strike", 0.0))
    if kind == "shifted_call":
        return shifted_call_reward(d, spec.get("shift", 1.0))
    if kind == "exponential":
        return exponential_reward(d, spec["rate"])
    if kind == "expression":
        return expression_reward(d, spec["text"])
    raise ParameterOutOfRange(f"unknown reward kind {kind!r}")
