"""Regular one-dimensional diffusions described by scale and speed.

A diffusion is held in "handbook" form: a state interval, a scale function
s, a speed measure m (density plus atoms), and for each discount rate a pair
of fundamental solutions (psi increasing, phi decreasing) of the resolvent
equation, together with their one-sided derivatives with respect to s and
the Wronskian.  Everything downstream (Green function, hitting transforms,
thresholds) is built from these ingredients.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional

from .errors import NonConvergent, OutOfDomain
from .numerics import (
    DEFAULT_QUAD,
    QuadratureOptions,
    RegionSpec,
    integrate_against_measure,
    one_sided_derivative,
    richardson_ladder,
)

NATURAL = "natural"
REFLECTING = "reflecting"


@dataclass(frozen=True)
class StateInterval:
    """State space of the diffusion; endpoints may be infinite.

    A boundary included in the state space must be reflecting; an excluded
    boundary must be natural.
    """

    left: float
    right: float
    left_in_state: bool = False
    right_in_state: bool = False
    left_behavior: str = NATURAL
    right_behavior: str = NATURAL

    def __post_init__(self):
        if not self.left < self.right:
            raise ValueError("left endpoint must be below right endpoint")
        for included, behavior, name in (
            (self.left_in_state, self.left_behavior, "left"),
            (self.right_in_state, self.right_behavior, "right"),
        ):
            if behavior not in (NATURAL, REFLECTING):
                raise ValueError(f"unknown {name} boundary behavior: {behavior}")
            if included and behavior != REFLECTING:
                raise ValueError(f"included {name} boundary must be reflecting")
            if not included and behavior != NATURAL:
                raise ValueError(f"excluded {name} boundary must be natural")

    def contains(self, x: float) -> bool:
        if x == self.left:
            return self.left_in_state
        if x == self.right:
            return self.right_in_state
        return self.left < x < self.right

    def is_interior(self, x: float) -> bool:
        return self.left < x < self.right

    def require(self, x: float, what: str = "point") -> None:
        if not self.contains(x):
            raise OutOfDomain(f"{what} {x!r} outside state interval "
                              f"({self.left}, {self.right})")


@dataclass(frozen=True)
class SpeedMeasure:
    """Speed measure m(dx): a density against Lebesgue plus a finite list of
    atoms.  Atoms correspond to sticky points of the diffusion.

    ``density_breakpoints`` lists points where the density is discontinuous
    or kinked (quadrature splits there).
    """

    density: Callable[[float], float]
    atoms: tuple[tuple[float, float], ...] = ()
    density_breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        points = [p for p, _ in self.atoms]
        if len(set(points)) != len(points):
            raise ValueError("atom points must be pairwise distinct")
        if any(mass <= 0 for _, mass in self.atoms):
            raise ValueError("atom masses must be positive")

    def atom_mass_at(self, x: float, atol: float = 0.0) -> float:
        for p, mass in self.atoms:
            if x == p or abs(x - p) <= atol:
                return mass
        return 0.0


@dataclass(frozen=True)
class ScaleFunction:
    """Strictly increasing scale function s with its derivative.

    ``derivative`` is the right-continuous version; ``derivative_left``
    defaults to it and only differs where s has a kink (e.g. skew points).
    """

    value: Callable[[float], float]
    derivative: Callable[[float], float]
    derivative_left: Optional[Callable[[float], float]] = None

    def deriv_right(self, x: float) -> float:
        return self.derivative(x)

    def deriv_left(self, x: float) -> float:
        if self.derivative_left is None:
            return self.derivative(x)
        return self.derivative_left(x)


@dataclass(frozen=True)
class FundamentalPair:
    """Fundamental solutions for one discount rate.

    psi is positive increasing, phi positive decreasing; the one-sided
    derivatives are taken with respect to the scale function; the Wronskian
    (psi'_s phi - psi phi'_s, right derivatives) is a positive constant.
    """

    alpha: float
    psi: Callable[[float], float]
    phi: Callable[[float], float]
    psi_ds_right: Callable[[float], float]
    psi_ds_left: Callable[[float], float]
    phi_ds_right: Callable[[float], float]
    phi_ds_left: Callable[[float], float]
    wronskian: float


@dataclass(eq=False)
class Diffusion:
    """Immutable-after-construction description of a regular 1-D diffusion.

    ``pair_factory`` maps a discount rate to the raw ingredients of a
    :class:`FundamentalPair` (without the Wronskian, which is computed once
    at a reference point and reused).  Results are memoized per rate behind
    a lock, so sharing a Diffusion across threads is safe.
    """

    interval: StateInterval
    scale: ScaleFunction
    speed: SpeedMeasure
    pair_factory: Callable[[float], dict]
    name: str = ""
    stepper: Optional[dict] = None
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def fundamental_pair_for(self, alpha: float) -> FundamentalPair:
        if alpha <= 0:
            raise ValueError("discount rate must be positive")
        key = float(alpha)
        with self._lock:
            pair = self._cache.get(key)
        if pair is not None:
            return pair
        parts = self.pair_factory(key)
        x_ref = self._reference_point()
        w = (parts["psi_ds_right"](x_ref) * parts["phi"](x_ref)
             - parts["psi"](x_ref) * parts["phi_ds_right"](x_ref))
        if not (w > 0 and math.isfinite(w)):
            raise NonConvergent(f"Wronskian {w!r} at reference point {x_ref!r}")
        pair = FundamentalPair(alpha=key, wronskian=w, **parts)
        with self._lock:
            self._cache[key] = pair
        return pair

    def _reference_point(self) -> float:
        lo, hi = self.interval.left, self.interval.right
        if math.isfinite(lo) and math.isfinite(hi):
            return 0.5 * (lo + hi)
        # Probe window of unit half-width around a finite anchor, then take
        # its s-midpoint so strongly skewed scales still land mid-window.
        # Open endpoints are never touched (scale may blow up there).
        anchor = 0.0
        if not self.interval.is_interior(anchor):
            anchor = lo + 1.0 if math.isfinite(lo) else hi - 1.0
        if math.isfinite(lo):
            a = lo if self.interval.left_in_state else lo + 0.25 * (anchor - lo)
        else:
            a = anchor - 1.0
        if math.isfinite(hi):
            b = hi if self.interval.right_in_state else hi - 0.25 * (hi - anchor)
        else:
            b = anchor + 1.0
        s = self.scale.value
        target = 0.5 * (s(a) + s(b))
        for _ in range(80):
            mid = 0.5 * (a + b)
            if s(mid) < target:
                a = mid
            else:
                b = mid
        return 0.5 * (a + b)


def green(d: Diffusion, alpha: float, x: float, y: float) -> float:
    """Green function G_alpha(x, y) = psi(x ^ y) phi(x v y) / wronskian."""
    d.interval.require(x, "x")
    d.interval.require(y, "y")
    pair = d.fundamental_pair_for(alpha)
    lo, hi = (x, y) if x <= y else (y, x)
    return pair.psi(lo) * pair.phi(hi) / pair.wronskian


def hitting_laplace(d: Diffusion, alpha: float, x: float, z: float) -> float:
    """Laplace transform E_x[exp(-alpha * H_z)] of the hitting time of z."""
    d.interval.require(x, "x")
    d.interval.require(z, "z")
    pair = d.fundamental_pair_for(alpha)
    if x <= z:
        return pair.psi(x) / pair.psi(z)
    return pair.phi(x) / pair.phi(z)


def _dual_cell_mass(d: Diffusion, x: float, h: float) -> float:
    """Speed mass of (x - h/2, x + h/2], assuming no atoms inside.

    The density may jump at x itself, so each half-cell is integrated
    separately (Simpson; the integrand is smooth within a half-cell).
    """
    dens = d.speed.density
    half = 0.5 * h
    tiny = 1e-12 * max(1.0, abs(x))
    left = (half / 6.0) * (dens(x - half) + 4.0 * dens(x - 0.5 * half) + dens(x - tiny))
    right = (half / 6.0) * (dens(x + tiny) + 4.0 * dens(x + 0.5 * half) + dens(x + half))
    return left + right


def _clear_span(d: Diffusion, x: float) -> float:
    """Largest step h such that (x-h, x+h) avoids atoms, density breakpoints
    and the state boundary."""
    span = math.inf
    for p, _ in d.speed.atoms:
        if p != x:
            span = min(span, abs(p - x))
    for p in d.speed.density_breakpoints:
        if p != x:
            span = min(span, abs(p - x))
    if math.isfinite(d.interval.left):
        span = min(span, x - d.interval.left)
    if math.isfinite(d.interval.right):
        span = min(span, d.interval.right - x)
    return span


def apply_generator(
    d: Diffusion,
    f: Callable[[float], float],
    x: float,
    *,
    h_cap: float | None = None,
) -> float:
    """Feller differential operator (d/dm)(d+/ds) applied to f at x.

    At a speed atom the value is the jump of the one-sided s-derivatives
    divided by the atom mass; at an included boundary the one-sided interior
    limit is taken; elsewhere a shrinking symmetric s-difference quotient is
    divided by the speed mass of the dual cell and Richardson-extrapolated.

    ``h_cap`` bounds the largest difference step; callers pass it when they
    know about nearby non-smooth points of f the diffusion cannot see.
    """
    d.interval.require(x, "x")
    atom_mass = d.speed.atom_mass_at(x)
    if atom_mass > 0.0:
        jump = (one_sided_derivative(f, d.scale.value, x, "right")
                - one_sided_derivative(f, d.scale.value, x, "left"))
        return jump / atom_mass

    if x == d.interval.left or x == d.interval.right:
        sgn = 1.0 if x == d.interval.left else -1.0
        h0 = 1e-2 * max(1.0, abs(x))
        vals = []
        for k in range(7):
            probe = x + sgn * h0 * 2.0 ** (-k)
            if d.interval.is_interior(probe):
                vals.append(apply_generator(d, f, probe, h_cap=h_cap))
        best, err = richardson_ladder(vals)
        if err > 1e-4 * (1.0 + abs(best)):
            raise NonConvergent("boundary generator limit did not stabilize")
        return best

    s = d.scale.value
    h_max = 0.45 * _clear_span(d, x)
    if h_cap is not None:
        h_max = min(h_max, h_cap)
    h0 = min(1e-3 * max(1.0, abs(x)), h_max)
    if not h0 > 0:
        raise NonConvergent("no room for a difference quotient at this point")
    quotients = []
    f0 = f(x)
    s0 = s(x)
    for k in range(9):
        h = h0 * 2.0 ** (-k)
        d_plus = (f(x + h) - f0) / (s(x + h) - s0)
        d_minus = (f0 - f(x - h)) / (s0 - s(x - h))
        mass = _dual_cell_mass(d, x, h)
        if mass <= 0 or not math.isfinite(mass):
            continue
        q = (d_plus - d_minus) / mass
        if math.isfinite(q):
            quotients.append(q)
    if len(quotients) < 4:
        raise NonConvergent("generator quotient ladder too short")
    best, err = richardson_ladder(quotients)
    if err > 1e-4 * (1.0 + abs(best)):
        raise NonConvergent(f"generator quotient did not stabilize (err={err:.3e})")
    return best


def resolvent(
    d: Diffusion,
    alpha: float,
    u: Callable[[float], float],
    x: float,
    opts: QuadratureOptions = DEFAULT_QUAD,
) -> float:
    """Resolvent applied to u at x: integral of G_alpha(x, y) u(y) m(dy)
    over the state interval."""
    d.interval.require(x, "x")
    pair = d.fundamental_pair_for(alpha)
    lo, hi = d.interval.left, d.interval.right
    psi, phi, w = pair.psi, pair.phi, pair.wronskian

    left_part = 0.0
    if x > lo:
        region = RegionSpec(lo, x, include_lower=d.interval.left_in_state,
                            include_upper=True)
        left_part = integrate_against_measure(lambda y: psi(y) * u(y),
                                              d.speed, region, opts)
    elif x == lo and d.interval.left_in_state:
        mass = d.speed.atom_mass_at(lo)
        left_part = psi(lo) * u(lo) * mass if mass else 0.0
    right_part = 0.0
    if x < hi:
        region = RegionSpec(x, hi, include_lower=False,
                            include_upper=d.interval.right_in_state)
        right_part = integrate_against_measure(lambda y: phi(y) * u(y),
                                               d.speed, region, opts)
    return (phi(x) * left_part + psi(x) * right_part) / w


def reflect(d: Diffusion) -> Diffusion:
    """Diffusion of -X: interval negated and swapped, scale and speed
    mirrored, psi and phi exchanged via x -> -x.  The Wronskian is
    unchanged."""
    iv = d.interval
    interval = StateInterval(
        left=-iv.right, right=-iv.left,
        left_in_state=iv.right_in_state, right_in_state=iv.left_in_state,
        left_behavior=iv.right_behavior, right_behavior=iv.left_behavior,
    )
    s = d.scale
    scale = ScaleFunction(
        value=lambda x: -s.value(-x),
        derivative=lambda x: s.deriv_left(-x),
        derivative_left=lambda x: s.deriv_right(-x),
    )
    speed = SpeedMeasure(
        density=lambda x: d.speed.density(-x),
        atoms=tuple((-p, mass) for p, mass in d.speed.atoms),
        density_breakpoints=tuple(-p for p in d.speed.density_breakpoints),
    )

    def factory(alpha: float) -> dict:
        pair = d.fundamental_pair_for(alpha)
        return {
            "psi": lambda x: pair.phi(-x),
            "phi": lambda x: pair.psi(-x),
            "psi_ds_right": lambda x: -pair.phi_ds_left(-x),
            "psi_ds_left": lambda x: -pair.phi_ds_right(-x),
            "phi_ds_right": lambda x: -pair.psi_ds_left(-x),
            "phi_ds_left": lambda x: -pair.psi_ds_right(-x),
        }

    return Diffusion(interval=interval, scale=scale, speed=speed,
                     pair_factory=factory,
                     name=f"reflect({d.name})" if d.name else "reflected",
                     stepper=None)
