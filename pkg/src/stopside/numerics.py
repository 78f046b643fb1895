"""Measure-aware quadrature, root bracketing and one-sided differentiation.

Low-level numerical workhorses shared by every other module.  Integration is
always "against a measure" (absolutely continuous density plus finitely many
atoms); improper endpoints are handled by geometric truncation doubling with
a two-successive-value stopping rule.  All functions here are pure.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, Sequence, TYPE_CHECKING

import numpy as np
from scipy import integrate as _sciint

from .errors import DivergentIntegral, NoRoot, NonConvergent

if TYPE_CHECKING:  # pragma: no cover - annotation only, avoids an import cycle
    from .diffusion import SpeedMeasure

_EPS = float(np.finfo(float).eps)
_HUGE = 1e120


@dataclass(frozen=True)
class RegionSpec:
    """Interval of integration with explicit endpoint inclusion.

    Inclusion flags only matter for atoms sitting exactly on an endpoint;
    the absolutely continuous part never sees them.  Endpoints may be
    ``±math.inf``.
    """

    lower: float
    upper: float
    include_lower: bool = True
    include_upper: bool = True

    def __post_init__(self):
        if not self.lower < self.upper:
            raise ValueError(f"empty region: ({self.lower}, {self.upper})")

    def contains(self, p: float) -> bool:
        if p == self.lower:
            return self.include_lower
        if p == self.upper:
            return self.include_upper
        return self.lower < p < self.upper


@dataclass(frozen=True)
class QuadratureOptions:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_doublings: int = 60

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_doublings < 1:
            raise ValueError("rel_tol > 0, abs_tol > 0 and max_doublings >= 1 required")


DEFAULT_QUAD = QuadratureOptions()


def _quad_finite(fd, a, b, opts, breakpoints=()):
    """Adaptive quadrature of ``fd`` over the finite interval [a, b]."""
    if b <= a:
        return 0.0
    pts = sorted(p for p in breakpoints if a < p < b)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _sciint.IntegrationWarning)
        val, _err = _sciint.quad(
            fd, a, b,
            points=pts or None,
            limit=250,
            epsabs=0.1 * opts.abs_tol,
            epsrel=0.1 * opts.rel_tol,
        )
    return val


def _tail(fd, anchor, direction, opts, breakpoints):
    """Integral of ``fd`` over [anchor, +inf) (direction=+1) or
    (-inf, anchor] (direction=-1) by truncation-radius doubling.

    Chunks decaying geometrically (ratio stable below 1, as for both
    exponential and power-law integrands under radius doubling) are summed
    with their extrapolated remainder; the stop rule compares two successive
    (extrapolated) truncated values.
    """
    radius = max(1.0, abs(anchor))
    if direction > 0:
        total = _quad_finite(fd, anchor, anchor + radius, opts, breakpoints)
    else:
        total = _quad_finite(fd, anchor - radius, anchor, opts, breakpoints)
    chunks: list[float] = []
    prev_estimate = total
    for _ in range(opts.max_doublings):
        if direction > 0:
            chunk = _quad_finite(fd, anchor + radius, anchor + 2 * radius, opts, breakpoints)
        else:
            chunk = _quad_finite(fd, anchor - 2 * radius, anchor - radius, opts, breakpoints)
        radius *= 2
        total += chunk
        chunks.append(chunk)
        if abs(total) > _HUGE:
            raise DivergentIntegral(f"truncated values exceed {_HUGE:g}")
        estimate = total
        if len(chunks) >= 2 and chunks[-2] != 0.0:
            ratio = chunk / chunks[-2]
            if 0.0 < ratio < 0.98:
                estimate = total + chunk * ratio / (1.0 - ratio)
        tol = max(opts.rel_tol * abs(estimate), opts.abs_tol)
        if len(chunks) >= 2 and abs(estimate - prev_estimate) <= tol:
            return estimate
        prev_estimate = estimate
    if len(chunks) >= 3 and abs(chunks[-1]) >= abs(chunks[-2]) >= abs(chunks[-3]):
        raise DivergentIntegral("truncated values keep growing after doubling budget")
    raise NonConvergent("tail did not stabilize within the doubling budget")


def _lebesgue_part(fd, lower, upper, opts, breakpoints):
    lo_inf = math.isinf(lower)
    hi_inf = math.isinf(upper)
    if not lo_inf and not hi_inf:
        return _quad_finite(fd, lower, upper, opts, breakpoints)
    if lo_inf and hi_inf:
        anchor = 0.0
        return (_tail(fd, anchor, -1, opts, breakpoints)
                + _tail(fd, anchor, +1, opts, breakpoints))
    if hi_inf:
        return _tail(fd, lower, +1, opts, breakpoints)
    return _tail(fd, upper, -1, opts, breakpoints)


def integrate_against_measure(
    f: Callable[[float], float],
    m: "SpeedMeasure",
    region: RegionSpec,
    opts: QuadratureOptions = DEFAULT_QUAD,
) -> float:
    """Integrate ``f`` against the measure ``m`` over ``region``.

    The result is the adaptive quadrature of ``f * density`` against Lebesgue
    plus ``sum f(p) * mass`` over the atoms of ``m`` lying in the region
    (endpoint inclusion flags honored exactly).
    """
    atom_sum = 0.0
    for point, mass in m.atoms:
        if region.contains(point):
            atom_sum += f(point) * mass
    density = m.density
    fd = lambda y: f(y) * density(y)
    breakpoints = tuple(m.density_breakpoints) + tuple(p for p, _ in m.atoms)
    return atom_sum + _lebesgue_part(fd, region.lower, region.upper, opts, breakpoints)


def _bisect(h, a, b, fa, fb, tol):
    """Shrink a sign-change bracket to width <= tol; returns the midpoint."""
    for _ in range(256):
        if b - a <= tol:
            break
        mid = 0.5 * (a + b)
        fm = h(mid)
        if fm == 0.0:
            return mid
        if (fa < 0.0) != (fm < 0.0):
            b, fb = mid, fm
        else:
            a, fa = mid, fm
    return 0.5 * (a + b)


def _polish_abs_min(h, a, b, tol):
    """Golden-section minimization of |h| on [a, b]."""
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = abs(h(x1)), abs(h(x2))
    for _ in range(200):
        if b - a <= max(tol, 4.0 * _EPS * (1.0 + abs(a))):
            break
        if f1 <= f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = abs(h(x1))
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = abs(h(x2))
    return x1 if f1 <= f2 else x2


def find_largest_root(
    h: Callable[[float], float],
    search_lo: float,
    search_hi: float,
    tol: float = 1e-10,
    *,
    base_grid: int = 128,
    max_refinements: int = 5,
) -> float:
    """Largest root of ``h`` on [search_lo, search_hi].

    Scans a refining grid from the top down for a sign change, then refines
    the topmost bracket by bisection to width <= tol.  If ``h`` only touches
    zero tangentially, returns the largest local minimizer of |h| whose value
    is below tol * (1 + median |h| scale).  Raises :class:`NoRoot` otherwise.
    """
    if not search_lo < search_hi:
        raise ValueError("search_lo must be below search_hi")
    cache: dict[float, float] = {}

    def hc(x: float) -> float:
        if x not in cache:
            cache[x] = h(x)
        return cache[x]

    for level in range(max_refinements + 1):
        n = base_grid << level
        xs = np.linspace(search_lo, search_hi, n + 1)
        vals = np.array([hc(float(x)) for x in xs])
        scale = float(np.median(np.abs(vals[np.isfinite(vals)]))) if np.any(np.isfinite(vals)) else 0.0
        habs = tol * (1.0 + scale)

        exact = np.flatnonzero(vals == 0.0)
        sign_change = None
        for i in range(n - 1, -1, -1):
            a, b = vals[i], vals[i + 1]
            if not (np.isfinite(a) and np.isfinite(b)):
                continue
            if (a < 0.0) != (b < 0.0) and a != 0.0 and b != 0.0:
                sign_change = i
                break
        if exact.size and (sign_change is None or exact[-1] > sign_change):
            return float(xs[exact[-1]])
        if sign_change is not None:
            i = sign_change
            return _bisect(hc, float(xs[i]), float(xs[i + 1]), vals[i], vals[i + 1], tol)

        # Tangential fallback: |h| dips to ~0 without crossing.
        absvals = np.abs(vals)
        for i in range(n, -1, -1):
            left_ok = i == 0 or absvals[i] <= absvals[i - 1]
            right_ok = i == n or absvals[i] <= absvals[i + 1]
            if left_ok and right_ok and absvals[i] <= habs:
                a = float(xs[max(i - 1, 0)])
                b = float(xs[min(i + 1, n)])
                x_hat = _polish_abs_min(hc, a, b, tol)
                if abs(hc(x_hat)) <= habs:
                    return x_hat
    raise NoRoot(
        f"no sign change and min |h| = {float(np.min(np.abs(vals))):.3e} "
        f"exceeds tolerance on the finest grid"
    )


def richardson_ladder(vals: Sequence[float]) -> tuple[float, float]:
    """Extrapolate Q(h0 * 2**-k) to h -> 0 assuming an error expansion in
    integer powers of h.  Returns (estimate, error_estimate)."""
    vals = [v for v in vals if math.isfinite(v)]
    if len(vals) < 2:
        raise NonConvergent("not enough finite samples for extrapolation")
    prev_row = list(vals)
    diag = [prev_row[0]]
    for j in range(1, len(vals)):
        fac = 2.0 ** j
        row = [(fac * prev_row[i + 1] - prev_row[i]) / (fac - 1.0)
               for i in range(len(prev_row) - 1)]
        diag.append(row[0])
        prev_row = row
    best, best_err = diag[1], abs(diag[1] - diag[0])
    for i in range(2, len(diag)):
        err = abs(diag[i] - diag[i - 1])
        if err <= best_err:
            best, best_err = diag[i], err
    return best, best_err


def one_sided_derivative(
    f: Callable[[float], float],
    coord: Callable[[float], float],
    x: float,
    side: str,
    *,
    rungs: int = 14,
) -> float:
    """One-sided derivative of ``f`` with respect to the coordinate ``coord``.

    Computes lim (f(x +- h) - f(x)) / (coord(x +- h) - coord(x)) over the
    chosen side via Richardson-extrapolated finite differences with step
    ladder h_k = h0 * 2**-k, h0 = cbrt(machine epsilon) * max(1, |x|).
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    sgn = 1.0 if side == "right" else -1.0
    h0 = _EPS ** (1.0 / 3.0) * max(1.0, abs(x))
    f0 = f(x)
    c0 = coord(x)
    quotients = []
    for k in range(rungs):
        h = h0 * 2.0 ** (-k)
        xk = x + sgn * h
        dc = coord(xk) - c0
        if dc == 0.0 or not math.isfinite(dc):
            continue
        q = (f(xk) - f0) / dc
        if math.isfinite(q):
            quotients.append(q)
    if len(quotients) < 4:
        raise NonConvergent("derivative ladder produced too few finite quotients")
    best, err = richardson_ladder(quotients)
    if err > 1e-4 * (1.0 + abs(best)):
        raise NonConvergent(f"derivative ladder did not stabilize (err={err:.3e})")
    return best
