"""Threshold equation, verification, value function, representing measure.

The optimal threshold of a right-sided problem is located as the largest
root of the residual

    residual(x) = g(x) - psi(x) / w * integral over (x, r] of
                  phi(y) (alpha - L)g(y) m(dy),

with a fallback to the smallest point from which the residual stays
non-negative (that branch arises when the speed measure charges the
threshold and the threshold inequality is strict).  The verified solution
carries the representing-measure atom weight k, the value function, and the
status of each optimality condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .diffusion import Diffusion
from .errors import (
    HypothesisViolated,
    NoRoot,
    NonConvergent,
    OutOfDomain,
)
from .numerics import (
    DEFAULT_QUAD,
    QuadratureOptions,
    RegionSpec,
    find_largest_root,
    integrate_against_measure,
    one_sided_derivative,
)
from .reward import Reward, check_rrc, generator_image


@dataclass(frozen=True)
class Problem:
    """A one-sided optimal stopping problem: diffusion, payoff, discount."""

    diffusion: Diffusion
    reward: Reward
    alpha: float
    side: str = "right"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.side not in ("right", "left"):
            raise ValueError("side must be 'right' or 'left'")


@dataclass(frozen=True)
class SolveOptions:
    search_hi: Optional[float] = None   # None: expand automatically
    grid_points: int = 2048
    root_tol: float = 1e-10
    verify_samples: int = 512
    run_rrc_check: bool = True
    quad: QuadratureOptions = DEFAULT_QUAD

    def __post_init__(self):
        if self.grid_points < 16:
            raise ValueError("grid_points must be at least 16")


@dataclass(frozen=True)
class ConditionFlag:
    holds: bool
    relation: str = ""  # "=", ">", "<" or "" when not applicable


@dataclass(frozen=True)
class Conditions:
    """Status of the four optimality conditions at the threshold.

    threshold:         the payoff is at least the Green-kernel tail integral
                       (relation '=' at a genuine root, '>' when strict);
    image_nonnegative: (alpha - L)g >= 0 right of the threshold;
    majorant:          the scaled psi dominates g left of the threshold;
    closed_bound:      the reverse inequality over the closed region
                       (relation '<' or '='; only informative when the speed
                       measure charges the threshold).
    """

    threshold: ConditionFlag
    image_nonnegative: ConditionFlag
    majorant: ConditionFlag
    closed_bound: ConditionFlag


@dataclass(frozen=True)
class RepresentingMeasure:
    """Riesz representing measure of the value function: the generator image
    of g against m on (x*, r], plus an atom of weight k at the threshold."""

    atom_point: float
    atom_mass: float
    density: Callable[[float], float]  # y -> (alpha - L)g(y), valid y > atom_point


@dataclass(frozen=True)
class Solution:
    x_star: float
    k: float
    value: Callable[[float], float]
    rep_measure: Optional[RepresentingMeasure]
    conditions: Optional[Conditions]
    status: str  # "Verified" | "NotOneSided" | "Unverified"
    diagnostics: str = ""
    problem: Optional[Problem] = None


VERIFIED = "Verified"
NOT_ONE_SIDED = "NotOneSided"
UNVERIFIED = "Unverified"


class _Engine:
    """Shared per-problem state: fundamental pair, image, tail integrals."""

    def __init__(self, p: Problem, opts: SolveOptions):
        self.p = p
        self.opts = opts
        self.d = p.diffusion
        self.pair = self.d.fundamental_pair_for(p.alpha)
        self.interval = self.d.interval

    def image(self, y: float) -> float:
        return generator_image(self.d, self.p.reward, self.p.alpha, y)

    def tail_integral(self, x: float) -> float:
        """Integral of phi * image against m over (x, r]."""
        iv = self.interval
        if x >= iv.right:
            return 0.0
        phi = self.pair.phi
        region = RegionSpec(x, iv.right, include_lower=False,
                            include_upper=iv.right_in_state)
        return integrate_against_measure(
            lambda y: phi(y) * self.image(y), self.d.speed, region, self.opts.quad)

    def residual(self, x: float) -> float:
        g = self.p.reward.g
        return g(x) - self.pair.psi(x) * self.tail_integral(x) / self.pair.wronskian

    def residual_closed(self, x: float) -> float:
        """Residual with the region closed at x (atom at x included)."""
        mass = self.d.speed.atom_mass_at(x)
        extra = 0.0
        if mass > 0.0:
            green_xx = self.pair.psi(x) * self.pair.phi(x) / self.pair.wronskian
            extra = green_xx * self.image(x) * mass
        return self.residual(x) - extra


class _GridResidual:
    """Residual evaluator backed by a cumulative tail-integral cache, so a
    full scan costs one short quadrature per grid cell."""

    def __init__(self, engine: _Engine, lo: float, hi: float, n: int):
        self.engine = engine
        d = engine.d
        nodes = set(np.linspace(lo, hi, n).tolist())
        for p_, _ in d.speed.atoms:
            if lo < p_ <= hi:
                nodes.add(p_)
        for p_ in engine.p.reward.kinks:
            if lo < p_ <= hi:
                nodes.add(p_)
        if lo < 0.0 < hi:
            nodes.add(0.0)
        self.nodes = np.array(sorted(nodes))
        phi = engine.pair.phi
        image = engine.image
        quad = engine.opts.quad
        speed = d.speed
        tails = np.empty(len(self.nodes))
        tails[-1] = engine.tail_integral(float(self.nodes[-1]))
        for i in range(len(self.nodes) - 2, -1, -1):
            a, b = float(self.nodes[i]), float(self.nodes[i + 1])
            seg = integrate_against_measure(
                lambda y: phi(y) * image(y), speed,
                RegionSpec(a, b, include_lower=False, include_upper=True), quad)
            tails[i] = tails[i + 1] + seg
        self.tails = tails

    def tail(self, x: float) -> float:
        nodes = self.nodes
        if x >= nodes[-1]:
            return self.engine.tail_integral(x)
        if x < nodes[0]:
            seg = integrate_against_measure(
                lambda y: self.engine.pair.phi(y) * self.engine.image(y),
                self.engine.d.speed,
                RegionSpec(x, float(nodes[0]), False, True),
                self.engine.opts.quad)
            return self.tails[0] + seg
        j = int(np.searchsorted(nodes, x, side="right")) - 1
        if nodes[j] == x:
            return float(self.tails[j])
        b = float(nodes[j + 1])
        seg = integrate_against_measure(
            lambda y: self.engine.pair.phi(y) * self.engine.image(y),
            self.engine.d.speed,
            RegionSpec(x, b, False, True),
            self.engine.opts.quad)
        return float(self.tails[j + 1]) + seg

    def residual(self, x: float) -> float:
        g = self.engine.p.reward.g
        pair = self.engine.pair
        return g(x) - pair.psi(x) * self.tail(x) / pair.wronskian


def threshold_residual(p: Problem, x: float, opts: SolveOptions | None = None) -> float:
    """Payoff minus the Green-kernel tail integral at x (half-open region,
    excluding any atom at x).  Roots of this function are threshold
    candidates."""
    opts = opts or SolveOptions()
    if p.side == "left":
        return threshold_residual(_reflected_problem(p), -x, opts)
    rrc = p.reward.rrc_point
    if rrc is not None and x < rrc - 1e-12 * (1.0 + abs(rrc)):
        raise OutOfDomain(f"residual evaluated at {x} below the regularity point {rrc}")
    p.diffusion.interval.require(x, "x")
    return _Engine(p, opts).residual(x)


def value_function(p: Problem, x_star: float) -> Callable[[float], float]:
    """Value function of the threshold rule at x_star: the payoff in the
    stopping region, the hitting-transform multiple of the payoff outside."""
    d = p.diffusion
    d.interval.require(x_star, "x_star")
    pair = d.fundamental_pair_for(p.alpha)
    g = p.reward.g
    g_star = g(x_star)
    if p.side == "right":
        psi_star = pair.psi(x_star)

        def value(x: float) -> float:
            d.interval.require(x, "x")
            if x >= x_star:
                return g(x)
            return g_star * pair.psi(x) / psi_star
    else:
        phi_star = pair.phi(x_star)

        def value(x: float) -> float:
            d.interval.require(x, "x")
            if x <= x_star:
                return g(x)
            return g_star * pair.phi(x) / phi_star

    return value


def expected_reward_of_threshold(p: Problem, x: float, z: float) -> float:
    """Expected discounted payoff of the rule "stop at the first hit of the
    threshold set" (level z), started from x."""
    d = p.diffusion
    d.interval.require(x, "x")
    d.interval.require(z, "z")
    pair = d.fundamental_pair_for(p.alpha)
    g = p.reward.g
    if p.side == "right":
        if x >= z:
            return g(x)
        return g(z) * pair.psi(x) / pair.psi(z)
    if x <= z:
        return g(x)
    return g(z) * pair.phi(x) / pair.phi(z)


# --------------------------------------------------------------------------
# Right-sided solve
# --------------------------------------------------------------------------

def solve_right_sided(p: Problem, opts: SolveOptions | None = None) -> Solution:
    """Locate and verify the optimal threshold of a one-sided problem.

    Steps: (i) largest root of the threshold residual (falling back to the
    smallest point from which the residual stays non-negative); (ii) sampled
    verification that the generator image is non-negative above the
    threshold; (iii) sampled verification that the scaled psi dominates the
    payoff below it.  The returned Solution carries the representing-measure
    atom weight and the condition table.
    """
    opts = opts or SolveOptions()
    if p.side == "left":
        return _map_back_left(p, solve_right_sided(_reflected_problem(p), opts))

    engine = _Engine(p, opts)
    notes: list[str] = []

    if opts.run_rrc_check and p.reward.rrc_point is not None:
        report = check_rrc(p.diffusion, p.reward, p.alpha, p.reward.rrc_point,
                           opts.quad)
        if not report.ok:
            return Solution(
                x_star=math.nan, k=math.nan, value=p.reward.g,
                rep_measure=None, conditions=None, status=UNVERIFIED,
                diagnostics=f"right regularity check failed: {report.details}",
                problem=p)

    lo = _search_lo(p)
    hi = opts.search_hi if opts.search_hi is not None else _auto_hi(engine, lo)

    grid = _GridResidual(engine, lo, hi, opts.grid_points)
    res_scale = 1.0 + max(abs(p.reward.g(float(x))) for x in grid.nodes)
    plateau_tol = max(1e-8 * res_scale, 1e3 * opts.quad.abs_tol)

    try:
        x_hat = find_largest_root(grid.residual, lo, hi, opts.root_tol,
                                  base_grid=min(128, max(32, opts.grid_points // 4)))
        found_root = True
    except NoRoot:
        x_hat = _plateau_edge(grid, plateau_tol, opts.root_tol)
        found_root = False
        if x_hat is None:
            return Solution(
                math.nan, math.nan, p.reward.g, None, None, NOT_ONE_SIDED,
                "no residual root and no terminal segment of non-negativity "
                f"on [{lo:.6g}, {hi:.6g}]", p)
        notes.append("threshold from the non-negativity plateau edge")

    x_hat = _snap(engine, grid, x_hat, lo, hi, plateau_tol, opts.root_tol)
    _log_extra_roots(grid, x_hat, notes)
    if found_root:
        notes.append(f"largest residual root at {x_hat!r}")
    return _assemble(engine, x_hat, lo, notes, opts)


def _search_lo(p: Problem) -> float:
    iv = p.diffusion.interval
    interior = None
    if math.isfinite(iv.left):
        interior = iv.left if iv.left_in_state else iv.left + 1e-6 * (1.0 + abs(iv.left))
    rrc = p.reward.rrc_point
    if rrc is not None:
        return rrc if interior is None else max(rrc, interior)
    if interior is not None:
        return interior
    return -50.0


def _auto_hi(engine: _Engine, lo: float) -> float:
    """Expand the window upward until the residual is positive and increasing
    across the last octave."""
    span = 1.0 + abs(lo)
    for _ in range(60):
        hi = lo + span
        if not engine.interval.is_interior(hi) and not engine.interval.contains(hi):
            hi = engine.interval.right  # bounded interval: stop at the edge
        r_hi = engine.residual(hi)
        r_mid = engine.residual(lo + 0.5 * span)
        if r_hi > 0.0 and r_mid > 0.0 and r_hi > r_mid:
            return hi
        span *= 2.0
    raise NonConvergent("residual never became positive and increasing; "
                        "cannot localize the threshold window")


def _plateau_edge(grid: _GridResidual, plateau_tol: float, root_tol: float):
    """Smallest x from which the residual stays >= -plateau_tol, refined by
    predicate bisection.  None if the residual is negative near the top."""
    res = np.array([grid.residual(float(x)) for x in grid.nodes])
    mask = res >= -plateau_tol
    if not mask[-1]:
        return None
    j = len(mask) - 1
    while j > 0 and mask[j - 1]:
        j -= 1
    if j == 0:
        return float(grid.nodes[0])
    a, b = float(grid.nodes[j - 1]), float(grid.nodes[j])
    for _ in range(200):
        if b - a <= root_tol:
            break
        mid = 0.5 * (a + b)
        if grid.residual(mid) >= -plateau_tol:
            b = mid
        else:
            a = mid
    return b


def _snap_candidates(engine: _Engine, lo: float, hi: float) -> list[float]:
    cands = [lo]
    if lo < 0.0 < hi:
        cands.append(0.0)
    cands.extend(p for p, _ in engine.d.speed.atoms if lo <= p <= hi)
    cands.extend(p for p in engine.p.reward.kinks if lo <= p <= hi)
    return cands


def _snap(engine, grid, x_hat, lo, hi, plateau_tol, root_tol):
    """Replace x_hat by an exact structural point (atom, kink, window edge)
    when bisection landed within noise distance of one."""
    for cand in sorted(set(_snap_candidates(engine, lo, hi)),
                       key=lambda c: abs(c - x_hat)):
        window = max(1e-7 * (1.0 + abs(cand)), 50.0 * root_tol)
        if cand != x_hat and abs(cand - x_hat) <= window:
            if grid.residual(cand) >= -plateau_tol:
                return cand
        if cand == x_hat:
            return x_hat
    return x_hat


def _log_extra_roots(grid: _GridResidual, x_hat: float, notes: list[str]):
    res = [grid.residual(float(x)) for x in grid.nodes]
    brackets = []
    for i in range(len(res) - 1):
        if (res[i] < 0.0) != (res[i + 1] < 0.0) and grid.nodes[i + 1] < x_hat - 1e-9:
            brackets.append((float(grid.nodes[i]), float(grid.nodes[i + 1])))
    if brackets:
        notes.append(f"additional residual sign changes below the threshold: "
                     f"{brackets[:4]}")


def _assemble(engine: _Engine, x_hat: float, lo: float,
              notes: list[str], opts: SolveOptions) -> Solution:
    p = engine.p
    pair = engine.pair
    g = p.reward.g
    g_star = g(x_hat)
    eq_tol = 1e-6 * (1.0 + abs(g_star))

    res = engine.residual(x_hat)
    green_xx = pair.psi(x_hat) * pair.phi(x_hat) / pair.wronskian
    k = max(res, 0.0) / green_xx
    res_closed = engine.residual_closed(x_hat)

    threshold = ConditionFlag(
        holds=res >= -eq_tol,
        relation="=" if abs(res) <= eq_tol else (">" if res > 0 else "<"))
    closed_bound = ConditionFlag(
        holds=res_closed <= eq_tol,
        relation="=" if abs(res_closed) <= eq_tol else
        ("<" if res_closed < 0 else ">"))

    ok9, note9 = _verify_image_nonnegative(engine, x_hat, opts)
    ok10, note10 = _verify_majorant(engine, x_hat, lo, opts)
    if note9:
        notes.append(note9)
    if note10:
        notes.append(note10)

    image_flag = ConditionFlag(holds=ok9)
    majorant_flag = ConditionFlag(holds=ok10)
    conditions = Conditions(threshold, image_flag, majorant_flag, closed_bound)

    if not ok9 or not ok10:
        status = NOT_ONE_SIDED
    elif not threshold.holds or not closed_bound.holds:
        status = UNVERIFIED
        notes.append("threshold or closed-region bound numerically violated")
    else:
        status = VERIFIED

    rep = RepresentingMeasure(
        atom_point=x_hat, atom_mass=k,
        density=lambda y, a=p.alpha: generator_image(engine.d, p.reward, a, y))
    value = value_function(p, x_hat)
    return Solution(x_star=x_hat, k=k, value=value, rep_measure=rep,
                    conditions=conditions, status=status,
                    diagnostics="; ".join(notes), problem=p)


def _verify_image_nonnegative(engine, x_hat, opts):
    """Sample (alpha - L)g >= 0 on (x_hat, r]."""
    iv = engine.interval
    n = opts.verify_samples
    span = 4.0 * (1.0 + abs(x_hat))
    hi_lin = x_hat + span
    if math.isfinite(iv.right):
        hi_lin = min(hi_lin, iv.right)
    pts = list(np.linspace(x_hat, hi_lin, n // 2 + 2)[1:])
    tail_hi = hi_lin
    for _ in range(6):
        tail_hi = x_hat + (tail_hi - x_hat) * 2.0
        if math.isfinite(iv.right) and tail_hi >= iv.right:
            break
        pts.append(tail_hi)
    for a, _ in engine.d.speed.atoms:
        if a > x_hat:
            pts.append(a)
    for kk in engine.p.reward.kinks:
        if kk > x_hat and iv.is_interior(kk):
            pts.append(kk + 1e-9 * (1.0 + abs(kk)))
    vals = []
    for y in pts:
        if not iv.contains(y):
            continue
        try:
            vals.append((y, engine.image(y)))
        except (NonConvergent, OverflowError):
            continue
    scale = 1.0 + float(np.median([abs(v) for _, v in vals])) if vals else 1.0
    tol = 1e-7 * scale
    bad = [(y, v) for y, v in vals if v < -tol]
    if bad:
        y, v = bad[0]
        return False, f"generator image negative right of threshold: ({y:.6g}, {v:.3e})"
    return True, ""


def _verify_majorant(engine, x_hat, lo, opts):
    """Sample g(x) <= g(x_hat) psi(x)/psi(x_hat) for x < x_hat."""
    iv = engine.interval
    pair = engine.pair
    g = engine.p.reward.g
    g_star = g(x_hat)
    psi_star = pair.psi(x_hat)
    n = opts.verify_samples
    span = 4.0 * (1.0 + abs(x_hat))
    lo_lin = x_hat - span
    if math.isfinite(iv.left):
        lo_lin = max(lo_lin, iv.left if iv.left_in_state
                     else iv.left + 1e-9 * (1.0 + abs(iv.left)))
    pts = list(np.linspace(lo_lin, x_hat, n // 2 + 2)[:-1])
    far = lo_lin
    for _ in range(8):  # reach further left on unbounded intervals
        far = x_hat - (x_hat - far) * 2.0
        if iv.contains(far):
            pts.append(far)
    for step in range(4, 24, 4):  # approach the threshold geometrically
        pts.append(x_hat - span * 2.0 ** (-step))
    for kk in engine.p.reward.kinks:
        if kk < x_hat and iv.contains(kk):
            pts.append(kk)
    for a, _ in engine.d.speed.atoms:
        if a < x_hat and iv.contains(a):
            pts.append(a)
    tol = 1e-7 * (1.0 + abs(g_star))
    for x in pts:
        if not iv.contains(x) or x >= x_hat:
            continue
        try:
            bound = g_star * pair.psi(x) / psi_star
            exceeds = g(x) > bound + tol
        except OverflowError:
            continue
        if exceeds:
            return False, (f"payoff exceeds the scaled increasing solution at "
                           f"{x:.6g}: g={g(x):.6g} > {bound:.6g}")
    return True, ""


# --------------------------------------------------------------------------
# Sufficient-condition scan
# --------------------------------------------------------------------------

def solve_sufficient(p: Problem, opts: SolveOptions | None = None) -> Solution:
    """Threshold via the cumulative scan x* = min{x : b(x) >= 0} with
    b(x) the psi-weighted integral of the image measure over [l, x].

    Requires a single sign change of the image measure (the measure includes
    the singular kink parts of g, which enter as negative atoms) and positive
    total psi-weighted mass.  The located threshold is handed to the full
    verification pipeline, so the returned Solution is directly comparable
    with :func:`solve_right_sided`'s.
    """
    opts = opts or SolveOptions()
    if p.side == "left":
        return _map_back_left(p, solve_sufficient(_reflected_problem(p), opts))

    engine = _Engine(p, opts)
    lo = _search_lo(p)
    hi = opts.search_hi if opts.search_hi is not None else _auto_hi(engine, lo)

    kink_atoms = _kink_atoms(engine)
    lo_grid = lo
    if kink_atoms:
        lo_grid = min(lo, min(q for q, _ in kink_atoms) - 0.1 * (1.0 + abs(lo)))

    nodes = sorted(set(np.linspace(lo_grid, hi, opts.grid_points).tolist())
                   | {q for q, _ in kink_atoms}
                   | {a for a, _ in engine.d.speed.atoms if lo_grid < a <= hi}
                   | ({0.0} if lo_grid < 0.0 < hi else set()))
    nodes = np.array(nodes)

    psi = engine.pair.psi
    image = engine.image
    speed = engine.d.speed
    iv = engine.interval

    c_change = _check_single_sign_change(engine, nodes, kink_atoms)

    cumulative = np.empty(len(nodes))
    head_lo = iv.left
    base = 0.0
    if head_lo < nodes[0]:
        base = integrate_against_measure(
            lambda y: psi(y) * image(y), speed,
            RegionSpec(head_lo, float(nodes[0]), iv.left_in_state, True),
            opts.quad)
    for q, mass in kink_atoms:
        if q <= nodes[0]:
            base += psi(q) * mass
    cumulative[0] = base
    for i in range(1, len(nodes)):
        a, b = float(nodes[i - 1]), float(nodes[i])
        seg = integrate_against_measure(
            lambda y: psi(y) * image(y), speed,
            RegionSpec(a, b, False, True), opts.quad)
        for q, mass in kink_atoms:
            if a < q <= b:
                seg += psi(q) * mass
        cumulative[i] = cumulative[i - 1] + seg

    if cumulative[-1] <= 0.0:
        raise HypothesisViolated(
            "psi-weighted cumulative mass never becomes positive on the window")

    # b is non-increasing up to the sign change, so the minimizing threshold
    # is its first crossing at or above it.
    eligible = nodes >= c_change - 1e-12 * (1.0 + abs(c_change))
    crossing = eligible & (cumulative >= 0.0)
    if not crossing.any():
        raise HypothesisViolated(
            "cumulative mass stays negative above the sign change")
    idx = int(np.argmax(crossing))
    if idx == 0:
        x_hat = float(nodes[0])
    else:
        anchor = float(nodes[idx - 1])
        base_val = float(cumulative[idx - 1])

        def b_of(x: float) -> float:
            # speed atoms inside the region are counted by the quadrature
            if x <= anchor:
                return base_val
            seg = integrate_against_measure(
                lambda y: psi(y) * image(y), speed,
                RegionSpec(anchor, x, False, True), opts.quad)
            extra = sum(psi(q) * mass for q, mass in kink_atoms
                        if anchor < q <= x)
            return base_val + seg + extra

        xa = max(anchor, c_change)
        xb = float(nodes[idx])
        if b_of(xa) >= 0.0:
            x_hat = xa
        else:
            for _ in range(200):
                if xb - xa <= opts.root_tol:
                    break
                mid = 0.5 * (xa + xb)
                if b_of(mid) >= 0.0:
                    xb = mid
                else:
                    xa = mid
            x_hat = xb

    grid = _GridResidual(engine, lo, hi, max(256, opts.grid_points // 4))
    res_scale = 1.0 + abs(engine.p.reward.g(x_hat))
    x_hat = _snap(engine, grid, x_hat, lo, hi, 1e-8 * res_scale, opts.root_tol)
    return _assemble(engine, x_hat, lo,
                     ["threshold from the cumulative-mass scan"], opts)


def _kink_atoms(engine: _Engine) -> list[tuple[float, float]]:
    """Singular part of the image measure: each kink of g contributes a
    negative atom of size the s-derivative jump."""
    out = []
    s = engine.d.scale.value
    g = engine.p.reward.g
    for q in engine.p.reward.kinks:
        if not engine.interval.is_interior(q):
            continue
        jump = (one_sided_derivative(g, s, q, "right")
                - one_sided_derivative(g, s, q, "left"))
        if abs(jump) > 1e-12:
            out.append((q, -jump))
    return out


def _check_single_sign_change(engine, nodes, kink_atoms) -> float:
    """Validate the single sign change of the image measure (density sampled
    on the nodes, plus the singular kink atoms) and return its location."""
    vals = []
    for x in nodes:
        try:
            vals.append(engine.image(float(x)))
        except NonConvergent:
            vals.append(math.nan)
    finite = [v for v in vals if math.isfinite(v)]
    scale = 1.0 + (float(np.median(np.abs(finite))) if finite else 0.0)
    tol = 1e-9 * scale
    signs = [0 if abs(v) <= tol or math.isnan(v) else (1 if v > 0 else -1)
             for v in vals]
    compact = [s for s in signs if s != 0]
    collapsed = [s for i, s in enumerate(compact) if i == 0 or s != compact[i - 1]]
    if len(collapsed) > 2 or collapsed == [1, -1]:
        raise HypothesisViolated(
            f"generator image changes sign more than once: pattern {collapsed}")
    negative_kinks = [q for q, mass in kink_atoms if mass < 0]
    has_negative = (-1 in collapsed) or bool(negative_kinks)
    if not has_negative:
        raise HypothesisViolated(
            "image measure has no negative part; the scan would stop "
            "immediately (payoff already excessive or inversion invalid)")
    c_density = -math.inf
    for sgn, x in zip(reversed(signs), reversed(nodes)):
        if sgn == -1:
            c_density = float(x)
            break
    c_kink = max(negative_kinks) if negative_kinks else -math.inf
    return max(c_density, c_kink)


# --------------------------------------------------------------------------
# Left-sided problems via reflection
# --------------------------------------------------------------------------

def _reflected_problem(p: Problem) -> Problem:
    from .diffusion import reflect
    return Problem(diffusion=reflect(p.diffusion), reward=p.reward.reflect(),
                   alpha=p.alpha, side="right")


def _map_back_left(p: Problem, sol: Solution) -> Solution:
    if not math.isfinite(sol.x_star):
        return replace(sol, problem=p)
    x_star = -sol.x_star
    mirrored_value = sol.value
    rep = sol.rep_measure
    return Solution(
        x_star=x_star,
        k=sol.k,
        value=lambda x: mirrored_value(-x),
        rep_measure=None if rep is None else RepresentingMeasure(
            atom_point=x_star, atom_mass=rep.atom_mass,
            density=lambda y: rep.density(-y)),
        conditions=sol.conditions,
        status=sol.status,
        diagnostics=(sol.diagnostics + "; solved by reflection").strip("; "),
        problem=p)
