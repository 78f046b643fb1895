"""Independent verification of solver outputs.

Three oracles, none of which shares code with the threshold machinery:

* ``ratio_argmax``    - among threshold rules the expected discounted payoff
                        is g(z) psi(x)/psi(z), so the best threshold
                        maximizes g/psi on a grid;
* ``chain_value``     - value iteration on a birth-death chain placed
                        uniformly in the scale coordinate (up/down exactly
                        1/2; speed effects live in the holding times, atoms
                        inflate them);
* ``mc_policy_value`` - Monte Carlo estimate of the discounted payoff of
                        "stop at the first hit of z", with exact one-step
                        transition sampling for the Brownian family.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_banded
from scipy.special import ndtr, ndtri

from .errors import NonConvergent, Unsimulable
from .solver import Problem


# --------------------------------------------------------------------------
# Ratio oracle
# --------------------------------------------------------------------------

def ratio_argmax(p: Problem, grid) -> float:
    """Grid point maximizing g/psi (ties broken toward the largest point).

    For a genuinely right-sided problem this equals the optimal threshold up
    to the grid spacing."""
    pair = p.diffusion.fundamental_pair_for(p.alpha)
    g = p.reward.g
    zs = np.asarray(grid, dtype=float)
    vals = np.array([g(float(z)) / pair.psi(float(z)) for z in zs])
    best = np.flatnonzero(vals == vals.max())
    return float(zs[best[-1]])


# --------------------------------------------------------------------------
# Birth-death chain oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainApprox:
    """Chain on nodes uniform in the scale coordinate.

    ``expected_hold`` is the expected exit time of the dual cell (atom mass
    included); the per-step discount is 1/(1 + alpha * hold), which matches
    the resolvent to first order and keeps the iteration contractive.
    """

    grid: np.ndarray           # node positions in x
    s_grid: np.ndarray         # node positions in s
    h: float                   # s-spacing
    up_prob: np.ndarray
    down_prob: np.ndarray
    expected_hold: np.ndarray
    discount_per_step: np.ndarray
    bottom_reflecting: bool


def _invert_scale(s: Callable[[float], float], target: float,
                  lo: float, hi: float) -> float:
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if s(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _simpson(f, a, b):
    return (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))


def build_chain(p: Problem, x_lo: float, x_hi: float, h_s: float) -> ChainApprox:
    """Chain over [x_lo, x_hi] with s-spacing <= h_s.  If a speed atom lies
    inside, the grid is shifted so one node sits exactly on it."""
    d = p.diffusion
    s = d.scale.value
    s_lo, s_hi = s(x_lo), s(x_hi)
    n = int(math.ceil((s_hi - s_lo) / h_s))
    h = (s_hi - s_lo) / n
    s_nodes = s_lo + h * np.arange(n + 1)
    inside = [a for a, _ in d.speed.atoms if x_lo < a < x_hi]
    if inside:
        s_atom = s(inside[0])
        shift = (s_atom - s_lo) - round((s_atom - s_lo) / h) * h
        s_nodes = s_nodes + shift
        s_nodes = s_nodes[(s_nodes >= s_lo - 1e-12) & (s_nodes <= s_hi + 1e-12)]
    grid = np.array([_invert_scale(s, float(t), x_lo, x_hi) for t in s_nodes])
    for a, _ in d.speed.atoms:
        if x_lo < a < x_hi:
            grid[int(np.argmin(np.abs(grid - a)))] = a

    bottom_reflecting = (math.isfinite(d.interval.left)
                         and d.interval.left_in_state
                         and abs(x_lo - d.interval.left) < 1e-12)

    m = len(grid)
    dens = d.speed.density
    hold = np.zeros(m)
    for i in range(m):
        xi = float(grid[i])
        si = float(s_nodes[i]) if i < len(s_nodes) else s(xi)
        atom = d.speed.atom_mass_at(xi, atol=1e-12)
        if i == 0:
            if bottom_reflecting:
                xp = float(grid[1])
                hold[0] = (h * atom
                           + _simpson(lambda y: (s(float(grid[1])) - s(y)) * dens(y), xi, xp))
            continue  # non-reflecting bottom handled by the boundary condition
        if i == m - 1:
            continue  # top node is absorbing
        xm, xp = float(grid[i - 1]), float(grid[i + 1])
        left = _simpson(lambda y: 0.5 * (s(y) - s(xm)) * dens(y), xm, xi)
        right = _simpson(lambda y: 0.5 * (s(xp) - s(y)) * dens(y), xi, xp)
        hold[i] = left + right + 0.5 * h * atom

    discount = 1.0 / (1.0 + p.alpha * hold)
    up = np.full(m, 0.5)
    down = np.full(m, 0.5)
    if bottom_reflecting:
        up[0], down[0] = 1.0, 0.0
    return ChainApprox(grid=grid, s_grid=np.array([s(float(x)) for x in grid]),
                       h=h, up_prob=up, down_prob=down, expected_hold=hold,
                       discount_per_step=discount,
                       bottom_reflecting=bottom_reflecting)


def chain_value(p: Problem, chain: ChainApprox, tol: float = 1e-9) -> np.ndarray:
    """Fixed point of V = max(g, discount * (up V_up + down V_down)).

    Bellman sweeps accelerated by exact policy evaluation (banded solve);
    the returned values satisfy ||V - T V||_inf <= tol * scale.  The top
    node is absorbing at g; the bottom node either reflects or carries the
    analytic continuation value via the hitting transform.
    """
    grid = chain.grid
    m = len(grid)
    g = np.array([p.reward.g(float(x)) for x in grid])
    scale = 1.0 + float(np.max(np.abs(g)))
    pair = p.diffusion.fundamental_pair_for(p.alpha)
    psi_ratio = pair.psi(float(grid[0])) / pair.psi(float(grid[1]))
    disc = chain.discount_per_step
    up, down = chain.up_prob, chain.down_prob

    def bellman(v):
        w = np.empty_like(v)
        w[1:-1] = np.maximum(
            g[1:-1], disc[1:-1] * (up[1:-1] * v[2:] + down[1:-1] * v[:-2]))
        if chain.bottom_reflecting:
            w[0] = max(g[0], disc[0] * v[1])
        else:
            w[0] = max(g[0], psi_ratio * v[1])
        w[-1] = g[-1]
        return w

    def policy_solve(v):
        # Identity rows for stopped nodes, three-point coupling otherwise.
        cont = v > g + 1e-12 * scale
        cont[-1] = False
        ab = np.zeros((3, m))
        rhs = np.where(cont, 0.0, g)
        ab[1, :] = 1.0
        for i in range(1, m - 1):
            if cont[i]:
                ab[0, i + 1] = -disc[i] * up[i]
                ab[2, i - 1] = -disc[i] * down[i]
        if cont[0]:
            coef = disc[0] if chain.bottom_reflecting else psi_ratio
            ab[0, 1] = -coef
        sol = solve_banded((1, 1), ab, rhs)
        return np.maximum(sol, g)

    v = np.array(g)
    budget = 600
    for cycle in range(budget):
        for _ in range(24):
            v = bellman(v)
        v = policy_solve(v)
        w = bellman(v)
        gap = float(np.max(np.abs(w - v)))
        v = w
        if gap <= tol * scale:
            return v
    raise NonConvergent(f"chain iteration exceeded budget (gap {gap:.3e})")


def chain_stopping_frontier(chain: ChainApprox, values: np.ndarray,
                            g_vals: Optional[np.ndarray] = None,
                            p: Optional[Problem] = None) -> float:
    """Smallest node from which stopping is optimal all the way up."""
    if g_vals is None:
        g_vals = np.array([p.reward.g(float(x)) for x in chain.grid])
    scale = 1.0 + float(np.max(np.abs(g_vals)))
    stopped = values <= g_vals + 1e-7 * scale
    idx = len(stopped) - 1
    while idx > 0 and stopped[idx - 1]:
        idx -= 1
    return float(chain.grid[idx])


# --------------------------------------------------------------------------
# Monte Carlo oracle
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n_paths: int
    seed: int


_CHUNK = 16384


def mc_policy_value(p: Problem, x0: float, z: float, n_paths: int,
                    seed: int, dt: Optional[float] = None) -> McEstimate:
    """Estimate E_x0[exp(-alpha H_z)] g(z) by path simulation.

    Paths are generated in chunks, each chunk from its own counter-derived
    Philox stream, and reduced in chunk order, so the estimate depends only
    on (seed, n_paths).  Paths outliving 50/alpha discount-time units are
    censored; the censoring bias bound is folded into the stderr.
    """
    d = p.diffusion
    g = p.reward.g
    if p.side != "right":
        raise Unsimulable("Monte Carlo policy evaluation is right-sided; "
                          "reflect the problem first")
    if x0 >= z:
        return McEstimate(mean=g(x0), stderr=0.0, n_paths=n_paths, seed=seed)
    spec = d.stepper
    if not spec:
        raise Unsimulable(f"no path stepper for diffusion {d.name or '<user>'}")
    kind = spec["kind"]
    if dt is None:
        dt = 2e-4 if kind == "reflected_bm" else 1e-2
    t_max = 50.0 / p.alpha
    gz = g(z)

    total = 0.0
    total_sq = 0.0
    censored = 0
    remaining = n_paths
    chunk_idx = 0
    while remaining > 0:
        n = min(_CHUNK, remaining)
        key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | chunk_idx
        rng = np.random.Generator(np.random.Philox(key=key))
        disc_sum, disc_sq, cens = _simulate_chunk(kind, spec, x0, z, p.alpha,
                                                  t_max, dt, rng, n)
        total += disc_sum * gz
        total_sq += disc_sq * gz * gz
        censored += cens
        remaining -= n
        chunk_idx += 1

    mean = total / n_paths
    var = max(total_sq / n_paths - mean * mean, 0.0)
    stderr = math.sqrt(var / n_paths)
    stderr += math.exp(-p.alpha * t_max) * abs(gz) * (censored / n_paths + 1.0 / n_paths)
    return McEstimate(mean=mean, stderr=stderr, n_paths=n_paths, seed=seed)


def _simulate_chunk(kind, spec, x0, z, alpha, t_max, dt, rng, n):
    """One chunk of paths; returns (sum of discounts at hit, sum of squares,
    number censored)."""
    if kind == "bm":
        step = _step_bm
        state = {"x": np.full(n, float(x0))}
    elif kind == "gbm":
        step = _step_gbm
        state = {"lx": np.full(n, math.log(x0)),
                 "mu": spec["mu"], "sigma": spec["sigma"], "lz": math.log(z)}
    elif kind == "reflected_bm":
        step = _step_reflected
        state = {"x": np.full(n, float(x0)), "delta": spec["delta"]}
    elif kind == "skew":
        step = _step_skew
        state = {"x": np.full(n, float(x0)), "beta": spec["beta"]}
    elif kind == "sticky":
        step = _step_sticky
        state = {"x": np.full(n, float(x0)), "theta": spec["theta"]}
    else:
        raise Unsimulable(f"unknown stepper kind {kind!r}")

    clock = np.zeros(n)
    disc_sum = 0.0
    disc_sq = 0.0
    censored = 0
    active = np.arange(n)
    max_steps = int(math.ceil(t_max / dt)) + 1
    for _ in range(max_steps):
        if active.size == 0:
            break
        hit_time, keep = step(state, active, z, dt, rng, clock)
        if hit_time.size:
            discs = np.exp(-alpha * hit_time)
            disc_sum += float(discs.sum())
            disc_sq += float((discs * discs).sum())
        active = active[keep]
        expired = clock[active] >= t_max
        censored += int(expired.sum())
        active = active[~expired]
    censored += active.size
    return disc_sum, disc_sq, censored


def _bridge_cross(x, y, z, var):
    """P(Brownian bridge from x to y with variance var crosses level z)."""
    out = np.ones_like(x)
    below = (x < z) & (y < z)
    out[below] = np.exp(-2.0 * (z - x[below]) * (z - y[below]) / var)
    return out


def _step_bm(state, active, z, dt, rng, clock):
    x = state["x"][active]
    y = x + math.sqrt(dt) * rng.standard_normal(x.size)
    cross = rng.random(x.size) < _bridge_cross(x, y, z, dt)
    t_hit = clock[active[cross]] + 0.5 * dt
    clock[active] += dt
    state["x"][active] = y
    return t_hit, ~cross


def _step_gbm(state, active, z, dt, rng, clock):
    lx = state["lx"][active]
    mu, sigma, lz = state["mu"], state["sigma"], state["lz"]
    ly = lx + (mu - 0.5 * sigma**2) * dt + sigma * math.sqrt(dt) * rng.standard_normal(lx.size)
    cross = rng.random(lx.size) < _bridge_cross(lx, ly, lz, sigma**2 * dt)
    t_hit = clock[active[cross]] + 0.5 * dt
    clock[active] += dt
    state["lx"][active] = ly
    return t_hit, ~cross


def _step_reflected(state, active, z, dt, rng, clock):
    x = state["x"][active]
    y = x - state["delta"] * dt + math.sqrt(dt) * rng.standard_normal(x.size)
    cross = rng.random(x.size) < _bridge_cross(x, y, z, dt)
    t_hit = clock[active[cross]] + 0.5 * dt
    clock[active] += dt
    state["x"][active] = np.abs(y)  # symmetrized reflection at 0
    return t_hit, ~cross


def _step_skew(state, active, z, dt, rng, clock):
    """Exact one-step transition of skew Brownian motion.

    Decomposition: either the path avoids 0 (endpoint keeps the sign, law of
    killed BM) or it touches 0, in which case the terminal magnitude follows
    the folded law and the terminal sign is positive with probability beta,
    independently of the magnitude."""
    beta = state["beta"]
    x = state["x"][active]
    sd = math.sqrt(dt)
    a = np.abs(x)
    sgn = np.where(x >= 0.0, 1.0, -1.0)
    y_mag = a + sd * rng.standard_normal(x.size)  # step of the |x|-frame

    same_side = y_mag > 0.0
    p_hit = np.ones_like(x)
    p_hit[same_side] = np.exp(-2.0 * a[same_side] * y_mag[same_side] / dt)
    hit0 = rng.random(x.size) < p_hit

    new_x = sgn * y_mag  # kept only where the path avoided 0
    if np.any(hit0):
        ah = a[hit0]
        u = rng.random(ah.size)
        w = sd * ndtri(np.maximum(u * ndtr(-ah / sd), 1e-320))
        v = -w - ah
        pos = rng.random(ah.size) < beta
        new_x[hit0] = np.where(pos, v, -v)

    prev = x
    cross = new_x >= z
    no_hit = ~hit0
    both_pos = no_hit & (prev > 0.0) & (new_x > 0.0) & (new_x < z) & (prev < z)
    if np.any(both_pos):
        pb = np.exp(-2.0 * (z - prev[both_pos]) * (z - new_x[both_pos]) / dt)
        bridge = np.zeros_like(cross)
        bridge[both_pos] = rng.random(int(both_pos.sum())) < pb
        cross = cross | bridge

    t_hit = clock[active[cross]] + 0.5 * dt
    clock[active] += dt
    state["x"][active] = new_x
    return t_hit, ~cross


def _step_sticky(state, active, z, dt, rng, clock):
    """Exact Brownian step plus exact local-time sampling; the discount
    clock advances by dt + theta * (local time gained)."""
    theta = state["theta"]
    x = state["x"][active]
    sd = math.sqrt(dt)
    y = x + sd * rng.standard_normal(x.size)

    same_side = (x > 0.0) == (y > 0.0)
    p_hit = np.ones_like(x)
    p_hit[same_side] = np.exp(-2.0 * np.abs(x[same_side]) * np.abs(y[same_side]) / dt)
    hit0 = rng.random(x.size) < p_hit

    d_local = np.zeros_like(x)
    if np.any(hit0):
        a = np.abs(x[hit0]) + np.abs(y[hit0])
        u = np.maximum(rng.random(int(hit0.sum())), 1e-320)
        d_local[hit0] = np.sqrt(a * a - 2.0 * dt * np.log(u)) - a

    d_clock = dt + theta * d_local
    cross = y >= z
    below = (x < z) & (y < z)
    if np.any(below):
        pb = np.exp(-2.0 * (z - x[below]) * (z - y[below]) / dt)
        bridge = np.zeros_like(cross)
        bridge[below] = rng.random(int(below.sum())) < pb
        cross = cross | bridge

    t_hit = clock[active[cross]] + 0.5 * d_clock[cross]
    clock[active] += d_clock
    state["x"][active] = y
    return t_hit, ~cross
