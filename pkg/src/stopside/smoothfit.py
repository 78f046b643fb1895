"""Post-solution smooth-fit diagnostics at the threshold.

Measures one-sided derivatives of the value function at the threshold in
three coordinates (x, the scale function, and the increasing fundamental
solution psi), classifies smooth fit and scale smooth fit, and records which
sufficient conditions predicted the outcome:

* ``representation``   - the representing measure has no atom at the
                         threshold (k = 0): differentiability w.r.t. psi;
* ``no_speed_atom``    - additionally the speed measure does not charge the
                         threshold: scale smooth fit;
* ``chain_rule``       - additionally g and psi (or s) are differentiable
                         with nonzero slope there: classical smooth fit.

The last table column, d(V/phi)/ds, is reported as a numeric finding only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from .errors import NonConvergent, OutOfDomain
from .numerics import one_sided_derivative
from .solver import Problem, Solution, VERIFIED

PREDICTS_DV_DPSI = "representation"
PREDICTS_SSF = "no_speed_atom"
PREDICTS_SF = "chain_rule"


@dataclass(frozen=True)
class SmoothFitReport:
    sf: str                      # "holds" | "fails" | "inconclusive"
    ssf: str
    dv_dpsi_exists: bool
    dv_dpsi_left: float
    dv_dpsi_right: float
    dv_ds_left: float
    dv_ds_right: float
    dv_dx_left: float
    dv_dx_right: float
    dv_over_phi_ds_left: float
    dv_over_phi_ds_right: float
    dv_over_phi_ds_exists: bool
    predicted_by: tuple[str, ...]
    tol: float


def _one_sided_pair(f, coord, x, tol):
    try:
        left = one_sided_derivative(f, coord, x, "left")
    except NonConvergent:
        left = math.nan
    try:
        right = one_sided_derivative(f, coord, x, "right")
    except NonConvergent:
        right = math.nan
    if math.isnan(left) or math.isnan(right):
        return left, right, "inconclusive", False
    match = abs(left - right) <= tol * (1.0 + abs(left))
    return left, right, ("holds" if match else "fails"), match


def diagnose(p: Problem, sol: Solution, tol: float = 1e-6) -> SmoothFitReport:
    """Measure the smooth-fit behavior of a verified solution at its
    threshold and mark which sufficient conditions apply."""
    if sol.status != VERIFIED:
        raise ValueError("diagnose requires a Verified solution")
    x_star = sol.x_star
    d = p.diffusion
    if not d.interval.is_interior(x_star):
        raise OutOfDomain("smooth-fit diagnostics need an interior threshold")
    pair = d.fundamental_pair_for(p.alpha)
    value = sol.value

    dx_l, dx_r, sf, _ = _one_sided_pair(value, lambda t: t, x_star, tol)
    ds_l, ds_r, ssf, _ = _one_sided_pair(value, d.scale.value, x_star, tol)
    dpsi_l, dpsi_r, _, dpsi_ok = _one_sided_pair(value, pair.psi, x_star, tol)

    ratio = lambda x: value(x) / pair.phi(x)
    dvp_l, dvp_r, _, dvp_ok = _one_sided_pair(ratio, d.scale.value, x_star, tol)

    predicted = []
    k_tol = tol * (1.0 + abs(p.reward.g(x_star)))
    if sol.k <= k_tol:
        predicted.append(PREDICTS_DV_DPSI)
        if d.speed.atom_mass_at(x_star) == 0.0:
            predicted.append(PREDICTS_SSF)
            if _chain_rule_applies(p, pair, x_star, tol):
                predicted.append(PREDICTS_SF)

    return SmoothFitReport(
        sf=sf, ssf=ssf,
        dv_dpsi_exists=dpsi_ok,
        dv_dpsi_left=dpsi_l, dv_dpsi_right=dpsi_r,
        dv_ds_left=ds_l, dv_ds_right=ds_r,
        dv_dx_left=dx_l, dv_dx_right=dx_r,
        dv_over_phi_ds_left=dvp_l, dv_over_phi_ds_right=dvp_r,
        dv_over_phi_ds_exists=dvp_ok,
        predicted_by=tuple(predicted),
        tol=tol,
    )


def _chain_rule_applies(p: Problem, pair, x_star: float, tol: float) -> bool:
    """g differentiable at the threshold and psi (or s) differentiable there
    with nonzero slope."""
    try:
        g_l = one_sided_derivative(p.reward.g, lambda t: t, x_star, "left")
        g_r = one_sided_derivative(p.reward.g, lambda t: t, x_star, "right")
    except NonConvergent:
        return False
    if abs(g_l - g_r) > tol * (1.0 + abs(g_l)):
        return False
    psi_l = pair.psi_ds_left(x_star) * p.diffusion.scale.deriv_left(x_star)
    psi_r = pair.psi_ds_right(x_star) * p.diffusion.scale.deriv_right(x_star)
    psi_smooth = (abs(psi_l - psi_r) <= tol * (1.0 + abs(psi_l))
                  and abs(psi_r) > tol)
    s_l = p.diffusion.scale.deriv_left(x_star)
    s_r = p.diffusion.scale.deriv_right(x_star)
    s_smooth = abs(s_l - s_r) <= tol * (1.0 + abs(s_l)) and abs(s_r) > tol
    return psi_smooth or s_smooth


def table_row(p: Problem, sol: Solution, tol: float = 1e-6) -> dict:
    """One summary record per solved problem: threshold, the two inequality
    relations, combined smooth-fit flag, and the two existence columns."""
    report = None
    if sol.status == VERIFIED and p.diffusion.interval.is_interior(sol.x_star):
        report = diagnose(p, sol, tol)
    cond = sol.conditions
    row = {
        "alpha": p.alpha,
        "x_star": sol.x_star,
        "threshold_relation": cond.threshold.relation if cond else "?",
        "closed_bound_relation": cond.closed_bound.relation if cond else "?",
        "smooth_fit": _yesno(report and report.sf == "holds"
                             and report.ssf == "holds"),
        "dv_dpsi": _yesno(report and report.dv_dpsi_exists),
        "dv_over_phi_ds": _yesno(report and report.dv_over_phi_ds_exists),
        "status": sol.status,
    }
    row["text"] = ("alpha={alpha:g} | x*={x_star:.6g} | {threshold_relation} | "
                   "{closed_bound_relation} | SF&SSF {smooth_fit} | "
                   "dV/dpsi {dv_dpsi} | d(V/phi)/ds {dv_over_phi_ds}"
                   .format(**row))
    return row


def _yesno(flag) -> str:
    return "yes" if flag else "no"
