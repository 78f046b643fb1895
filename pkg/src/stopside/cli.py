"""Command-line front end: solve, sweep, catalog, oracle.

Configs are JSON documents validated against a closed schema (unknown keys
rejected).  Reports are JSON with a top-level schema_version and are
byte-deterministic for a fixed config and seed (timings excluded).  Exit
codes: 0 verified, 2 not one-sided / unverified, 3 input error, 4 numeric
failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
import time
from dataclasses import replace
from typing import Optional

import jsonschema
import numpy as np

from . import oracle as oracle_mod
from .catalog import CATALOG, build_reward
from .errors import (
    DivergentIntegral,
    HypothesisViolated,
    NegativeReward,
    NoRoot,
    NonConvergent,
    OutOfDomain,
    ParameterOutOfRange,
    ParseError,
    StopsideError,
    Unsimulable,
)
from .smoothfit import diagnose, table_row
from .solver import (
    Problem,
    SolveOptions,
    VERIFIED,
    solve_right_sided,
    solve_sufficient,
)

SCHEMA_VERSION = 1
log = logging.getLogger("stopside")

_INPUT_ERRORS = (ParseError, ParameterOutOfRange, NegativeReward)
_NUMERIC_ERRORS = (NonConvergent, DivergentIntegral, NoRoot, OutOfDomain,
                   HypothesisViolated, Unsimulable)

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["diffusion", "reward", "alpha"],
    "properties": {
        "diffusion": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": sorted(CATALOG)},
                "params": {
                    "type": "object",
                    "additionalProperties": {"type": "number"},
                },
            },
        },
        "reward": {
            "type": "object",
            "additionalProperties": False,
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["call", "shifted_call", "exponential",
                                   "expression"]},
                "strike": {"type": "number"},
                "shift": {"type": "number"},
                "rate": {"type": "number"},
                "text": {"type": "string"},
            },
        },
        "alpha": {"type": "number", "exclusiveMinimum": 0},
        "side": {"enum": ["right", "left"]},
        "rrc_point": {"type": "number"},
        "solve": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "search_hi": {"type": "number"},
                "grid_points": {"type": "integer", "minimum": 16},
                "root_tol": {"type": "number", "exclusiveMinimum": 0},
                "verify_samples": {"type": "integer", "minimum": 8},
                "run_rrc_check": {"type": "boolean"},
            },
        },
        "oracle": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid_lo": {"type": "number"},
                "grid_hi": {"type": "number"},
                "grid_n": {"type": "integer", "minimum": 2},
                "mc_paths": {"type": "integer", "minimum": 0},
                "seed": {"type": "integer"},
                "chain_h": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "lo": {"type": "number"},
                "hi": {"type": "number"},
                "n": {"type": "integer", "minimum": 2},
            },
        },
    },
}

_REWARD_REQUIRED = {"exponential": "rate", "expression": "text"}


class ConfigError(StopsideError):
    def __init__(self, message: str, field: str = ""):
        super().__init__(message)
        self.field = field


def validate_config(config: dict) -> None:
    try:
        jsonschema.validate(config, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(exc.message, field=path) from exc
    kind = config["reward"]["kind"]
    needed = _REWARD_REQUIRED.get(kind)
    if needed and needed not in config["reward"]:
        raise ConfigError(f"reward kind {kind!r} requires field {needed!r}",
                          field=f"reward/{needed}")


def build_problem(config: dict, side_override: Optional[str] = None,
                  tol_override: Optional[float] = None):
    validate_config(config)
    entry = CATALOG[config["diffusion"]["name"]]
    d = entry.construct(**config["diffusion"].get("params", {}))
    rw = build_reward(d, config["reward"])
    if "rrc_point" in config:
        rw = replace(rw, rrc_point=config["rrc_point"])
    side = side_override or config.get("side", "right")
    problem = Problem(diffusion=d, reward=rw, alpha=config["alpha"], side=side)
    solve_cfg = dict(config.get("solve", {}))
    if tol_override is not None:
        solve_cfg["root_tol"] = tol_override
    opts = SolveOptions(**solve_cfg)
    return problem, opts


def _condition_dict(cond) -> Optional[dict]:
    if cond is None:
        return None
    return {
        name: {"holds": flag.holds, "relation": flag.relation}
        for name, flag in (
            ("threshold", cond.threshold),
            ("image_nonnegative", cond.image_nonnegative),
            ("majorant", cond.majorant),
            ("closed_bound", cond.closed_bound),
        )
    }


def _value_samples(p: Problem, sol, config: dict) -> list[list[float]]:
    if not math.isfinite(sol.x_star):
        return []
    cfg = config.get("samples", {})
    span = 2.0 * (1.0 + abs(sol.x_star))
    lo = cfg.get("lo", sol.x_star - span)
    hi = cfg.get("hi", sol.x_star + span)
    n = cfg.get("n", 201)
    iv = p.diffusion.interval
    if math.isfinite(iv.left):
        pad = 0.0 if iv.left_in_state else 1e-9 * (1.0 + abs(iv.left))
        lo = max(lo, iv.left + pad)
    if math.isfinite(iv.right):
        hi = min(hi, iv.right)
    pair = p.diffusion.fundamental_pair_for(p.alpha)
    g = p.reward.g
    base = pair.psi if p.side == "right" else pair.phi
    scale_val = g(sol.x_star) / base(sol.x_star)
    rows = []
    for x in np.linspace(lo, hi, n):
        x = float(x)
        if not iv.contains(x):
            continue
        rows.append([x, g(x), sol.value(x), scale_val * base(x)])
    return rows


def _smooth_fit_dict(p: Problem, sol) -> Optional[dict]:
    if sol.status != VERIFIED or not p.diffusion.interval.is_interior(sol.x_star):
        return None
    try:
        rep = diagnose(p, sol)
    except (NonConvergent, OutOfDomain, ValueError):
        return None
    d = dataclasses.asdict(rep)
    d["predicted_by"] = list(rep.predicted_by)
    return d


def _exit_code(status: str) -> int:
    return 0 if status == VERIFIED else 2


def cmd_solve(config: dict, method: str = "threshold",
              side: Optional[str] = None, tol: Optional[float] = None,
              with_oracle: bool = False, seed: Optional[int] = None):
    """Solve one problem; returns (report dict, exit code)."""
    t0 = time.perf_counter()
    problem, opts = build_problem(config, side, tol)
    solver_fn = solve_sufficient if method == "sufficient" else solve_right_sided
    sol = solver_fn(problem, opts)
    t_solve = time.perf_counter() - t0

    report = {
        "schema_version": SCHEMA_VERSION,
        "problem": config,
        "method": method,
        "x_star": sol.x_star,
        "k": sol.k,
        "status": sol.status,
        "conditions": _condition_dict(sol.conditions),
        "smooth_fit": _smooth_fit_dict(problem, sol),
        "value_samples": _value_samples(problem, sol, config),
        "diagnostics": sol.diagnostics,
        "oracle": None,
        "timings": {"solve_s": t_solve},
    }
    if with_oracle and math.isfinite(sol.x_star):
        report["oracle"] = _oracle_comparison(problem, sol, config, seed)
    report["timings"]["total_s"] = time.perf_counter() - t0
    return report, _exit_code(sol.status)


def _oracle_comparison(problem: Problem, sol, config: dict,
                       seed_override: Optional[int] = None) -> dict:
    cfg = config.get("oracle", {})
    x_star = sol.x_star
    span = 1.5 * (1.0 + abs(x_star))
    iv = problem.diffusion.interval
    lo = cfg.get("grid_lo", x_star - span)
    hi = cfg.get("grid_hi", x_star + span)
    if math.isfinite(iv.left):
        pad = 0.0 if iv.left_in_state else 1e-6 * (1.0 + abs(iv.left))
        lo = max(lo, iv.left + pad)
    n = cfg.get("grid_n", 4000)
    grid = np.linspace(lo, hi, n)
    ratio_x = oracle_mod.ratio_argmax(problem, grid)

    h_s = cfg.get("chain_h", 0.005)
    s = problem.diffusion.scale.value
    chain_lo = _invert_offset(problem, x_star, -1.0)
    chain_hi = _invert_offset(problem, x_star, +0.5)
    chain = oracle_mod.build_chain(problem, chain_lo, chain_hi, h_s)
    values = oracle_mod.chain_value(problem, chain)
    frontier = oracle_mod.chain_stopping_frontier(chain, values, p=problem)

    out = {
        "ratio_argmax": ratio_x,
        "ratio_grid_cell": float(grid[1] - grid[0]),
        "ratio_delta": ratio_x - x_star,
        "chain_frontier": frontier,
        "chain_cell_s": chain.h,
        "chain_delta_s": s(frontier) - s(x_star),
        "mc": None,
    }
    n_paths = cfg.get("mc_paths", 0)
    if n_paths:
        seed = seed_override if seed_override is not None else cfg.get("seed", 0)
        x0 = chain_lo
        est = oracle_mod.mc_policy_value(problem, x0, x_star, n_paths, seed)
        analytic = (problem.reward.g(x_star)
                    * problem.diffusion.fundamental_pair_for(problem.alpha).psi(x0)
                    / problem.diffusion.fundamental_pair_for(problem.alpha).psi(x_star))
        out["mc"] = {
            "x0": x0, "mean": est.mean, "stderr": est.stderr,
            "n_paths": est.n_paths, "seed": est.seed,
            "analytic": analytic,
            "z_score": (est.mean - analytic) / est.stderr if est.stderr else 0.0,
        }
    return out


def _invert_offset(problem: Problem, x_star: float, ds: float) -> float:
    """Point whose scale value is s(x_star) + ds, clipped to the interval."""
    iv = problem.diffusion.interval
    s = problem.diffusion.scale.value
    target = s(x_star) + ds
    lo = iv.left if math.isfinite(iv.left) else x_star - 64.0 * (1.0 + abs(x_star))
    hi = iv.right if math.isfinite(iv.right) else x_star + 64.0 * (1.0 + abs(x_star))
    if math.isfinite(iv.left) and not iv.left_in_state:
        lo = lo + 1e-9 * (1.0 + abs(lo))
    if target <= s(lo):
        return lo
    if target >= s(hi):
        return hi
    for _ in range(90):
        mid = 0.5 * (lo + hi)
        if s(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cmd_sweep(config: dict, parameter: str, lo: float, hi: float, n: int):
    """Solve across a parameter range; emits per-row summaries and bisects
    the regime-change points (threshold reaching 0, atom weight k leaving
    or entering 0)."""
    if n < 2:
        raise ConfigError("sweep needs n >= 2", field="n")
    validate_config(config)
    known = {"alpha"} | {name for name, _, _ in
                         CATALOG[config["diffusion"]["name"]].parameter_schema}
    if parameter not in known:
        raise ConfigError(f"unknown sweep parameter {parameter!r} "
                          f"(choose from {sorted(known)})", field="parameter")

    def solve_at(value: float):
        cfg = json.loads(json.dumps(config))
        if parameter == "alpha":
            cfg["alpha"] = value
        else:
            cfg.setdefault("diffusion", {}).setdefault("params", {})[parameter] = value
        problem, opts = build_problem(cfg)
        opts = replace(opts, run_rrc_check=False)
        return problem, solve_right_sided(problem, opts)

    rows = []
    solutions = []
    for value in np.linspace(lo, hi, n):
        value = float(value)
        try:
            problem, sol = solve_at(value)
            row = table_row(problem, sol)
            row["param"] = value
            row["k"] = sol.k
            rows.append(row)
            solutions.append((value, sol))
        except (StopsideError, ValueError) as exc:
            rows.append({"param": value, "status": "error",
                         "error": f"{type(exc).__name__}: {exc}"})
            solutions.append((value, None))

    events = _sweep_events(solve_at, solutions)
    return {
        "schema_version": SCHEMA_VERSION,
        "problem": config,
        "parameter": parameter,
        "rows": rows,
        "events": events,
    }, 0


def _sweep_events(solve_at, solutions, target: float = 0.0,
                  param_tol: float = 1e-6):
    events = []
    clean = [(v, s) for v, s in solutions if s is not None
             and math.isfinite(s.x_star)]

    def bisect(a, b, predicate):
        for _ in range(80):
            if b - a <= param_tol * (1.0 + abs(a)):
                break
            mid = 0.5 * (a + b)
            try:
                _, sol = solve_at(mid)
            except (StopsideError, ValueError):
                a = mid
                continue
            if predicate(sol):
                b = mid
            else:
                a = mid
        return 0.5 * (a + b)

    x_tol = 1e-8

    def reaches(sol):
        return sol.x_star <= target + x_tol

    for (va, sa), (vb, sb) in zip(clean, clean[1:]):
        if not reaches(sa) and reaches(sb):
            events.append({"kind": "x_star_reaches_target", "target": target,
                           "param": bisect(va, vb, reaches)})

    def k_positive(sol):
        return sol.k > 1e-7 * (1.0 + abs(sol.x_star))

    for (va, sa), (vb, sb) in zip(clean, clean[1:]):
        if not k_positive(sa) and k_positive(sb):
            events.append({"kind": "k_positive_lower_edge",
                           "param": bisect(va, vb, k_positive)})
        if k_positive(sa) and not k_positive(sb):
            events.append({"kind": "k_positive_upper_edge",
                           "param": bisect(va, vb,
                                           lambda s: not k_positive(s))})
    return events


def cmd_catalog():
    entries = []
    for name in sorted(CATALOG):
        entry = CATALOG[name]
        entries.append({
            "name": name,
            "parameters": [
                {"name": pname, "range": [lo, hi],
                 "default": dict(entry.defaults).get(pname)}
                for pname, lo, hi in entry.parameter_schema
            ],
        })
    return {"schema_version": SCHEMA_VERSION, "entries": entries}, 0


def cmd_oracle(config: dict, seed: Optional[int] = None):
    report, code = cmd_solve(config, with_oracle=True, seed=seed)
    return report, code


# --------------------------------------------------------------------------
# Entry point
# --------------------------------------------------------------------------

def _emit(report: dict, out_path: Optional[str]):
    text = json.dumps(report, sort_keys=True, indent=2, allow_nan=True)
    if out_path:
        with open(out_path, "w") as fh:
            fh.write(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _write_csv(report: dict, csv_path: str):
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "g", "V", "psi_scaled"])
        for row in report.get("value_samples", []):
            writer.writerow([repr(v) for v in row])


def _error_report(exc: Exception, code: int) -> dict:
    err = {"type": type(exc).__name__, "message": str(exc)}
    if isinstance(exc, ConfigError) and exc.field:
        err["field"] = exc.field
    if isinstance(exc, ParseError):
        err["position"] = exc.position
        err["expected"] = list(exc.expected)
    return {"schema_version": SCHEMA_VERSION, "error": err, "exit_code": code}


def _load_config(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def main(argv: Optional[list[str]] = None) -> int:
    level = os.environ.get("STOPSIDE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr)

    parser = argparse.ArgumentParser(
        prog="stopside",
        description="Optimal thresholds and smooth-fit diagnostics for "
                    "one-sided stopping of one-dimensional diffusions.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one problem from a config")
    p_solve.add_argument("--config", required=True)
    p_solve.add_argument("--out")
    p_solve.add_argument("--csv")
    p_solve.add_argument("--method", choices=["threshold", "sufficient"],
                         default="threshold")
    p_solve.add_argument("--side", choices=["right", "left"])
    p_solve.add_argument("--seed", type=int)
    p_solve.add_argument("--tol", type=float)

    p_sweep = sub.add_parser("sweep", help="solve across a parameter range")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--parameter", required=True)
    p_sweep.add_argument("--lo", type=float, required=True)
    p_sweep.add_argument("--hi", type=float, required=True)
    p_sweep.add_argument("--n", type=int, required=True)
    p_sweep.add_argument("--out")

    sub.add_parser("catalog", help="list catalog models")

    p_oracle = sub.add_parser("oracle", help="solve and compare with oracles")
    p_oracle.add_argument("--config", required=True)
    p_oracle.add_argument("--out")
    p_oracle.add_argument("--seed", type=int)

    args = parser.parse_args(argv)

    try:
        if args.command == "solve":
            config = _load_config(args.config)
            report, code = cmd_solve(config, method=args.method,
                                     side=args.side, tol=args.tol,
                                     seed=args.seed)
            _emit(report, args.out)
            if args.csv:
                _write_csv(report, args.csv)
            return code
        if args.command == "sweep":
            config = _load_config(args.config)
            report, code = cmd_sweep(config, args.parameter, args.lo,
                                     args.hi, args.n)
            _emit(report, getattr(args, "out", None))
            return code
        if args.command == "catalog":
            report, code = cmd_catalog()
            _emit(report, None)
            return code
        if args.command == "oracle":
            config = _load_config(args.config)
            report, code = cmd_oracle(config, seed=args.seed)
            _emit(report, args.out)
            return code
        parser.error(f"unknown command {args.command}")
    except (ConfigError, json.JSONDecodeError, OSError, *_INPUT_ERRORS) as exc:
        _emit(_error_report(exc, 3), None)
        return 3
    except (*_NUMERIC_ERRORS, ValueError) as exc:
        _emit(_error_report(exc, 4), None)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
