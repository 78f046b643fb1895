"""Payoff functions, their generator images, and right-regularity checks.

A reward holds the payoff g, optionally a closed form for the generator
image (alpha - L)g (valid from a stated point rightward), the point from
which right regularity is claimed, an optional extension below that point,
and the kink locations of g (where its derivative jumps).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .diffusion import Diffusion, apply_generator
from .errors import DivergentIntegral, NegativeReward, NonConvergent, ParseError
from .numerics import (
    DEFAULT_QUAD,
    QuadratureOptions,
    RegionSpec,
    integrate_against_measure,
    one_sided_derivative,
)


@dataclass(frozen=True)
class Reward:
    """Non-negative, lower semicontinuous payoff with optional metadata.

    ``generator_image_closed_form`` maps (alpha, y) to (alpha - L)g(y) and is
    trusted for y >= ``closed_form_valid_from`` (default: the rrc point).
    ``kinks`` lists the points where g's derivative jumps; they contribute
    singular mass to the image measure used by the sufficient-condition scan.
    """

    g: Callable[[float], float]
    generator_image_closed_form: Optional[Callable[[float, float], float]] = None
    rrc_point: Optional[float] = None
    extension: Optional[Callable[[float], float]] = None
    kinks: tuple[float, ...] = ()
    closed_form_valid_from: Optional[float] = None
    name: str = ""

    def image_valid_from(self) -> float:
        if self.closed_form_valid_from is not None:
            return self.closed_form_valid_from
        if self.rrc_point is not None:
            return self.rrc_point
        return -math.inf

    def reflect(self) -> "Reward":
        """Reward seen by the mirrored diffusion (x -> -x).

        For a left-sided problem, ``rrc_point`` is read as the point *below*
        which regularity is claimed, so it maps to its negation.
        """
        g = self.g
        cf = self.generator_image_closed_form
        ext = self.extension
        return Reward(
            g=lambda x: g(-x),
            generator_image_closed_form=(None if cf is None
                                         else (lambda a, y: cf(a, -y))),
            rrc_point=None if self.rrc_point is None else -self.rrc_point,
            extension=None if ext is None else (lambda x: ext(-x)),
            kinks=tuple(sorted(-p for p in self.kinks)),
            closed_form_valid_from=(None if self.closed_form_valid_from is None
                                    else -self.closed_form_valid_from),
            name=f"reflect({self.name})" if self.name else "",
        )


@dataclass(frozen=True)
class RrcReport:
    integrability_ok: bool
    limit_ok: bool
    limit_estimate: float
    details: str = ""

    @property
    def ok(self) -> bool:
        return self.integrability_ok and self.limit_ok


def generator_image(d: Diffusion, rw: Reward, alpha: float, y: float) -> float:
    """(alpha - L)g at y: the closed form when available and valid there,
    otherwise alpha*g(y) minus the numeric Feller operator.

    The numeric fallback caps its difference step by the distance to the
    nearest declared kink of g, so one-sided smoothness is respected."""
    cf = rw.generator_image_closed_form
    if cf is not None and y >= rw.image_valid_from():
        return cf(alpha, y)
    f = rw.g
    if (rw.extension is not None and rw.rrc_point is not None
            and y < rw.rrc_point):
        f = rw.extension
    h_cap = None
    for q in rw.kinks:
        if q != y:
            dist = 0.45 * abs(q - y)
            h_cap = dist if h_cap is None else min(h_cap, dist)
    return alpha * f(y) - apply_generator(d, f, y, h_cap=h_cap)


def build_default_extension(d: Diffusion, rw: Reward, x1: float) -> Callable[[float], float]:
    """C^1 continuation of g below x1: a Hermite cubic matching value and
    right derivative at x1, flattening to a constant further left.

    Only ever integrated in RRC probing, so its exact shape is immaterial.
    """
    g = rw.g
    slope = one_sided_derivative(g, lambda t: t, x1, "right")
    width = 0.5 * (1.0 + abs(x1))
    if math.isfinite(d.interval.left):
        width = min(width, 0.5 * (x1 - d.interval.left))
    if not width > 0:
        raise ValueError("no room below x1 for a default extension")
    a = x1 - width
    g1 = g(x1)
    c0 = g1 - 0.5 * slope * width

    def ext(x: float) -> float:
        if x >= x1:
            return g(x)
        if x <= a:
            return c0
        t = (x - a) / width
        h00 = 2 * t**3 - 3 * t**2 + 1
        h01 = -2 * t**3 + 3 * t**2
        h11 = t**3 - t**2
        return h00 * c0 + h01 * g1 + width * h11 * slope

    return ext


def check_rrc(
    d: Diffusion,
    rw: Reward,
    alpha: float,
    x1: float,
    opts: QuadratureOptions = DEFAULT_QUAD,
) -> RrcReport:
    """Numeric verification of the right regularity condition at x1.

    ``integrability_ok`` probes the Green-kernel integral of |(alpha - L)g~|
    at one interior point; ``limit_ok`` checks that g/psi vanishes toward the
    right endpoint along a geometric sequence (three successive ratios must
    decrease, the last below 1e-6 of the first).
    """
    pair = d.fundamental_pair_for(alpha)
    interval = d.interval
    details: list[str] = []

    caution = (x1,)
    if rw.extension is not None:
        ext = rw.extension
    else:
        try:
            ext = build_default_extension(d, rw, x1)
            width = 0.5 * (1.0 + abs(x1))
            if math.isfinite(d.interval.left):
                width = min(width, 0.5 * (x1 - d.interval.left))
            caution = (x1, x1 - width)  # blend joins: keep steps one-sided
        except (ValueError, NonConvergent) as exc:
            ext = rw.g
            details.append(f"default extension unavailable ({exc}); using g below x1")
    rw_ext = replace(rw, extension=ext, rrc_point=x1,
                     kinks=tuple(sorted(set(rw.kinks) | set(caution))))

    def abs_image(y: float) -> float:
        return abs(generator_image(d, rw_ext, alpha, y))

    scale_hint = 1.0 + abs(x1)
    x0 = x1 + 0.5 * scale_hint
    if not interval.is_interior(x0):
        x0 = 0.5 * (max(interval.left, x1) + min(interval.right, x1 + scale_hint))

    integrability_ok = True
    try:
        left = 0.0
        if x0 > interval.left:
            left = integrate_against_measure(
                lambda y: pair.psi(y) * abs_image(y), d.speed,
                RegionSpec(interval.left, x0, interval.left_in_state, True), opts)
        right = 0.0
        if x0 < interval.right:
            right = integrate_against_measure(
                lambda y: pair.phi(y) * abs_image(y), d.speed,
                RegionSpec(x0, interval.right, False, interval.right_in_state), opts)
        value = (pair.phi(x0) * left + pair.psi(x0) * right) / pair.wronskian
        details.append(f"kernel integral at x0={x0:.6g}: {value:.6g}")
    except (DivergentIntegral, NonConvergent) as exc:
        integrability_ok = False
        details.append(f"kernel integral diverges: {exc}")

    limit_ok, limit_estimate = _limit_check(d, rw_ext, pair, x1, details)
    return RrcReport(integrability_ok, limit_ok, limit_estimate,
                     "; ".join(details))


def _limit_check(d, rw, pair, x1, details) -> tuple[bool, float]:
    r = d.interval.right
    g = rw.g
    if math.isfinite(r) and d.interval.right_in_state:
        est = g(r) / pair.psi(r)
        details.append("right endpoint reflecting; limit check vacuous")
        return True, est

    ratios: list[float] = []
    z0 = max(1.0, 2.0 * abs(x1) + 1.0)
    for k in range(44):
        z = z0 * 2.0**k if math.isinf(r) else r - (r - x1) * 2.0 ** (-(k + 1))
        if not d.interval.is_interior(z):
            continue
        try:
            denom = pair.psi(z)
            ratio = abs(g(z)) / denom
        except OverflowError:
            ratio = 0.0
        if math.isnan(ratio):
            break
        ratios.append(ratio)
        if ratio == 0.0:
            break
    if not ratios:
        return False, math.nan
    first = ratios[0]
    floor = max(1e-6 * first, 1e-300)
    # Accelerate the sequence: raw doubling resolves exponential decay, but
    # power-law ratios (psi a power of z) need the geometric limit pulled out.
    acc = _aitken(ratios)
    seq = acc if len(acc) >= 3 else ratios
    est = seq[-1]
    tiny = 1e-12 * (first + 1.0)
    decreasing = (len(seq) >= 3
                  and seq[-3] + tiny >= seq[-2] >= seq[-1] - tiny)
    ok = (ratios[-1] == 0.0) or (decreasing and abs(est) <= floor)
    details.append(f"g/psi along tail: first={first:.3e}, "
                   f"last={ratios[-1]:.3e}, extrapolated={est:.3e}")
    return ok, est


def _aitken(seq):
    """Aitken delta-squared acceleration; exact limit for geometric decay."""
    out = []
    for r0, r1, r2 in zip(seq, seq[1:], seq[2:]):
        denom = r2 - 2.0 * r1 + r0
        if denom == 0.0:
            out.append(r2)
        else:
            out.append(abs(r2 - (r2 - r1) ** 2 / denom))
    return out


# --------------------------------------------------------------------------
# Reward expression grammar:
#   expression := term (('+'|'-') term)*
#   term       := factor (('*'|'/') factor)*
#   factor     := base ('^' number)?
#   base       := 'x' | number | '(' expression ')' | func '(' expression
#                 (',' expression)* ')'
#   func       := 'max' | 'exp' | 'ln' | 'pos'        pos(u) = max(u, 0)
# 'max' requires at least two arguments; the other functions exactly one.
# --------------------------------------------------------------------------

_FUNCS = ("max", "exp", "ln", "pos")


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self):
        self._skip_ws()
        if self.pos >= len(self.text):
            return ("end", "", self.pos)
        ch = self.text[self.pos]
        if ch in "+-*/^(),":
            return (ch, ch, self.pos)
        if ch.isdigit() or ch == ".":
            j = self.pos
            seen_dot = False
            while j < len(self.text) and (self.text[j].isdigit()
                                          or (self.text[j] == "." and not seen_dot)):
                seen_dot = seen_dot or self.text[j] == "."
                j += 1
            if j < len(self.text) and self.text[j] in "eE":
                k = j + 1
                if k < len(self.text) and self.text[k] in "+-":
                    k += 1
                if k < len(self.text) and self.text[k].isdigit():
                    while k < len(self.text) and self.text[k].isdigit():
                        k += 1
                    j = k
            return ("number", self.text[self.pos:j], self.pos)
        if ch.isalpha():
            j = self.pos
            while j < len(self.text) and self.text[j].isalnum():
                j += 1
            return ("ident", self.text[self.pos:j], self.pos)
        raise ParseError(f"unexpected character {ch!r} at position {self.pos}",
                         self.pos, ())

    def next(self):
        tok = self.peek()
        self.pos = tok[2] + len(tok[1])
        return tok

    def expect(self, kind: str, expected: tuple[str, ...]):
        tok = self.peek()
        if tok[0] != kind:
            raise ParseError(
                f"expected one of {expected} at position {tok[2]}, got {tok[1]!r}",
                tok[2], expected)
        return self.next()

    def _skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1


def _parse_expression(tk: _Tokenizer):
    node = _parse_term(tk)
    while tk.peek()[0] in ("+", "-"):
        op = tk.next()[0]
        rhs = _parse_term(tk)
        lhs = node
        if op == "+":
            node = (lambda l, r: (lambda x: l(x) + r(x)))(lhs, rhs)
        else:
            node = (lambda l, r: (lambda x: l(x) - r(x)))(lhs, rhs)
    return node


def _parse_term(tk: _Tokenizer):
    node = _parse_factor(tk)
    while tk.peek()[0] in ("*", "/"):
        op = tk.next()[0]
        rhs = _parse_factor(tk)
        lhs = node
        if op == "*":
            node = (lambda l, r: (lambda x: l(x) * r(x)))(lhs, rhs)
        else:
            node = (lambda l, r: (lambda x: l(x) / r(x)))(lhs, rhs)
    return node


def _parse_factor(tk: _Tokenizer):
    node = _parse_base(tk)
    if tk.peek()[0] == "^":
        tk.next()
        tok = tk.expect("number", ("number",))
        expo = float(tok[1])
        base = node
        node = (lambda b, e: (lambda x: b(x) ** e))(node, expo)
    return node


def _parse_base(tk: _Tokenizer):
    tok = tk.peek()
    if tok[0] == "number":
        tk.next()
        val = float(tok[1])
        return lambda x, v=val: v
    if tok[0] == "(":
        tk.next()
        node = _parse_expression(tk)
        tk.expect(")", (")",))
        return node
    if tok[0] == "ident":
        tk.next()
        name = tok[1]
        if name == "x":
            return lambda x: x
        if name in _FUNCS:
            tk.expect("(", ("(",))
            args = [_parse_expression(tk)]
            while tk.peek()[0] == ",":
                tk.next()
                args.append(_parse_expression(tk))
            tk.expect(")", (")", ","))
            if name == "max" and len(args) < 2:
                raise ParseError(
                    f"max() needs at least two arguments at position {tok[2]}",
                    tok[2], (",",))
            if name != "max" and len(args) != 1:
                raise ParseError(
                    f"{name}() takes exactly one argument at position {tok[2]}",
                    tok[2], (")",))
            if name == "max":
                return (lambda fs: (lambda x: max(f(x) for f in fs)))(args)
            if name == "exp":
                return (lambda f: (lambda x: math.exp(f(x))))(args[0])
            if name == "ln":
                return (lambda f: (lambda x: math.log(f(x))))(args[0])
            return (lambda f: (lambda x: max(f(x), 0.0)))(args[0])
        raise ParseError(
            f"unknown identifier {name!r} at position {tok[2]}",
            tok[2], ("x",) + _FUNCS)
    raise ParseError(
        f"expected a value at position {tok[2]}, got {tok[1]!r}",
        tok[2], ("x", "number", "(") + _FUNCS)


def parse_reward(expr: str, domain: tuple[float, float] = (-5.0, 5.0)) -> Reward:
    """Parse a reward expression into a Reward whose g evaluates it.

    The generator image is left to the numeric fallback.  Non-negativity is
    validated by sampling over ``domain`` (points where evaluation raises a
    domain error are skipped)."""
    tk = _Tokenizer(expr)
    fn = _parse_expression(tk)
    trailing = tk.peek()
    if trailing[0] != "end":
        raise ParseError(
            f"unexpected trailing input at position {trailing[2]}: {trailing[1]!r}",
            trailing[2], ("end", "+", "-", "*", "/"))

    lo, hi = domain
    for x in [lo + (hi - lo) * i / 210.0 for i in range(211)]:
        try:
            val = fn(x)
        except (ValueError, ZeroDivisionError, OverflowError):
            continue
        if val < -1e-12:
            raise NegativeReward(f"g({x:.6g}) = {val:.6g} < 0")
    return Reward(g=fn, name=f"expr:{expr}")
