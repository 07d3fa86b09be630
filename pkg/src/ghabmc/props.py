"""Timing constraints: reach, bounded response and periodic events.

Properties compile to an Expr over the step variables plus monitor clocks,
auxiliary variables defined step by step:

* elapsed clock (`runT`): equals tau_k, the time of the final step,
* reaction clock (`reactT_i`): time the trigger has held continuously up to the
  end of step i, reset to 0 when it does not hold,
* event clock (`gps_t_i`): tau_i latched at each step whose begin values show a
  rising edge of the event condition; 0 before the first event.
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Union

from .expr import (
    TRUE,
    Binary,
    Bool,
    Cmp,
    Const,
    Expr,
    ExprSyntaxError,
    Integral,
    Ite,
    Var,
    and_,
    const,
    eq,
    evaluate,
    free_vars,
    not_,
    parse_expr,
    substitute,
)
from .unroll import Assertion, ConstraintSystem, Decl, V


class PropertyError(ValueError):
    pass


@dataclass(frozen=True)
class Reach:
    mode: str | None
    predicate: Expr = TRUE
    deadline: float = math.inf
    clock: str = "runT"


@dataclass(frozen=True)
class Response:
    trigger: Expr
    response: Expr
    deadline: float
    clock: str = "reactT"


@dataclass(frozen=True)
class Periodic:
    event_clock: str
    min: float
    max: float


TimingConstraint = Union[Reach, Response, Periodic]


@dataclass(frozen=True)
class MonitorClock:
    name: str
    kind: str  # "elapsed", "since" or "event"
    cond: Expr | None = None


@dataclass(frozen=True)
class Property:
    name: str
    constraint: TimingConstraint
    clocks: tuple[MonitorClock, ...] = ()
    text: str = ""


@dataclass(frozen=True)
class CompiledProperty:
    formula: Expr
    declarations: tuple[Decl, ...] = ()
    assertions: tuple[Assertion, ...] = ()
    # functional clock definitions, in evaluation order
    clock_defs: tuple[tuple[str, Expr], ...] = field(default=())

    def bind(self, env: Mapping[str, float]) -> dict[str, float]:
        """Extend a step assignment with the monitor clock values."""
        out = dict(env)
        for name, rhs in self.clock_defs:
            out[name] = float(evaluate(rhs, out))
        return out

    def holds(self, env: Mapping[str, float]) -> bool:
        return bool(evaluate(self.formula, self.bind(env)))


# --------------------------------------------------------------------------
# property files

_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|inf"
_REACH = re.compile(r"^reach(?:\s+mode=(\w+))?(.*?)(?:\s+within\s+(\S+))?$")
_RESPOND = re.compile(r"^respond\s+(.+?)\s+->\s+(.+?)\s+within\s+(\S+)(?:\s+as\s+(\w+))?$")
_PERIODIC = re.compile(rf"^periodic\s+(\w+)\s+in\s+\[\s*({_NUM})\s*,\s*({_NUM})\s*\]$")
_CLOCK = re.compile(r"^clock\s+(\w+)\s+(elapsed|since|event)(?:\s+(.+))?$")
_LABEL = re.compile(r"^(\w+)\s*:\s*(.*)$")


def _deadline(text: str, lineno: int) -> float:
    if not re.fullmatch(_NUM, text):
        raise PropertyError(f"line {lineno}: bad deadline {text!r}")
    return float(text)


def _expr(text: str, lineno: int) -> Expr:
    try:
        return parse_expr(text)
    except ExprSyntaxError as exc:
        raise PropertyError(f"line {lineno}: {exc}") from None


def parse_properties(text: str) -> list[Property]:
    """One constraint per line; `clock` lines declare monitor clocks for later lines."""
    clocks: dict[str, MonitorClock] = {}
    props: list[Property] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        label = None
        m = _LABEL.match(line)
        if m and m.group(1) not in ("reach", "respond", "periodic", "clock"):
            label, line = m.group(1), m.group(2).strip()
        if (m := _CLOCK.match(line)):
            name, kind, cond = m.groups()
            if kind != "elapsed" and not cond:
                raise PropertyError(f"line {lineno}: clock {name} needs a condition")
            clocks[name] = MonitorClock(name, kind, _expr(cond, lineno) if cond else None)
            continue
        c: TimingConstraint
        if (m := _REACH.match(line)):
            mode, pred, within = m.groups()
            pred = pred.strip()
            c = Reach(mode, _expr(pred, lineno) if pred else TRUE,
                      _deadline(within, lineno) if within else math.inf)
        elif (m := _RESPOND.match(line)):
            trig, resp, within, clock = m.groups()
            c = Response(_expr(trig, lineno), _expr(resp, lineno), _deadline(within, lineno), clock or "reactT")
        elif (m := _PERIODIC.match(line)):
            c = Periodic(m.group(1), float(m.group(2)), float(m.group(3)))
        else:
            raise PropertyError(f"line {lineno}: cannot parse property {line!r}")
        _check_shape(c, lineno)
        used = tuple(clocks[n] for n in sorted(_clock_refs(c)) if n in clocks)
        props.append(Property(label or f"P{len(props) + 1}", c, used, line))
    return props


def _check_shape(c: TimingConstraint, lineno: int | None = None) -> None:
    where = f"line {lineno}: " if lineno else ""
    if isinstance(c, Periodic):
        if not 0 <= c.min <= c.max:
            raise PropertyError(f"{where}periodic bounds need 0 <= min <= max")
    elif not c.deadline > 0:
        raise PropertyError(f"{where}deadline must be positive")


def _clock_refs(c: TimingConstraint) -> set[str]:
    if isinstance(c, Periodic):
        return {c.event_clock}
    if isinstance(c, Reach):
        return free_vars(c.predicate)
    return free_vars(c.trigger) | free_vars(c.response)


# --------------------------------------------------------------------------
# compilation


def _num(x: float) -> Const:
    return const(float(x))


def _step_map(cs: ConstraintSystem, i: int, which: str) -> dict[str, Expr]:
    pick = V.end if which == "end" else V.begin
    env: dict[str, Expr] = {v: Var(pick(v, i)) for v in cs.tracked}
    env.update({x: Var(V.input(x, i)) for x in cs.model.inputs})
    return env


def _check_vars(e: Expr, cs: ConstraintSystem, extra=()) -> None:
    known = set(cs.tracked) | set(cs.model.inputs) | set(cs.model.params) | set(extra)
    unknown = free_vars(e) - known
    if unknown:
        raise PropertyError(f"unknown variable {', '.join(sorted(unknown))}")


def compile_property(c: TimingConstraint | Property, cs: ConstraintSystem) -> CompiledProperty:
    """Compile against the unrolling `cs` (which fixes k, the model and d_max)."""
    clocks: tuple[MonitorClock, ...] = ()
    if isinstance(c, Property):
        c, clocks = c.constraint, c.clocks
    _check_shape(c)
    k = cs.k
    taken = set(cs.tracked) | set(cs.model.inputs) | set(cs.model.params)
    for clk in clocks:
        if clk.name in taken:
            raise PropertyError(f"monitor clock {clk.name} collides with a model variable")

    if isinstance(c, Reach):
        _check_vars(c.predicate, cs)
        if c.mode is not None and c.mode not in cs.states:
            raise PropertyError(f"unknown state {c.mode}")
        parts: list[Expr] = []
        if c.mode is not None:
            parts.append(eq(Var(V.mode(k)), Const(Fraction(cs.mode_index(c.mode)))))
        if c.predicate != TRUE:
            parts.append(substitute(c.predicate, _step_map(cs, k, "end")))
        decls: list[Decl] = []
        defs: list[tuple[str, Expr]] = []
        if math.isfinite(c.deadline):
            _warn_deadline(c.deadline, cs)
            if c.clock in taken:
                raise PropertyError(f"monitor clock {c.clock} collides with a model variable")
            parts.append(Cmp("<=", Var(c.clock), _num(c.deadline)))
            decls.append(Decl(c.clock, "Real", Fraction(0), _horizon(cs)))
            defs.append((c.clock, Var(V.clock(k))))
        return _finish(and_(*parts) if parts else TRUE, decls, defs)

    if k < 1:
        raise PropertyError("response and periodic properties need k >= 1")

    if isinstance(c, Response):
        _check_vars(c.trigger, cs)
        _check_vars(c.response, cs)
        if c.clock in taken:
            raise PropertyError(f"monitor clock {c.clock} collides with a model variable")
        _warn_deadline(c.deadline, cs)
        parts = []
        decls, defs = [], []
        before: Expr | None = None
        for i in range(k):
            trig = substitute(c.trigger, _step_map(cs, i, "end"))
            name = f"{c.clock}_{i}"
            decls.append(Decl(name, "Real", Fraction(0), _horizon(cs)))
            # the trigger counts as held through step i only if it held at the end of step i-1
            held: Expr = _num(0.0)
            if before is not None:
                held = Ite(before, Binary("add", Var(f"{c.clock}_{i - 1}"), Var(V.dwell(i))), _num(0.0))
            defs.append((name, Ite(trig, held, _num(0.0))))
            before = trig
            parts.append(Bool("implies", (trig, and_(
                substitute(c.response, _step_map(cs, i + 1, "begin")),
                Cmp("<=", Var(name), _num(c.deadline))))))
        return _finish(and_(*parts), decls, defs)

    # Periodic
    name = c.event_clock
    decls, defs = [], []
    if name in taken:
        series = [Var(V.begin(name, i)) for i in range(k + 1)] if name in cs.tracked else None
        if series is None:
            raise PropertyError(f"event clock {name} must be a tracked variable or a monitor clock")
    else:
        clk = next((x for x in clocks if x.name == name), None)
        if clk is None:
            raise PropertyError(f"unknown variable {name}")
        if clk.kind != "event":
            raise PropertyError(f"clock {name} is not an event clock")
        _check_vars(clk.cond, cs)
        series = []
        for i in range(k + 1):
            here = substitute(clk.cond, _step_map(cs, i, "begin"))
            if i > 0:
                rise = and_(here, not_(substitute(clk.cond, _step_map(cs, i - 1, "begin"))))
                prev: Expr = Var(f"{name}_{i - 1}")
            else:
                rise, prev = here, _num(0.0)
            cname = f"{name}_{i}"
            decls.append(Decl(cname, "Real", Fraction(0), _horizon(cs)))
            defs.append((cname, Ite(rise, Var(V.clock(i)), prev)))
            series.append(Var(cname))
    parts = []
    for i in range(k):
        gap = Binary("sub", series[i + 1], series[i])
        parts.append(and_(Cmp(">=", gap, _num(c.min)), Cmp("<=", gap, _num(c.max))))
    return _finish(and_(*parts), decls, defs)


def _horizon(cs: ConstraintSystem) -> Fraction:
    # no monitor clock can exceed the total elapsed time k * d_max
    return Fraction(repr(float(cs.d_max))) * cs.k


def _finish(formula: Expr, decls, defs) -> CompiledProperty:
    asserts = tuple(Assertion("clock", None, name, eq(Var(name), rhs)) for name, rhs in defs)
    return CompiledProperty(formula, tuple(decls), asserts, tuple(defs))


def _warn_deadline(deadline: float, cs: ConstraintSystem) -> None:
    if deadline > cs.k * cs.d_max:
        warnings.warn(f"deadline {deadline} exceeds k*d_max = {cs.k * cs.d_max}; "
                      "bound cannot witness the deadline", stacklevel=3)


# --------------------------------------------------------------------------
# negation

_FLIP = {"<": ">=", "<=": ">", ">=": "<", ">": "<="}


def negate_for_bmc(p: Expr) -> Expr:
    """Negation pushed down to atoms; implications are expanded."""
    return nnf(p, negate=True)


def nnf(p: Expr, negate: bool = False) -> Expr:
    if isinstance(p, Bool):
        if p.op == "not":
            return nnf(p.args[0], not negate)
        if p.op == "implies":
            a, b = p.args
            if negate:
                return Bool("and", (nnf(a), nnf(b, True)))
            return Bool("or", (nnf(a, True), nnf(b)))
        op = p.op
        if negate:
            op = "or" if op == "and" else "and"
        return Bool(op, tuple(nnf(x, negate) for x in p.args))
    if isinstance(p, Cmp):
        if not negate:
            return p
        if p.op == "=":
            return not_(p)
        return Cmp(_FLIP[p.op], p.lhs, p.rhs)
    if isinstance(p, Ite):
        # boolean-valued ite: split into its two guarded cases
        return nnf(Bool("or", (Bool("and", (p.cond, p.then)),
                               Bool("and", (not_(p.cond), p.orelse)))), negate)
    if isinstance(p, Integral):
        return not_(p) if negate else p
    raise PropertyError(f"not a boolean formula: {type(p).__name__}")


def is_nnf(p: Expr) -> bool:
    if isinstance(p, Bool):
        if p.op == "implies":
            return False
        if p.op == "not":
            return isinstance(p.args[0], (Cmp, Integral))
        return all(is_nnf(x) for x in p.args)
    return isinstance(p, (Cmp, Integral))

