"""Numeric reference semantics for GHA models.

Fixed-step RK4 per mode, guard crossings localized by bisection, actions
applied in order. Traces are the trust anchor: `check_trace` maps a trace onto
the unrolled step variables and evaluates every assertion numerically, with
integral atoms re-integrated by an independent adaptive solver.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from scipy.integrate import solve_ivp

from .expr import (
    Bool,
    Cmp,
    Expr,
    Integral,
    Temporal,
    compile_source,
    evaluate,
    to_infix,
    to_python,
    EvalError,
)
from .flatten import flatten_gha, flatten_state
from .frs import FlowSystem, integrator_names
from .model import Block, Gha, Range, SlState, block_arity, subsystem_outports
from .unroll import ConstraintSystem, V, derive_all, initial_values, tracked_vars

BISECT_TOL = 1e-9
DEFAULT_DT = 1e-3


class SimulationError(RuntimeError):
    pass


class NondeterministicChoice(SimulationError):
    pass


# --------------------------------------------------------------------------
# trace types


@dataclass(frozen=True)
class Segment:
    state: str
    t_start: float
    t_end: float
    entry: dict[str, float]
    exit: dict[str, float]
    inputs: dict[str, float]
    samples: tuple[tuple[float, tuple[float, ...]], ...] = ()
    fired: int | None = None
    post: dict[str, float] | None = None


@dataclass(frozen=True)
class Event:
    t: float
    transition: int
    src: str
    dst: str
    effects: dict[str, float]


@dataclass(frozen=True)
class Trace:
    columns: tuple[str, ...]
    segments: tuple[Segment, ...]
    events: tuple[Event, ...]
    params: dict[str, float] = field(default_factory=dict)

    def rows(self):
        for seg in self.segments:
            for t, values in seg.samples:
                yield t, seg.state, values

    def to_csv(self) -> str:
        out = ["t,state," + ",".join(self.columns)]
        for t, state, values in self.rows():
            out.append(f"{t!r},{state}," + ",".join(repr(v) for v in values))
        return "\n".join(out) + "\n"

    def final(self) -> dict[str, float]:
        return dict(self.segments[-1].exit) if self.segments else {}


# --------------------------------------------------------------------------
# block-level interpreter, independent of FR derivation


def _block_value(b: Block, u: Sequence[float]) -> float:
    k = b.kind
    p = b.params
    if k == "Constant":
        return float(p.get("value", 0))
    if k == "Gain":
        return float(p.get("k", 1)) * u[0]
    if k == "Sum":
        signs = str(p.get("signs", "++"))
        acc = u[0] if signs[0] == "+" else (-u[0])
        for sign, x in zip(signs[1:], u[1:]):
            acc = acc + x if sign == "+" else acc - x
        return acc
    if k == "Product":
        ops = str(p.get("ops", "**"))
        acc = u[0] if ops[0] == "*" else (1.0 / u[0])
        for op, x in zip(ops[1:], u[1:]):
            acc = acc * x if op == "*" else acc / x
        return acc
    if k == "Trigonometry":
        return getattr(math, str(p.get("fn", "sin")))(u[0])
    if k == "Sqrt":
        return math.sqrt(u[0])
    if k == "Exp":
        return math.log(u[0]) if str(p.get("fn", "exp")) == "log" else math.exp(u[0])
    if k == "Saturation":
        return min(max(u[0], float(p.get("lower", 0))), float(p.get("upper", 1)))
    if k == "Switch":
        return u[0] if u[1] >= float(p.get("threshold", 0)) else u[2]
    if k == "Relational":
        a, b_ = u
        op = str(p.get("op", "<="))
        res = {"<": a < b_, "<=": a <= b_, "==": a == b_, ">=": a >= b_, ">": a > b_}[op]
        return 1.0 if res else 0.0
    if k == "Logical":
        op = str(p.get("op", "and"))
        if op == "not":
            return 1.0 if u[0] == 0.0 else 0.0
        truth = [not (x == 0.0) for x in u]
        return 1.0 if (all(truth) if op == "and" else any(truth)) else 0.0
    raise ValueError(f"no interpreter for block kind {k}")


def propagate(s: SlState, values: Mapping[str, float],
              names: Mapping[str, str] | None = None) -> tuple[dict[str, float], dict[str, float]]:
    """Evaluate a (possibly hierarchical) state's diagram block by block.

    `values` supplies inputs, params and integrator states; returns the Outport
    values and the integrator derivatives.
    """
    if names is None:
        names = integrator_names(flatten_state(s))
    sig: dict[tuple[str, int], float] = {}
    outputs: dict[str, float] = {}
    derivs: dict[str, float] = {}
    while _pass(s.blocks, s.lines, "", None, sig, values, names, outputs, derivs):
        pass
    expected_out = {str(b.params["var"]) for b in s.blocks if b.kind == "Outport"}
    if set(outputs) != expected_out or len(derivs) != len(names):
        raise SimulationError(f"state {s.name}: diagram did not settle (algebraic loop?)")
    return outputs, derivs


def _pass(blocks, lines, prefix, sub_in, sig, values, names, outputs, derivs) -> bool:
    drv = {dst: ln.src for ln in lines for dst in ln.dsts}
    progress = False

    def inval(bid: str, port: int):
        src = drv.get((bid, port))
        return None if src is None else sig.get((prefix + src[0], src[1]))

    for b in blocks:
        path = prefix + b.id
        if b.kind == "Subsystem":
            n_in = block_arity(b)[0]
            ins = {i: inval(b.id, i) for i in range(1, n_in + 1)}
            progress |= _pass(b.blocks, b.lines, path + "/", ins, sig, values, names, outputs, derivs)
            inner = {dst: ln.src for ln in b.lines for dst in ln.dsts}
            for idx, ob in enumerate(subsystem_outports(b), start=1):
                src = inner.get((ob.id, 1))
                val = None if src is None else sig.get((path + "/" + src[0], src[1]))
                if val is not None and (path, idx) not in sig:
                    sig[(path, idx)] = val
                    progress = True
        elif sub_in is not None and b.kind == "Inport":
            port = int(b.params.get("port", 1))
            val = sub_in.get(port)
            if val is not None and (path, 1) not in sig:
                sig[(path, 1)] = val
                progress = True
        elif sub_in is not None and b.kind == "Outport":
            continue
        elif b.kind == "Integrator":
            if (path, 1) not in sig:
                sig[(path, 1)] = values[names[path]]
                progress = True
            u = inval(b.id, 1)
            if u is not None and names[path] not in derivs:
                derivs[names[path]] = u
                progress = True
        elif b.kind == "Outport":
            u = inval(b.id, 1)
            var = str(b.params["var"])
            if u is not None and var not in outputs:
                outputs[var] = u
                progress = True
        elif b.kind == "Inport":
            if (path, 1) not in sig:
                sig[(path, 1)] = values[str(b.params["var"])]
                progress = True
        elif (path, 1) not in sig:
            us = [inval(b.id, p) for p in range(1, block_arity(b)[0] + 1)]
            if all(x is not None for x in us):
                sig[(path, 1)] = _block_value(b, us)
                progress = True
    return progress


# --------------------------------------------------------------------------
# compiled modes


@dataclass
class Mode:
    name: str
    state_vars: tuple[str, ...]
    outputs: tuple[str, ...]
    deriv: Callable  # (y, e) -> tuple
    algebraic: Callable  # (y, e) -> tuple


def _mode_from_fr(fs: FlowSystem) -> Mode:
    pos = {v: j for j, v in enumerate(fs.state_vars)}

    def ref(n: str) -> str:
        return f"y[{pos[n]}]" if n in pos else f"e[{n!r}]"

    outs = tuple(fs.algebraic)

    def tup(exprs) -> str:
        return "(" + "".join(to_python(x, ref) + ", " for x in exprs) + ")"

    deriv = compile_source(tup(fs.derivs[v] for v in fs.state_vars), "y, e")
    alg = compile_source(tup(fs.algebraic[v] for v in outs), "y, e")
    return Mode(fs.state_name, fs.state_vars, outs, deriv, alg)


def _mode_from_blocks(s: SlState) -> Mode:
    names = integrator_names(flatten_state(s))
    order = tuple(names[b.id] for b in flatten_state(s).blocks if b.kind == "Integrator")
    outs = tuple(str(b.params["var"]) for b in s.blocks if b.kind == "Outport")

    def evaluate_at(y, e):
        vals = dict(e)
        vals.update(zip(order, y))
        return propagate(s, vals, names)

    def deriv(y, e):
        d = evaluate_at(y, e)[1]
        return tuple(d[v] for v in order)

    def alg(y, e):
        o = evaluate_at(y, e)[0]
        return tuple(o[v] for v in outs)

    return Mode(s.name, order, outs, deriv, alg)


def rk4_step(f, y, e, h):
    k1 = f(y, e)
    y2 = [yi + 0.5 * h * ki for yi, ki in zip(y, k1)]
    k2 = f(y2, e)
    y3 = [yi + 0.5 * h * ki for yi, ki in zip(y, k2)]
    k3 = f(y3, e)
    y4 = [yi + h * ki for yi, ki in zip(y, k3)]
    k4 = f(y4, e)
    return [yi + (h / 6.0) * (a + 2.0 * b + 2.0 * c + d)
            for yi, a, b, c, d in zip(y, k1, k2, k3, k4)]


# --------------------------------------------------------------------------
# simulation

InputSpec = Mapping[str, "float | Sequence[tuple[float, float]]"]


def _input_fn(spec) -> Callable[[float], float]:
    if isinstance(spec, (int, float)):
        value = float(spec)
        return lambda t: value
    points = sorted((float(t), float(v)) for t, v in spec)
    if not points:
        raise SimulationError("empty piecewise input")

    def fn(t: float) -> float:
        current = points[0][1]
        for start, v in points:
            if start <= t + 1e-12:
                current = v
            else:
                break
        return current

    return fn


def resolve_params(m: Gha, given: Mapping[str, float] | None = None,
                   rng: random.Random | None = None) -> dict[str, float]:
    """Fixed params keep their value; ranged ones are sampled uniformly unless given."""
    given = dict(given or {})
    rng = rng or random.Random(0)
    out = {}
    for name in sorted(m.params):
        val = m.params[name]
        if name in given:
            out[name] = float(given[name])
        elif isinstance(val, Range):
            out[name] = rng.uniform(float(val.lo), float(val.hi))
        else:
            out[name] = float(val)
    return out


def default_inputs(m: Gha) -> dict[str, float]:
    return {x: (float(r.lo + r.hi) / 2 if r else 0.0) for x, r in m.inputs.items()}


class _Engine:
    def __init__(self, m: Gha, engine: str):
        flat = flatten_gha(m)
        self.model = flat
        self.frs = derive_all(flat)
        if engine == "fr":
            self.modes = {name: _mode_from_fr(fs) for name, fs in self.frs.items()}
        elif engine == "blocks":
            self.modes = {s.name: _mode_from_blocks(s) for s in m.states}
        else:
            raise ValueError(f"unknown engine {engine}")
        self.tracked = tracked_vars(flat, self.frs)
        self.inputs = tuple(sorted(m.inputs))
        self.columns = self.inputs + self.tracked
        self.guards = [evaluate_fn(t.cond) for t in flat.transitions]
        self.actions = [[(v, evaluate_fn(e)) for v, e in t.actions] for t in flat.transitions]
        self.outgoing = {s.name: [n for n, t in enumerate(flat.transitions) if t.src == s.name]
                         for s in flat.states}

    def settle(self, mode: Mode, y, e: dict) -> None:
        """Write state vars and recomputed outputs of `mode` into `e`."""
        for v, val in zip(mode.state_vars, y):
            e[v] = val
        for v, val in zip(mode.outputs, mode.algebraic(y, e)):
            e[v] = val

    def advance(self, mode: Mode, y, e: dict, h: float, t: float):
        try:
            y_new = rk4_step(mode.deriv, y, e, h) if h > 0 else list(y)
            e_new = dict(e)
            self.settle(mode, y_new, e_new)
        except (ValueError, ZeroDivisionError, OverflowError) as exc:
            raise SimulationError(f"state {mode.name}: {exc} near t={t!r}") from None
        for v in mode.state_vars + mode.outputs:
            if not math.isfinite(e_new[v]):
                fs = self.frs.get(mode.name)
                where = (f"d/dt[{v}] = {to_infix(fs.derivs[v])}" if fs and v in fs.derivs
                         else f"{v} = {to_infix(fs.algebraic[v])}" if fs and v in fs.algebraic else v)
                raise SimulationError(f"non-finite value in {where} at t={t!r}")
        return y_new, e_new

    def enabled(self, state: str, e: dict) -> list[int]:
        try:
            return [n for n in self.outgoing[state] if self.guards[n](e)]
        except (ValueError, ZeroDivisionError, OverflowError, KeyError) as exc:
            raise SimulationError(f"guard evaluation failed in {state}: {exc}") from None

    def fire(self, n: int, e: dict) -> dict[str, float]:
        after = dict(e)
        effects = {}
        for target, fn in self.actions[n]:
            try:
                after[target] = fn(after)
            except (ValueError, ZeroDivisionError, OverflowError) as exc:
                raise SimulationError(f"action {target} failed: {exc}") from None
            effects[target] = after[target]
        return after, effects

    def row(self, e: dict) -> tuple[float, ...]:
        return tuple(e[c] for c in self.columns)

    def pick(self, hits: list[int], choose: str | None, t: float) -> int:
        if len(hits) > 1 and choose != "first":
            raise NondeterministicChoice(
                f"nondeterministic choice between transitions {hits} at t={t!r}")
        return min(hits)


def evaluate_fn(e: Expr):
    return compile_source(to_python(e))


def simulate(m: Gha, inputs: InputSpec | None = None, horizon: float = 1.0,
             dt: float = DEFAULT_DT, *, params: Mapping[str, float] | None = None,
             seed: int = 0, max_transitions: int | None = None, max_dwell: float | None = None,
             max_segments: int | None = None, choose: str | None = None,
             engine: str = "fr", sample_every: int = 1) -> Trace:
    """Simulate from the initial state until `horizon`.

    A segment ends when a guard fires, at the horizon, or after `max_dwell`
    seconds in one mode (the next segment then continues in the same mode).
    """
    if dt <= 0:
        raise SimulationError("dt must be positive")
    eng = _Engine(m, engine)
    flat = eng.model
    spec = default_inputs(flat)
    spec.update(inputs or {})
    unknown = set(spec) - set(flat.inputs)
    if unknown:
        raise SimulationError(f"unknown input(s) {', '.join(sorted(unknown))}")
    in_fns = {x: _input_fn(v) for x, v in spec.items()}
    # segments end at input switches so inputs stay constant per step
    breaks = sorted({float(t) for v in spec.values() if not isinstance(v, (int, float))
                     for t, _ in v})
    par = resolve_params(flat, params, random.Random(seed))
    if max_transitions is None:
        max_transitions = 10_000

    e: dict[str, float] = dict(par)
    e.update({v: float(x) for v, x in initial_values(flat, eng.frs, eng.tracked).items()})
    state = flat.initial
    t = 0.0
    segments: list[Segment] = []
    events: list[Event] = []

    while True:
        mode = eng.modes[state]
        for x, fn in in_fns.items():
            e[x] = fn(t)
        entry = {v: e[v] for v in eng.tracked}
        seg_inputs = {x: e[x] for x in eng.inputs}
        y = [e[v] for v in mode.state_vars]
        _, e = eng.advance(mode, y, e, 0.0, t)
        t0 = t
        samples = [(t, eng.row(e))]
        limit = horizon if max_dwell is None else min(horizon, t0 + max_dwell)
        limit = min([limit] + [b for b in breaks if b > t0 + 1e-12])
        fired = None

        hits = eng.enabled(state, e)
        if hits:
            fired = eng.pick(hits, choose, t)
        n = 0
        while fired is None and t < limit:
            t_next = t0 + (n + 1) * dt
            if t_next >= limit - 1e-12:
                t_next = limit
            h = t_next - t
            y_new, e_new = eng.advance(mode, y, e, h, t)
            hits = eng.enabled(state, e_new)
            if hits:
                h_hit, y_new, e_new, hits = _localize(eng, mode, state, y, e, h, t, hits)
                t_next = t + h_hit
                fired = eng.pick(hits, choose, t_next)
            y, e, t = y_new, e_new, t_next
            n += 1
            if fired is not None or n % sample_every == 0 or t >= limit:
                samples.append((t, eng.row(e)))

        exit_vals = {v: e[v] for v in eng.tracked}
        post = None
        if fired is not None:
            after, effects = eng.fire(fired, e)
            tr = flat.transitions[fired]
            events.append(Event(t, fired, tr.src, tr.dst, effects))
            post = {v: after[v] for v in eng.tracked}
            e = after
        segments.append(Segment(state, t0, t, entry, exit_vals, seg_inputs, tuple(samples),
                                fired, post))
        if fired is not None:
            state = flat.transitions[fired].dst
        if len(events) >= max_transitions and fired is not None:
            break
        if max_segments is not None and len(segments) >= max_segments:
            break
        if t >= horizon and fired is None:
            break
    return Trace(eng.columns, tuple(segments), tuple(events), par)


def _localize(eng: _Engine, mode: Mode, state: str, y, e, h: float, t: float, hits):
    """Shrink [0, h] to the earliest guard crossing within BISECT_TOL."""
    best = None
    for n in hits:
        lo, hi = 0.0, h
        while hi - lo > BISECT_TOL:
            mid = 0.5 * (lo + hi)
            _, e_mid = eng.advance(mode, y, e, mid, t)
            if eng.guards[n](e_mid):
                hi = mid
            else:
                lo = mid
        if best is None or hi < best:
            best = hi
    y_hit, e_hit = eng.advance(mode, y, e, best, t)
    now = eng.enabled(state, e_hit)
    if not now:
        now = [min(hits)]
    return best, y_hit, e_hit, now


# --------------------------------------------------------------------------
# witness replay


def replay(m: Gha, modes: Sequence[str], fired: Sequence[int], dwells: Sequence[float],
           inputs: Sequence[Mapping[str, float]], params: Mapping[str, float],
           dt: float = DEFAULT_DT) -> Trace:
    """Re-simulate a fixed schedule: mode `modes[i]` for `dwells[i]` seconds, then
    transition `fired[i]` (or stay when -1). The last mode gets no dwell."""
    eng = _Engine(m, "fr")
    flat = eng.model
    e: dict[str, float] = {p: float(v) for p, v in params.items()}
    e.update({v: float(x) for v, x in initial_values(flat, eng.frs, eng.tracked).items()})
    t = 0.0
    segments: list[Segment] = []
    events: list[Event] = []
    state = modes[0]
    for i in range(len(modes)):
        mode = eng.modes[state]
        e.update({x: float(v) for x, v in inputs[i].items()})
        entry = {v: e[v] for v in eng.tracked}
        seg_inputs = {x: e[x] for x in eng.inputs}
        y = [e[v] for v in mode.state_vars]
        _, e = eng.advance(mode, y, e, 0.0, t)
        t0 = t
        samples = [(t, eng.row(e))]
        dwell = dwells[i] if i < len(dwells) else 0.0
        steps = max(1, math.ceil(dwell / dt - 1e-9)) if dwell > 0 else 0
        for j in range(steps):
            h = dwell / steps
            y, e = eng.advance(mode, y, e, h, t)
            t = t0 + dwell * (j + 1) / steps
            samples.append((t, eng.row(e)))
        exit_vals = {v: e[v] for v in eng.tracked}
        n = fired[i] if i < len(fired) else -1
        post = None
        if n is not None and n >= 0:
            tr = flat.transitions[n]
            if tr.src != state:
                raise SimulationError(f"transition {n} does not leave {state}")
            after, effects = eng.fire(n, e)
            events.append(Event(t, n, tr.src, tr.dst, effects))
            post = {v: after[v] for v in eng.tracked}
            e = after
        segments.append(Segment(state, t0, t, entry, exit_vals, seg_inputs, tuple(samples),
                                n if n is not None and n >= 0 else None, post))
        if n is not None and n >= 0:
            state = flat.transitions[n].dst
    return Trace(eng.columns, tuple(segments), tuple(events), dict(params))


# --------------------------------------------------------------------------
# trace vs constraint system


@dataclass(frozen=True)
class Step:
    state: str
    fired: int
    tau: float
    dwell: float
    begin: dict[str, float]
    end: dict[str, float]
    inputs: dict[str, float]


class TraceMismatch(ValueError):
    pass


def trace_steps(tr: Trace, cs: ConstraintSystem) -> list[Step]:
    """One step per segment; short traces are padded with zero-length stutter steps."""
    k = cs.k
    if not tr.segments:
        if k == 0:
            return []
        raise TraceMismatch("empty trace cannot cover a nonzero bound")
    steps: list[Step] = []
    segs = tr.segments[: k + 1]
    for i in range(k + 1):
        if i < len(segs):
            seg = segs[i]
            begin = dict(seg.entry)
            if i == k:
                end = dict(begin)
                steps.append(Step(seg.state, -1, seg.t_start, 0.0, begin, end, dict(seg.inputs)))
                continue
            steps.append(Step(seg.state, -1 if seg.fired is None else seg.fired, seg.t_start,
                              seg.t_end - seg.t_start, begin, dict(seg.exit), dict(seg.inputs)))
        else:
            prev = steps[-1]
            last = segs[-1]
            if i == len(segs):
                if last.fired is not None:
                    begin = dict(last.post)
                    state = cs.model.transitions[last.fired].dst
                else:
                    begin = dict(prev.end)
                    state = prev.state
                tau = last.t_end
            else:
                begin, state, tau = dict(prev.end), prev.state, prev.tau + prev.dwell
            end = dict(begin)
            if i < k:
                end.update(_algebraic(cs, state, end, prev.inputs, tr.params))
            steps.append(Step(state, -1, tau, 0.0, begin, end, dict(prev.inputs)))
    return steps


def _algebraic(cs: ConstraintSystem, state: str, vals, inputs, params) -> dict[str, float]:
    fs = cs.flows[state]
    env = dict(params)
    env.update(inputs)
    env.update(vals)
    return {v: evaluate(e, env) for v, e in fs.algebraic.items() if v not in fs.state_vars}


def step_assignment(tr: Trace, cs: ConstraintSystem) -> dict[str, float]:
    """Values for every step variable of `cs`, read off the trace."""
    env: dict[str, float] = dict(tr.params)
    steps = trace_steps(tr, cs)
    for i, st in enumerate(steps):
        env[V.mode(i)] = float(cs.mode_index(st.state))
        env[V.clock(i)] = st.tau
        for v in cs.tracked:
            env[V.begin(v, i)] = st.begin[v]
            env[V.end(v, i)] = st.end[v]
        for x, val in st.inputs.items():
            env[V.input(x, i)] = val
        if i < cs.k:
            env[V.dwell(i)] = st.dwell
            env[V.choice(i)] = float(st.fired)
    return env


class FlowChecker:
    """Re-integrates flow atoms with an adaptive high-order solver."""

    def __init__(self, cs: ConstraintSystem, rtol: float = 1e-10, atol: float = 1e-12):
        self.cs = cs
        self.rtol = rtol
        self.atol = atol
        self.modes = {name: _mode_from_fr(fs) for name, fs in cs.flows.items()}

    def residual(self, atom: Integral, env: Mapping[str, float]) -> float:
        step = int(atom.dwell.rsplit("_", 1)[1])
        d = env[atom.dwell]
        y0 = [env[b] for b in atom.begin]
        ends = [env[x] for x in atom.end]
        if d < 0:
            return float("inf")
        if d == 0:
            return max((abs(a - b) for a, b in zip(ends, y0)), default=0.0)
        mode = self.modes[atom.flow]
        e = {p: env[p] for p in self.cs.model.params if p in env}
        for x in self.cs.model.inputs:
            e[x] = env[V.input(x, step)]
        sol = solve_ivp(lambda _t, y: mode.deriv(y, e), (0.0, d), y0, method="DOP853",
                        rtol=self.rtol, atol=self.atol)
        if not sol.success:
            return float("inf")
        return max(abs(a - b) for a, b in zip(ends, sol.y[:, -1]))


def violation(e: Expr, env: Mapping[str, float], eps: float,
              flows: FlowChecker | None = None, positive: bool = True) -> float:
    """Nonnegative distance from satisfaction; 0 means the formula holds.

    Strict and non-strict comparisons are treated alike. An implication whose
    antecedent holds within `eps` demands its consequent.
    """
    if isinstance(e, Cmp):
        a = evaluate(e.lhs, env)
        b = evaluate(e.rhs, env)
        op = e.op
        if not positive:
            if op == "=":
                return 0.0 if a != b else 1.0
            op = {"<": ">=", "<=": ">", ">=": "<", ">": "<="}[op]
        if op in ("<", "<="):
            return max(0.0, a - b)
        if op in (">", ">="):
            return max(0.0, b - a)
        return abs(a - b)
    if isinstance(e, Bool):
        if e.op == "not":
            return violation(e.args[0], env, eps, flows, not positive)
        if e.op == "implies":
            a, b = e.args
            if positive:
                if violation(a, env, eps, flows, True) <= eps:
                    return violation(b, env, eps, flows, True)
                return 0.0
            return max(violation(a, env, eps, flows, True), violation(b, env, eps, flows, False))
        conj = (e.op == "and") == positive
        parts = [violation(x, env, eps, flows, positive) for x in e.args]
        if conj:
            return max(parts, default=0.0)
        return min(parts, default=float("inf"))
    if isinstance(e, Integral):
        if not positive or flows is None:
            raise EvalError("integral atoms can only be checked positively with a flow checker")
        return flows.residual(e, env)
    if isinstance(e, Temporal):
        raise EvalError(f"temporal condition {e.text} has no numeric semantics")
    raise EvalError(f"not a condition: {to_infix(e)}")


@dataclass(frozen=True)
class TraceReport:
    satisfied: bool
    violations: tuple[tuple[object, int | None, float], ...]

    @property
    def max_residual(self) -> float:
        return max((r for _, _, r in self.violations), default=0.0)


def check_trace(tr: Trace, cs: ConstraintSystem, eps: float = 1e-4,
                env: Mapping[str, float] | None = None) -> TraceReport:
    if env is None:
        env = step_assignment(tr, cs)
    flows = FlowChecker(cs)
    bad: list[tuple[object, int | None, float]] = []
    for d in cs.declarations:
        if d.name not in env:
            continue
        val = env[d.name]
        res = 0.0
        if d.lo is not None:
            res = max(res, float(d.lo) - val)
        if d.hi is not None:
            res = max(res, val - float(d.hi))
        if res > eps:
            bad.append((d, None, res))
    for a in cs.assertions:
        try:
            res = violation(a.expr, env, eps, flows)
        except KeyError as exc:
            raise TraceMismatch(f"trace does not bind {exc.args[0]}") from None
        if res > eps or math.isnan(res):
            bad.append((a, a.step, res))
    return TraceReport(not bad, tuple(bad))


# --------------------------------------------------------------------------
# property monitor, evaluated directly on the step table


def _env(st: Step, params, which: str) -> dict[str, float]:
    env = dict(params)
    env.update(st.inputs)
    env.update(st.end if which == "end" else st.begin)
    return env


def monitor(tr: Trace, prop, cs: ConstraintSystem) -> bool:
    """Does the trace (read as `cs.k` steps) satisfy the timing constraint?"""
    from .props import Periodic, Property, Reach, Response

    clocks = {}
    if isinstance(prop, Property):
        clocks = {c.name: c for c in prop.clocks}
        prop = prop.constraint
    steps = trace_steps(tr, cs)
    k = cs.k
    par = tr.params

    def truth(e: Expr, st: Step, which: str) -> bool:
        return bool(evaluate(e, _env(st, par, which)))

    if isinstance(prop, Reach):
        last = steps[k]
        if prop.mode is not None and last.state != prop.mode:
            return False
        if not truth(prop.predicate, last, "end"):
            return False
        return last.tau <= prop.deadline
    if isinstance(prop, Response):
        held, before = 0.0, False
        for i in range(k):
            now = truth(prop.trigger, steps[i], "end")
            if now:
                held = held + steps[i].dwell if before else 0.0
                if not (truth(prop.response, steps[i + 1], "begin") and held <= prop.deadline):
                    return False
            else:
                held = 0.0
            before = now
        return True
    if isinstance(prop, Periodic):
        name = prop.event_clock
        if name in cs.tracked:
            stamps = [st.begin[name] for st in steps]
        else:
            cond = clocks[name].cond
            stamps, last, before = [], 0.0, False
            for st in steps:
                now = truth(cond, st, "begin")
                if now and not before:
                    last = st.tau
                stamps.append(last)
                before = now
        return all(prop.min <= stamps[i + 1] - stamps[i] <= prop.max for i in range(k))
    raise TypeError(f"not a timing constraint: {prop!r}")


# --------------------------------------------------------------------------
# witnesses


class WitnessError(ValueError):
    pass


@dataclass(frozen=True)
class Confirmed:
    trace: Trace
    residual: float = 0.0


@dataclass(frozen=True)
class Spurious:
    residual: float
    trace: Trace | None = None


def _mid(w: Mapping[str, tuple[float, float]], name: str) -> float:
    if name not in w:
        raise WitnessError(f"witness does not bind {name}")
    lo, hi = w[name]
    return 0.5 * (lo + hi) if math.isfinite(lo) and math.isfinite(hi) else (lo if math.isfinite(lo) else hi)


def validate_witness(w: Mapping[str, tuple[float, float]], m: Gha, cs: ConstraintSystem,
                     prop=None, *, expect_violation: bool = True, eps: float = 1e-3,
                     dt: float = DEFAULT_DT) -> Confirmed | Spurious:
    """Concretize a solver box: replay interval midpoints and re-check everything.

    Confirmed iff the replayed trace satisfies the unrolling within `eps` and
    the property monitor agrees with the solver (violated when
    `expect_violation`, satisfied otherwise).
    """
    flat = cs.model
    k = cs.k
    params = {}
    for p, val in flat.params.items():
        params[p] = _mid(w, p) if isinstance(val, Range) else float(val)
    fired = [int(round(_mid(w, V.choice(i)))) for i in range(k)]
    dwells = [max(0.0, _mid(w, V.dwell(i))) for i in range(k)]
    inputs = [{x: _mid(w, V.input(x, i)) for x in flat.inputs} for i in range(k + 1)]
    modes = [flat.initial] * (k + 1)
    state = flat.initial
    for i, n in enumerate(fired):
        if n >= 0:
            if n >= len(flat.transitions) or flat.transitions[n].src != state:
                return Spurious(math.inf)
            state = flat.transitions[n].dst
        modes[i + 1] = state
    try:
        tr = replay(flat, modes, fired, dwells, inputs, params, dt)
    except SimulationError:
        return Spurious(math.inf)
    report = check_trace(tr, cs, eps)
    residual = report.max_residual
    ok = report.satisfied
    if prop is not None:
        holds = monitor(tr, prop, cs)
        if holds == expect_violation:
            ok = False
            residual = max(residual, eps)
    return Confirmed(tr, residual) if ok else Spurious(residual, tr)


# --------------------------------------------------------------------------
# falsification without a solver


@dataclass(frozen=True)
class Falsification:
    found: bool
    trace: Trace | None
    runs: int
    seed: int


def falsify(m: Gha, cs: ConstraintSystem, prop, *, runs: int = 200, seed: int = 0,
            dt: float = 1e-2, choose: str | None = "first") -> Falsification:
    """Random and corner-case input search for a trace violating `prop` within k steps.

    Inputs are held constant per run; ranged params are resampled each run. The
    first runs try every corner of the input box, the rest are uniform.
    """
    flat = cs.model
    rng = random.Random(seed)
    names = sorted(flat.inputs)
    boxes = [(float(r.lo), float(r.hi)) if r else (-1.0, 1.0)
             for r in (flat.inputs[x] for x in names)]
    corners = []
    if len(names) <= 6:
        import itertools
        corners = [dict(zip(names, pt)) for pt in itertools.product(*boxes)]
    for run in range(runs):
        if run < len(corners):
            ins = corners[run]
        else:
            ins = {x: rng.uniform(lo, hi) for x, (lo, hi) in zip(names, boxes)}
        try:
            tr = simulate(flat, ins, horizon=cs.k * cs.d_max, dt=dt, seed=rng.randrange(2**31),
                          max_dwell=cs.d_max, max_segments=cs.k + 1, choose=choose,
                          sample_every=10**9)
            ok = monitor(tr, prop, cs)
        except (SimulationError, EvalError):
            continue
        if not ok:
            return Falsification(True, tr, run + 1, seed)
    return Falsification(False, None, runs, seed)
