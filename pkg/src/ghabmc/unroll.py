"""k-step unrolling of a flat GHA into a solver-independent constraint system.

Per step i < k and per tracked variable v, exactly one update applies under
each mode hypothesis s_i = s:

* continuous: v is an integrator state of s; one `Integral` atom covers all of
  them for that (step, state) pair,
* algebraic: v is an output of s with closed form Phi, so v_i_end = Phi,
* frame: v_i_end = v_i_begin.

Transitions use a choice variable c_i (index of the fired transition, -1 for a
stutter step) so that overlapping guards stay nondeterministic instead of
contradicting each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction

from .expr import (
    Binary,
    Const,
    Expr,
    Integral,
    Var,
    and_,
    eq,
    free_vars,
    implies,
    not_,
    or_,
    substitute,
)
from .flatten import is_flat
from .frs import FlowSystem, derive_fr
from .model import Gha, Range

KINDS = ("continuous-update", "algebraic-update", "frame", "transition", "stutter", "init", "clock")

DEFAULT_DWELL_MAX = 10.0


class UnrollError(ValueError):
    pass


@dataclass(frozen=True)
class StepVarSpace:
    k: int

    @staticmethod
    def begin(v: str, i: int) -> str:
        return f"{v}_{i}_begin"

    @staticmethod
    def end(v: str, i: int) -> str:
        return f"{v}_{i}_end"

    @staticmethod
    def mode(i: int) -> str:
        return f"s_{i}"

    @staticmethod
    def dwell(i: int) -> str:
        return f"d_{i}"

    @staticmethod
    def clock(i: int) -> str:
        return f"tau_{i}"

    @staticmethod
    def choice(i: int) -> str:
        return f"c_{i}"

    @staticmethod
    def input(x: str, i: int) -> str:
        return f"{x}_{i}"


V = StepVarSpace


@dataclass(frozen=True)
class Decl:
    name: str
    sort: str = "Real"
    lo: Fraction | None = None
    hi: Fraction | None = None


@dataclass(frozen=True)
class Assertion:
    kind: str
    step: int | None
    subject: str
    expr: Expr
    state: str | None = None


@dataclass(frozen=True)
class ConstraintSystem:
    k: int
    d_max: float
    model: Gha
    flows: dict[str, FlowSystem]
    states: tuple[str, ...]
    tracked: tuple[str, ...]
    declarations: tuple[Decl, ...]
    assertions: tuple[Assertion, ...]
    init_values: dict[str, Fraction] = field(default_factory=dict)

    @property
    def vars(self) -> V:
        return V(self.k)

    def mode_index(self, state: str) -> int:
        return self.states.index(state)

    @property
    def int_vars(self) -> frozenset[str]:
        return frozenset(d.name for d in self.declarations if d.sort == "Int")

    def extend(self, declarations=(), assertions=()) -> "ConstraintSystem":
        return replace(
            self,
            declarations=self.declarations + tuple(declarations),
            assertions=self.assertions + tuple(assertions),
        )


def derive_all(m: Gha) -> dict[str, FlowSystem]:
    return {s.name: derive_fr(s) for s in m.states}


def initial_values(m: Gha, frs: dict[str, FlowSystem], tracked) -> dict[str, Fraction]:
    """Explicit `init` entries, then integrator init params (initial state first), then 0."""
    values: dict[str, Fraction] = {}
    order = sorted(frs, key=lambda name: (name != m.initial, name))
    for v in tracked:
        if v in m.inits:
            values[v] = m.inits[v]
            continue
        values[v] = Fraction(0)
        for name in order:
            if v in frs[name].init:
                values[v] = frs[name].init[v].value
                break
    return values


def tracked_vars(m: Gha, frs: dict[str, FlowSystem]) -> tuple[str, ...]:
    names = set(m.outputs)
    for fs in frs.values():
        names.update(fs.state_vars)
    return tuple(sorted(names))


def unroll(m: Gha, frs: dict[str, FlowSystem] | None = None, k: int = 1,
           d_max: float = DEFAULT_DWELL_MAX) -> ConstraintSystem:
    if not is_flat(m):
        raise UnrollError("model must be flattened before unrolling")
    if k < 0:
        raise UnrollError("bound k must be nonnegative")
    if d_max <= 0:
        raise UnrollError("dwell-max must be positive")
    if frs is None:
        frs = derive_all(m)
    missing = [s.name for s in m.states if s.name not in frs]
    if missing:
        raise UnrollError(f"no flow system for states {', '.join(missing)}")
    if m.initial not in frs:
        raise UnrollError(f"unresolved initial state {m.initial}")

    states = tuple(sorted(frs))
    idx = {s: i for i, s in enumerate(states)}
    tracked = tracked_vars(m, frs)
    tracked_set = set(tracked)
    for t in m.transitions:
        for target, _ in t.actions:
            if target not in tracked_set:
                raise UnrollError(f"action target {target} is not declared")
    inputs = sorted(m.inputs)
    dmax = Fraction(repr(float(d_max)))

    decls: list[Decl] = []
    for v in tracked:
        for i in range(k + 1):
            decls.append(Decl(V.begin(v, i)))
            decls.append(Decl(V.end(v, i)))
    for x in inputs:
        rng = m.inputs[x]
        for i in range(k + 1):
            decls.append(Decl(V.input(x, i), "Real", rng.lo if rng else None, rng.hi if rng else None))
    for p in sorted(m.params):
        val = m.params[p]
        decls.append(Decl(p, "Real", val.lo, val.hi) if isinstance(val, Range) else Decl(p))
    for i in range(k + 1):
        decls.append(Decl(V.mode(i), "Int", Fraction(0), Fraction(len(states) - 1)))
        decls.append(Decl(V.clock(i), "Real", Fraction(0), dmax * k))
    for i in range(k):
        decls.append(Decl(V.dwell(i), "Real", Fraction(0), dmax))
        decls.append(Decl(V.choice(i), "Int", Fraction(-1), Fraction(len(m.transitions) - 1)))
    decls.sort(key=_decl_key)

    asserts: list[Assertion] = []
    init_vals = initial_values(m, frs, tracked)
    asserts.append(Assertion("init", 0, "mode", eq(Var(V.mode(0)), Const(Fraction(idx[m.initial])))))
    asserts.append(Assertion("init", 0, "clock", eq(Var(V.clock(0)), Const(Fraction(0)))))
    for v in tracked:
        asserts.append(Assertion("init", 0, v, eq(Var(V.begin(v, 0)), Const(init_vals[v]))))
    for p in sorted(m.params):
        val = m.params[p]
        if not isinstance(val, Range):
            asserts.append(Assertion("init", None, p, eq(Var(p), Const(val))))

    def mode_is(i: int, s: str) -> Expr:
        return eq(Var(V.mode(i)), Const(Fraction(idx[s])))

    def choice_is(i: int, t: int) -> Expr:
        return eq(Var(V.choice(i)), Const(Fraction(t)))

    outgoing = {s: [(n, t) for n, t in enumerate(m.transitions) if t.src == s] for s in states}

    for i in range(k):
        at_end = {v: Var(V.end(v, i)) for v in tracked}
        at_end.update({x: Var(V.input(x, i)) for x in inputs})
        for s in states:
            fs = frs[s]
            if fs.state_vars:
                atom = Integral(
                    s, V.dwell(i),
                    tuple(V.begin(v, i) for v in fs.state_vars),
                    tuple(V.end(v, i) for v in fs.state_vars),
                )
                asserts.append(Assertion("continuous-update", i, ",".join(fs.state_vars),
                                         implies(mode_is(i, s), atom), s))
        for v in tracked:
            for s in states:
                fs = frs[s]
                if v in fs.state_vars:
                    continue
                if v in fs.algebraic:
                    rhs = substitute(fs.algebraic[v], at_end)
                    asserts.append(Assertion("algebraic-update", i, v,
                                             implies(mode_is(i, s), eq(Var(V.end(v, i)), rhs)), s))
                else:
                    asserts.append(Assertion(
                        "frame", i, v,
                        implies(mode_is(i, s), eq(Var(V.end(v, i)), Var(V.begin(v, i)))), s))

        carry = [eq(Var(V.begin(v, i + 1)), Var(V.end(v, i))) for v in tracked]
        for n, t in enumerate(m.transitions):
            env = dict(at_end)
            for target, rhs in t.actions:
                env[target] = substitute(rhs, env)
            post = [eq(Var(V.begin(v, i + 1)), env[v]) for v in tracked]
            asserts.append(Assertion(
                "transition", i, f"t{n}",
                implies(and_(mode_is(i, t.src), choice_is(i, n)),
                        and_(substitute(t.cond, at_end), mode_is(i + 1, t.dst), *post)),
                t.src,
            ))
        for s in states:
            guards = [substitute(t.cond, at_end) for _, t in outgoing[s]]
            stay = [choice_is(i, -1)]
            if guards:
                stay.append(not_(or_(*guards)) if len(guards) > 1 else not_(guards[0]))
            stay += [mode_is(i + 1, s), *carry]
            options = [and_(*stay)] + [choice_is(i, n) for n, _ in outgoing[s]]
            asserts.append(Assertion("stutter", i, s, implies(mode_is(i, s), or_(*options)), s))
        asserts.append(Assertion(
            "clock", i, "tau",
            eq(Var(V.clock(i + 1)), _add(Var(V.clock(i)), Var(V.dwell(i))))))

    if k >= 1:
        for v in tracked:
            asserts.append(Assertion("frame", k, v, eq(Var(V.end(v, k)), Var(V.begin(v, k)))))

    return ConstraintSystem(k, float(d_max), m, dict(frs), states, tracked, tuple(decls),
                            tuple(asserts), init_vals)


def _add(a: Expr, b: Expr) -> Expr:
    return Binary("add", a, b)


def _decl_key(d: Decl):
    # variables lexicographic by base name, then step ascending, begin before end
    name = d.name
    for suffix, rank in (("_begin", 0), ("_end", 1)):
        if name.endswith(suffix):
            base, _, step = name[: -len(suffix)].rpartition("_")
            return (base, int(step), rank)
    base, _, step = name.rpartition("_")
    if base and step.isdigit():
        return (base, int(step), 0)
    return (name, -1, 0)


def check_declared(cs: ConstraintSystem) -> list[str]:
    """Free variables of assertions that have no declaration."""
    declared = {d.name for d in cs.declarations}
    missing = set()
    for a in cs.assertions:
        missing |= free_vars(a.expr) - declared
    return sorted(missing)
