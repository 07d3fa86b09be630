"""Formula representations: per-state ODE flows and closed-form outputs."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from fractions import Fraction

from .expr import (
    Binary,
    Bool,
    Cmp,
    Const,
    Expr,
    Ite,
    Unary,
    Var,
    eq,
    not_,
    to_smt,
)
from .model import SlState, block_arity


class AlgebraicLoopError(ValueError):
    def __init__(self, cycle: list[str]):
        super().__init__(f"algebraic loop [{', '.join(cycle)}]")
        self.cycle = cycle


@dataclass(frozen=True)
class FlowSystem:
    state_name: str
    state_vars: tuple[str, ...]
    derivs: dict[str, Expr] = field(default_factory=dict)
    init: dict[str, Expr] = field(default_factory=dict)
    algebraic: dict[str, Expr] = field(default_factory=dict)


def _drivers(s: SlState) -> dict[tuple[str, int], tuple[str, int]]:
    out = {}
    for ln in s.lines:
        for dst in ln.dsts:
            out[dst] = ln.src
    return out


def block_order(s: SlState) -> list[str]:
    """Topological order of a flat state's blocks, Integrator outputs acting as sources.

    Ties are broken by declaration order, so the result is deterministic.
    """
    index = {b.id: i for i, b in enumerate(s.blocks)}
    kinds = {b.id: b.kind for b in s.blocks}
    succ: dict[str, set[str]] = {b.id: set() for b in s.blocks}
    indeg = {b.id: 0 for b in s.blocks}
    for ln in s.lines:
        src = ln.src[0]
        if kinds.get(src) == "Integrator":
            continue
        for dst, _ in ln.dsts:
            if dst not in succ[src]:
                succ[src].add(dst)
                indeg[dst] += 1
    ready = [(index[b], b) for b, n in indeg.items() if n == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        _, b = heapq.heappop(ready)
        order.append(b)
        for nxt in succ[b]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(ready, (index[nxt], nxt))
    if len(order) < len(s.blocks):
        raise AlgebraicLoopError(_find_cycle({b for b, n in indeg.items() if n > 0}, succ, index))
    return order


def _find_cycle(nodes: set[str], succ: dict[str, set[str]], index: dict[str, int]) -> list[str]:
    # every leftover node keeps a leftover predecessor, so walking backwards must repeat
    preds: dict[str, list[str]] = {n: [] for n in nodes}
    for src, dsts in succ.items():
        if src in nodes:
            for d in dsts:
                if d in nodes:
                    preds[d].append(src)
    path: list[str] = []
    pos: dict[str, int] = {}
    node = min(nodes, key=index.__getitem__)
    while node not in pos:
        pos[node] = len(path)
        path.append(node)
        node = min(preds[node], key=index.__getitem__)
    cycle = list(reversed(path[pos[node]:]))
    first = min(range(len(cycle)), key=lambda i: index[cycle[i]])
    return cycle[first:] + cycle[:first]


def integrator_names(s: SlState) -> dict[str, str]:
    """Map Integrator block id to its state variable name."""
    by_id = {b.id: b for b in s.blocks}
    fanout: dict[str, list[tuple[str, int]]] = {}
    for ln in s.lines:
        fanout.setdefault(ln.src[0], []).extend(ln.dsts)
    names = {}
    for b in s.blocks:
        if b.kind != "Integrator":
            continue
        if "out" in b.params:
            names[b.id] = str(b.params["out"])
            continue
        outports = [by_id[d] for d, _ in fanout.get(b.id, []) if d in by_id and by_id[d].kind == "Outport"]
        if len(outports) == 1:
            names[b.id] = str(outports[0].params["var"])
        else:
            names[b.id] = f"{s.name}.{b.id}.x"
    return names


def _num(b, key, default) -> Const:
    return Const(Fraction(b.params.get(key, default)))


def derive_fr(s: SlState) -> FlowSystem:
    """Walk the blocks in dataflow order, building each output from its inputs."""
    order = block_order(s)
    by_id = {b.id: b for b in s.blocks}
    drivers = _drivers(s)
    names = integrator_names(s)
    out: dict[tuple[str, int], Expr] = {}
    for bid, name in names.items():
        out[(bid, 1)] = Var(name)

    state_vars = [names[b.id] for b in s.blocks if b.kind == "Integrator"]
    derivs: dict[str, Expr] = {}
    init: dict[str, Expr] = {}
    algebraic: dict[str, Expr] = {}

    for bid in order:
        b = by_id[bid]
        n_in = block_arity(b)[0]
        u = [out[drivers[(bid, p)]] for p in range(1, n_in + 1)]
        k = b.kind
        if k == "Integrator":
            derivs[names[bid]] = u[0]
            init[names[bid]] = _num(b, "init", 0)
            continue
        if k == "Outport":
            algebraic[str(b.params["var"])] = u[0]
            continue
        if k == "Inport":
            y = Var(str(b.params["var"]))
        elif k == "Constant":
            y = _num(b, "value", 0)
        elif k == "Gain":
            y = Binary("mul", _num(b, "k", 1), u[0])
        elif k == "Sum":
            signs = str(b.params.get("signs", "++"))
            y = u[0] if signs[0] == "+" else Unary("neg", u[0])
            for sign, term in zip(signs[1:], u[1:]):
                y = Binary("add" if sign == "+" else "sub", y, term)
        elif k == "Product":
            ops = str(b.params.get("ops", "**"))
            y = u[0] if ops[0] == "*" else Binary("div", Const(Fraction(1)), u[0])
            for op, term in zip(ops[1:], u[1:]):
                y = Binary("mul" if op == "*" else "div", y, term)
        elif k == "Trigonometry":
            y = Unary(str(b.params.get("fn", "sin")), u[0])
        elif k == "Sqrt":
            y = Unary("sqrt", u[0])
        elif k == "Exp":
            y = Unary(str(b.params.get("fn", "exp")), u[0])
        elif k == "Saturation":
            y = Binary("min", Binary("max", u[0], _num(b, "lower", 0)), _num(b, "upper", 1))
        elif k == "Switch":
            y = Ite(Cmp(">=", u[1], _num(b, "threshold", 0)), u[0], u[2])
        elif k == "Relational":
            op = str(b.params.get("op", "<="))
            y = Ite(Cmp("=" if op == "==" else op, u[0], u[1]), Const(Fraction(1)), Const(Fraction(0)))
        elif k == "Logical":
            op = str(b.params.get("op", "and"))
            if op == "not":
                cond = eq(u[0], Const(Fraction(0)))
            else:
                cond = Bool(op, tuple(not_(eq(x, Const(Fraction(0)))) for x in u))
            y = Ite(cond, Const(Fraction(1)), Const(Fraction(0)))
        else:
            raise ValueError(f"unsupported block kind {k} in {s.name}/{bid}")
        out[(bid, 1)] = y

    return FlowSystem(s.name, tuple(state_vars), derivs, init, algebraic)


def format_flow(fs: FlowSystem) -> str:
    lines = [f"state {fs.state_name}"]
    for v in fs.state_vars:
        lines.append(f"  d/dt[{v}] = {to_smt(fs.derivs[v])}")
    for v, e in fs.algebraic.items():
        if e != Var(v):  # an Outport fed straight by its own integrator
            lines.append(f"  {v} = {to_smt(e)}")
    return "\n".join(lines)
