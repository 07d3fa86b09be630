"""Random GHA models for property tests and sweeps.

Every generated model has one bounded input `u`, one integrator state `x` per
state, an optional algebraic output `y`, and at most one outgoing transition
per state (so simulation never faces a choice).
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .expr import Binary, Cmp, Const, Var
from .model import Block, Gha, Line, Range, SlState, Transition


@dataclass
class GenConfig:
    max_states: int = 3
    max_ops: int = 3  # with U, X and the Outport this keeps states at <= 6 blocks
    depth: int = 0  # subsystem nesting
    smooth: bool = True  # only Lipschitz-bounded ops (no Product/Switch)
    guard_range: tuple[float, float] = (-1.5, 1.5)
    require_subsystem: bool = False  # first op of every state is a subsystem (needs depth > 0)


def _frac(rng: random.Random, lo: float, hi: float, den: int = 8) -> Fraction:
    return Fraction(rng.randint(int(lo * den), int(hi * den)), den)


class _Builder:
    def __init__(self, rng: random.Random, cfg: GenConfig):
        self.rng = rng
        self.cfg = cfg
        self.n = 0

    def fresh(self, stem: str) -> str:
        self.n += 1
        return f"{stem}{self.n}"

    def op(self, signals, blocks, lines, depth_left: int, force: str | None = None) -> tuple[str, int]:
        """Append one operator fed from existing signals; returns its output port."""
        rng = self.rng
        kinds = ["Gain", "Sum", "Trigonometry", "Saturation"]
        if not self.cfg.smooth:
            kinds += ["Product", "Switch", "Relational"]
        if depth_left > 0:
            kinds += ["Subsystem"] * 2
        kind = force or rng.choice(kinds)
        bid = self.fresh(kind[:3])
        pick = lambda: rng.choice(signals)  # noqa: E731
        if kind == "Gain":
            b, ins = Block(bid, kind, {"k": _frac(rng, -1, 1)}), [pick()]
        elif kind == "Sum":
            signs = rng.choice(["++", "+-", "-+"])
            b, ins = Block(bid, kind, {"signs": signs}), [pick(), pick()]
        elif kind == "Trigonometry":
            b, ins = Block(bid, kind, {"fn": rng.choice(["sin", "cos"])}), [pick()]
        elif kind == "Saturation":
            lo = _frac(rng, -1, 0)
            b, ins = Block(bid, kind, {"lower": lo, "upper": lo + _frac(rng, 0.25, 1.5)}), [pick()]
        elif kind == "Product":
            b, ins = Block(bid, kind, {"ops": "**"}), [pick(), pick()]
        elif kind == "Switch":
            b, ins = Block(bid, kind, {"threshold": _frac(rng, -1, 1)}), [pick(), pick(), pick()]
        elif kind == "Relational":
            b, ins = Block(bid, kind, {"op": rng.choice(["<", "<=", ">", ">="])}), [pick(), pick()]
        else:
            n_in = rng.randint(1, 2)
            b = self.subsystem(bid, n_in, depth_left - 1)
            ins = [pick() for _ in range(n_in)]
        blocks.append(b)
        for p, src in enumerate(ins, start=1):
            lines.append(Line(src, ((bid, p),)))
        return (bid, 1)

    def subsystem(self, bid: str, n_in: int, depth_left: int) -> Block:
        blocks: list[Block] = []
        lines: list[Line] = []
        signals = []
        for p in range(1, n_in + 1):
            pid = self.fresh("In")
            blocks.append(Block(pid, "Inport", {"port": p}))
            signals.append((pid, 1))
        for _ in range(self.rng.randint(1, 2)):
            signals.append(self.op(signals, blocks, lines, depth_left))
        out = self.fresh("Out")
        blocks.append(Block(out, "Outport", {"port": 1}))
        lines.append(Line(signals[-1], ((out, 1),)))
        return Block(bid, "Subsystem", {}, tuple(blocks), tuple(_merge(lines)))


def _merge(lines: list[Line]) -> list[Line]:
    """One line per source, destinations in insertion order."""
    grouped: dict[tuple[str, int], list] = {}
    for ln in lines:
        grouped.setdefault(ln.src, []).extend(ln.dsts)
    return [Line(src, tuple(dsts)) for src, dsts in grouped.items()]


def random_state(rng: random.Random, name: str, cfg: GenConfig) -> SlState:
    b = _Builder(rng, cfg)
    blocks = [Block("U", "Inport", {"var": "u"}),
              Block("X", "Integrator", {"init": _frac(rng, -1, 1), "out": "x"})]
    lines: list[Line] = []
    signals = [("U", 1), ("X", 1)]
    n_ops = rng.randint(0, cfg.max_ops)
    force = cfg.require_subsystem and cfg.depth > 0
    if force:
        n_ops = max(n_ops, 1)
    for j in range(n_ops):
        signals.append(b.op(signals, blocks, lines, cfg.depth,
                            "Subsystem" if force and j == 0 else None))
    lines.append(Line(signals[-1] if len(signals) > 2 else rng.choice(signals), (("X", 1),)))
    vars_ = ["u", "x"]
    if rng.random() < 0.7:
        blocks.append(Block("Y", "Outport", {"var": "y"}))
        lines.append(Line(rng.choice(signals), (("Y", 1),)))
        vars_.append("y")
    return SlState(name, tuple(vars_), tuple(blocks), tuple(_merge(lines)))


def random_model(seed: int, cfg: GenConfig | None = None) -> Gha:
    cfg = cfg or GenConfig()
    rng = random.Random(seed)
    n = rng.randint(1, cfg.max_states)
    names = [f"S{i}" for i in range(n)]
    states = tuple(random_state(rng, s, cfg) for s in names)
    transitions = []
    if n > 1 or rng.random() < 0.5:
        for i, s in enumerate(names):
            if rng.random() < 0.25:
                continue
            var = Var("x") if rng.random() < 0.7 else Var("y")
            if var.name == "y" and not any(b.id == "Y" for b in states[i].blocks):
                var = Var("x")
            op = rng.choice([">=", "<="])
            guard = Cmp(op, var, Const(_frac(rng, *cfg.guard_range)))
            actions = ()
            if rng.random() < 0.5:
                actions = (("x", Binary("mul", Const(_frac(rng, -1, 1)), Var("x"))),)
            transitions.append(Transition(s, names[(i + 1) % n], guard, actions))
    return Gha(
        inputs={"u": Range(Fraction(-1), Fraction(1))},
        outputs=("y",),
        params={},
        inits={},
        states=states,
        transitions=tuple(transitions),
        initial=names[0],
    )


def random_inputs(seed: int) -> dict[str, float]:
    return {"u": random.Random(seed ^ 0x5EED).uniform(-1, 1)}
