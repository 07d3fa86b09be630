"""GHA data model, the textual model format and structural validation."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Union

from .expr import (
    TRUE,
    Binary,
    Expr,
    ExprSyntaxError,
    Temporal,
    Unary,
    check_sorts,
    format_number,
    free_vars,
    parse_expr,
    to_infix,
    walk,
)

BLOCK_KINDS = (
    "Constant", "Gain", "Sum", "Product", "Integrator", "Trigonometry", "Sqrt", "Exp",
    "Saturation", "Switch", "Relational", "Logical", "Inport", "Outport", "Subsystem",
)

# step-variable prefixes used by the unroller
RESERVED_NAMES = frozenset({"s", "d", "tau", "c"})

ParamValue = Union[Fraction, str]


class ModelSyntaxError(ValueError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


@dataclass(frozen=True)
class Block:
    id: str
    kind: str
    params: dict[str, ParamValue] = field(default_factory=dict)
    blocks: tuple["Block", ...] = ()
    lines: tuple["Line", ...] = ()

    def param(self, name: str, default=None):
        return self.params.get(name, default)

    @property
    def in_ports(self) -> tuple[str, ...]:
        if self.kind == "Outport":
            return (str(self.params.get("var", f"{self.id}.in1")),)
        return tuple(f"{self.id}.in{i + 1}" for i in range(block_arity(self)[0]))

    @property
    def out_ports(self) -> tuple[str, ...]:
        if self.kind == "Inport":
            return (str(self.params.get("var", f"{self.id}.out1")),)
        n = block_arity(self)[1]
        if n == 1:
            return (str(self.params.get("out", self.id)),)
        return tuple(f"{self.id}.out{i + 1}" for i in range(n))


@dataclass(frozen=True)
class Line:
    src: tuple[str, int]
    dsts: tuple[tuple[str, int], ...]


@dataclass(frozen=True)
class SlState:
    name: str
    vars: tuple[str, ...]
    blocks: tuple[Block, ...] = ()
    lines: tuple[Line, ...] = ()


@dataclass(frozen=True)
class Transition:
    src: str
    dst: str
    cond: Expr = TRUE
    actions: tuple[tuple[str, Expr], ...] = ()

    @property
    def vars(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(v for v, _ in self.actions))


@dataclass(frozen=True)
class Range:
    lo: Fraction
    hi: Fraction


@dataclass(frozen=True)
class Gha:
    inputs: dict[str, Range | None] = field(default_factory=dict)
    outputs: tuple[str, ...] = ()
    params: dict[str, Fraction | Range] = field(default_factory=dict)
    inits: dict[str, Fraction] = field(default_factory=dict)
    states: tuple[SlState, ...] = ()
    transitions: tuple[Transition, ...] = ()
    initial: str | None = None

    def state(self, name: str) -> SlState:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    @property
    def state_names(self) -> list[str]:
        return [s.name for s in self.states]


def _subsystem_ports(b: Block, kind: str) -> list[Block]:
    ports = [x for x in b.blocks if x.kind == kind]
    return sorted(ports, key=lambda x: _port_index(x))


def _port_index(b: Block) -> int:
    p = b.params.get("port", 1)
    try:
        return int(Fraction(p))
    except (TypeError, ValueError):
        return 1


def block_arity(b: Block) -> tuple[int, int]:
    """(inputs, outputs) implied by kind and params."""
    k = b.kind
    if k == "Constant":
        return 0, 1
    if k in ("Gain", "Integrator", "Trigonometry", "Sqrt", "Exp", "Saturation"):
        return 1, 1
    if k == "Sum":
        return len(str(b.params.get("signs", "++"))), 1
    if k == "Product":
        return len(str(b.params.get("ops", "**"))), 1
    if k == "Switch":
        return 3, 1
    if k == "Relational":
        return 2, 1
    if k == "Logical":
        if str(b.params.get("op", "and")) == "not":
            return 1, 1
        return int(Fraction(b.params.get("inputs", 2))), 1
    if k == "Inport":
        return 0, 1
    if k == "Outport":
        return 1, 0
    if k == "Subsystem":
        return len(_subsystem_ports(b, "Inport")), len(_subsystem_ports(b, "Outport"))
    raise ValueError(f"unknown block kind {k}")


def subsystem_inports(b: Block) -> list[Block]:
    return _subsystem_ports(b, "Inport")


def subsystem_outports(b: Block) -> list[Block]:
    return _subsystem_ports(b, "Outport")


# --------------------------------------------------------------------------
# parsing

_IDENT = r"[A-Za-z_][A-Za-z0-9_]*"
_VARNAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_PORT = re.compile(rf"^({_IDENT}(?:/{_IDENT})*)\.(\d+)$")


@dataclass
class _Node:
    text: str
    line: int
    col: int
    children: list["_Node"] = field(default_factory=list)


def _tree(text: str) -> list[_Node]:
    roots: list[_Node] = []
    stack: list[tuple[int, _Node]] = []
    for n, raw in enumerate(text.split("\n"), start=1):
        body = raw.split("#", 1)[0].rstrip()
        if not body.strip():
            continue
        if "\t" in body[: len(body) - len(body.lstrip())]:
            raise ModelSyntaxError("tabs are not allowed in indentation", n)
        indent = len(body) - len(body.lstrip(" "))
        node = _Node(body.strip(), n, indent + 1)
        while stack and stack[-1][0] >= indent:
            stack.pop()
        if stack:
            stack[-1][1].children.append(node)
        elif indent:
            raise ModelSyntaxError("unexpected indentation", n, indent + 1)
        else:
            roots.append(node)
        stack.append((indent, node))
    return roots


def _number(text: str, node: _Node) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError):
        raise ModelSyntaxError(f"expected a number, found {text.strip()!r}", node.line, node.col) from None


def _expr(text: str, node: _Node) -> Expr:
    try:
        return parse_expr(text)
    except ExprSyntaxError as exc:
        col = node.col + max(node.text.find(text.strip()), 0) + exc.column - 1
        raise ModelSyntaxError(str(exc).rsplit(" (column", 1)[0], node.line, col) from None


def _range(text: str, node: _Node) -> Range:
    m = re.fullmatch(r"\[\s*([^,\]]+),\s*([^\]]+)\]", text.strip())
    if not m:
        raise ModelSyntaxError(f"expected [lo, hi], found {text.strip()!r}", node.line, node.col)
    return Range(_number(m.group(1), node), _number(m.group(2), node))


def _param_value(text: str) -> ParamValue:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        return text


def _port_ref(text: str, node: _Node) -> tuple[str, int]:
    m = _PORT.match(text.strip())
    if not m:
        raise ModelSyntaxError(f"bad port reference {text.strip()!r}", node.line, node.col)
    return m.group(1), int(m.group(2))


def _parse_block(node: _Node) -> Block:
    parts = node.text.split()
    if len(parts) < 2:
        raise ModelSyntaxError("block needs an id", node.line, node.col)
    bid = parts[1]
    params: dict[str, ParamValue] = {}
    kind = None
    for item in parts[2:]:
        if "=" not in item:
            raise ModelSyntaxError(f"expected key=value, found {item!r}", node.line, node.col)
        key, value = item.split("=", 1)
        if key == "kind":
            kind = value
            continue
        if key in params:
            raise ModelSyntaxError(f"duplicate key {key!r}", node.line, node.col)
        params[key] = _param_value(value)
    if kind is None:
        raise ModelSyntaxError(f"block {bid} has no kind", node.line, node.col)
    if kind not in BLOCK_KINDS:
        raise ModelSyntaxError(f"unknown block kind {kind!r}", node.line, node.col)
    blocks, lines = _parse_body(node.children, allow_vars=False)[1:]
    if (blocks or lines) and kind != "Subsystem":
        raise ModelSyntaxError("only Subsystem blocks may contain blocks", node.line, node.col)
    return Block(bid, kind, params, tuple(blocks), tuple(lines))


def _parse_line(node: _Node) -> Line:
    m = re.fullmatch(r"line\s+(\S+)\s*->\s*(.+)", node.text)
    if not m:
        raise ModelSyntaxError("expected 'line <block.port> -> <block.port>, ...'", node.line, node.col)
    src = _port_ref(m.group(1), node)
    dsts = tuple(_port_ref(p, node) for p in m.group(2).split(","))
    return Line(src, dsts)


def _parse_body(nodes: list[_Node], allow_vars: bool):
    vars_: list[str] = []
    blocks: list[Block] = []
    lines: list[Line] = []
    seen_vars = False
    for child in nodes:
        head = child.text.split(None, 1)[0]
        if head == "vars" and allow_vars:
            if seen_vars:
                raise ModelSyntaxError("duplicate key 'vars'", child.line, child.col)
            seen_vars = True
            rest = child.text[4:].strip()
            vars_.extend(v.strip() for v in rest.split(",") if v.strip())
        elif head == "block":
            blocks.append(_parse_block(child))
        elif head == "line":
            lines.append(_parse_line(child))
        else:
            raise ModelSyntaxError(f"unexpected entry {head!r}", child.line, child.col)
    return vars_, blocks, lines


_TRANSITION = re.compile(
    rf"^transition\s+({_IDENT})\s*->\s*({_IDENT})(?:\s+when\s+(.*?))?(?:\s+do\s+(.*))?$"
)


def _parse_transition(node: _Node) -> Transition:
    m = _TRANSITION.match(node.text)
    if not m:
        raise ModelSyntaxError("expected 'transition <src> -> <dst> when <cond> [do ...]'",
                               node.line, node.col)
    cond = _expr(m.group(3), node) if m.group(3) else TRUE
    actions = []
    if m.group(4):
        for part in m.group(4).split(";"):
            if not part.strip():
                continue
            if ":=" not in part:
                raise ModelSyntaxError(f"expected <var> := <expr>, found {part.strip()!r}",
                                       node.line, node.col)
            target, rhs = part.split(":=", 1)
            target = target.strip()
            if not re.fullmatch(_VARNAME, target):
                raise ModelSyntaxError(f"bad assignment target {target!r}", node.line, node.col)
            actions.append((target, _expr(rhs, node)))
    return Transition(m.group(1), m.group(2), cond, tuple(actions))


def parse_model(text: str) -> Gha:
    """Parse a model document. Only syntax is checked here; see `validate_model`."""
    inputs: dict[str, Range | None] = {}
    outputs: list[str] = []
    params: dict[str, Fraction | Range] = {}
    inits: dict[str, Fraction] = {}
    states: list[SlState] = []
    transitions: list[Transition] = []
    initial = None
    sections_seen: set[str] = set()

    for node in _tree(text):
        head, _, rest = node.text.partition(" ")
        rest = rest.strip()
        if head in ("inputs", "outputs", "params", "init"):
            if head in sections_seen:
                raise ModelSyntaxError(f"duplicate key {head!r}", node.line, node.col)
            sections_seen.add(head)
            for child in node.children:
                _parse_decl(head, child, inputs, outputs, params, inits)
        elif head == "state":
            if not re.fullmatch(_IDENT, rest):
                raise ModelSyntaxError(f"bad state name {rest!r}", node.line, node.col)
            vars_, blocks, lines = _parse_body(node.children, allow_vars=True)
            states.append(SlState(rest, tuple(vars_), tuple(blocks), tuple(lines)))
        elif head == "transition":
            transitions.append(_parse_transition(node))
        elif head == "initial":
            if initial is not None:
                raise ModelSyntaxError("duplicate key 'initial'", node.line, node.col)
            initial = rest
        else:
            raise ModelSyntaxError(f"unknown section {head!r}", node.line, node.col)
    return Gha(inputs, tuple(outputs), params, inits, tuple(states), tuple(transitions), initial)


def _parse_decl(section, node, inputs, outputs, params, inits) -> None:
    text = node.text
    m = re.fullmatch(rf"({_VARNAME})(?:\s+in\s+(.+)|\s*=\s*(.+))?", text)
    if not m:
        raise ModelSyntaxError(f"bad declaration {text!r}", node.line, node.col)
    name, rng, val = m.groups()
    target = {"inputs": inputs, "params": params, "init": inits}.get(section)
    if (target is not None and name in target) or (section == "outputs" and name in outputs):
        raise ModelSyntaxError(f"duplicate key {name!r}", node.line, node.col)
    if section == "inputs":
        if val is not None:
            raise ModelSyntaxError("inputs take an optional range, not a value", node.line, node.col)
        inputs[name] = _range(rng, node) if rng else None
    elif section == "outputs":
        if rng or val:
            raise ModelSyntaxError("outputs take no value", node.line, node.col)
        outputs.append(name)
    elif section == "params":
        if rng:
            params[name] = _range(rng, node)
        elif val is not None:
            params[name] = _number(val, node)
        else:
            raise ModelSyntaxError(f"param {name} needs a value or range", node.line, node.col)
    else:
        if val is None:
            raise ModelSyntaxError(f"init {name} needs a value", node.line, node.col)
        inits[name] = _number(val, node)


# --------------------------------------------------------------------------
# printing


def _fmt_param(v: ParamValue) -> str:
    return format_number(v) if isinstance(v, Fraction) else str(v)


def _print_block(b: Block, indent: str, out: list[str]) -> None:
    parts = [f"block {b.id} kind={b.kind}"]
    parts += [f"{k}={_fmt_param(v)}" for k, v in b.params.items()]
    out.append(indent + " ".join(parts))
    for inner in b.blocks:
        _print_block(inner, indent + "  ", out)
    for ln in b.lines:
        out.append(indent + "  " + _print_line(ln))


def _print_line(ln: Line) -> str:
    dsts = ", ".join(f"{b}.{p}" for b, p in ln.dsts)
    return f"line {ln.src[0]}.{ln.src[1]} -> {dsts}"


def print_model(m: Gha) -> str:
    """Canonical text form; `parse_model(print_model(m)) == m`."""
    out: list[str] = []
    if m.inputs:
        out.append("inputs")
        for name, rng in m.inputs.items():
            out.append(f"  {name}" + (f" in [{format_number(rng.lo)}, {format_number(rng.hi)}]" if rng else ""))
    if m.outputs:
        out.append("outputs")
        out.extend(f"  {name}" for name in m.outputs)
    if m.params:
        out.append("params")
        for name, v in m.params.items():
            if isinstance(v, Range):
                out.append(f"  {name} in [{format_number(v.lo)}, {format_number(v.hi)}]")
            else:
                out.append(f"  {name} = {format_number(v)}")
    if m.inits:
        out.append("init")
        out.extend(f"  {name} = {format_number(v)}" for name, v in m.inits.items())
    if m.initial is not None:
        out.append(f"initial {m.initial}")
    for s in m.states:
        out.append(f"state {s.name}")
        if s.vars:
            out.append("  vars " + ", ".join(s.vars))
        for b in s.blocks:
            _print_block(b, "  ", out)
        for ln in s.lines:
            out.append("  " + _print_line(ln))
    for t in m.transitions:
        text = f"transition {t.src} -> {t.dst} when {to_infix(t.cond)}"
        if t.actions:
            text += " do " + "; ".join(f"{v} := {to_infix(e)}" for v, e in t.actions)
        out.append(text)
    return "\n".join(out) + "\n"


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True, order=True)
class Diagnostic:
    location: str
    severity: str
    message: str

    def __str__(self) -> str:
        return f"{self.severity}: {self.location}: {self.message}"


def errors(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


def integrator_outputs(m: Gha) -> set[str]:
    """Names of every Integrator output variable, after flattening and naming."""
    from .frs import integrator_names  # circular at import time
    from .flatten import flatten_state

    names: set[str] = set()
    for s in m.states:
        try:
            names.update(integrator_names(flatten_state(s)).values())
        except ValueError:
            continue
    return names


def validate_model(m: Gha) -> list[Diagnostic]:
    """Return diagnostics sorted by location; no error means every invariant holds."""
    diags: list[Diagnostic] = []

    def err(loc: str, msg: str) -> None:
        diags.append(Diagnostic(loc, "error", msg))

    def warn(loc: str, msg: str) -> None:
        diags.append(Diagnostic(loc, "warning", msg))

    declared: dict[str, str] = {}
    for group, names in (("inputs", m.inputs), ("outputs", m.outputs), ("params", m.params)):
        for name in names:
            if name in declared:
                err(group, f"duplicate declaration {name} (already in {declared[name]})")
            else:
                declared[name] = group
            if name in RESERVED_NAMES:
                err(group, f"reserved name {name}")
    for name, rng in m.inputs.items():
        if rng is not None and rng.lo > rng.hi:
            err("inputs", f"empty range for {name}")
    for name, v in m.params.items():
        if isinstance(v, Range) and v.lo > v.hi:
            err("params", f"empty range for {name}")

    names = [s.name for s in m.states]
    for n in sorted({n for n in names if names.count(n) > 1}):
        err(f"state {n}", f"duplicate state {n}")
    if m.initial is None:
        err("initial", "no initial state")
    elif m.initial not in names:
        err("initial", f"unresolved state {m.initial}")

    for s in m.states:
        _validate_blocks(s.blocks, s.lines, f"state {s.name}", err, warn, top=True)
        port_vars = set()
        for b in s.blocks:
            if b.kind in ("Inport", "Outport"):
                v = b.params.get("var")
                if v is None:
                    err(f"state {s.name}/{b.id}", f"{b.kind} needs var=<name>")
                    continue
                v = str(v)
                port_vars.add(v)
                if b.kind == "Inport" and declared.get(v) not in ("inputs", "params"):
                    err(f"state {s.name}/{b.id}", f"unknown variable {v} (Inport reads inputs or params)")
                if b.kind == "Outport" and declared.get(v) != "outputs":
                    err(f"state {s.name}/{b.id}", f"unknown variable {v} (Outport writes outputs)")
        missing = sorted(port_vars - set(s.vars))
        if missing:
            err(f"state {s.name}", f"vars missing port variables {', '.join(missing)}")
        for v in s.vars:
            if v in RESERVED_NAMES:
                err(f"state {s.name}", f"reserved name {v}")

    integ = integrator_outputs(m)
    for v in sorted(integ):
        if declared.get(v) in ("inputs", "params"):
            err("states", f"duplicate declaration {v} (integrator output and {declared[v]})")
    tracked = set(m.outputs) | integ
    known = tracked | set(m.inputs) | set(m.params)
    for name in m.inits:
        if name not in tracked:
            err("init", f"unknown variable {name}")

    for idx, t in enumerate(m.transitions):
        loc = f"transition {idx} {t.src}->{t.dst}"
        for end in (t.src, t.dst):
            if end not in names:
                err(loc, f"unresolved state {end}")
        if any(isinstance(n, Temporal) for n in walk(t.cond)):
            err(loc, "temporal condition not supported (propositional guards only)")
            continue
        for p in check_sorts(t.cond, True):
            err(loc, p)
        for v in sorted(free_vars(t.cond) - known):
            err(loc, f"unknown variable {v}")
        for target, rhs in t.actions:
            if target not in tracked:
                err(loc, f"action target {target} is not an output or integrator variable")
            for p in check_sorts(rhs, False):
                err(loc, p)
            for v in sorted(free_vars(rhs) - known):
                err(loc, f"unknown variable {v}")
            _warn_partial(rhs, loc, warn)
        _warn_partial(t.cond, loc, warn)

    return sorted(set(diags))


def _warn_partial(e: Expr, loc: str, warn) -> None:
    for node in walk(e):
        if isinstance(node, Binary) and node.op == "div":
            warn(loc, f"possible division by zero in {to_infix(node)}")
        if isinstance(node, Unary) and node.op in ("log", "sqrt"):
            warn(loc, f"{node.op} of a possibly nonpositive argument in {to_infix(node)}")


def _validate_blocks(blocks, lines, loc, err, warn, top: bool) -> None:
    ids = [b.id for b in blocks]
    for bid in sorted({i for i in ids if ids.count(i) > 1}):
        err(loc, f"duplicate block id {bid}")
    by_id = {b.id: b for b in blocks}
    for b in blocks:
        bloc = f"{loc}/{b.id}"
        # '/' is the flattening path separator; already-flat states may carry such ids
        if "/" in b.id and (not top or any(x.kind == "Subsystem" for x in blocks)):
            err(bloc, "block ids must not contain '/'")
        if b.kind not in BLOCK_KINDS:
            err(bloc, f"unknown block kind {b.kind}")
            continue
        if b.kind == "Integrator" and "init" not in b.params:
            err(bloc, "Integrator needs init=<value>")
        if b.kind == "Sum" and not re.fullmatch(r"[+-]+", str(b.params.get("signs", "++"))):
            err(bloc, "Sum signs must be a string of + and -")
        if b.kind == "Product":
            ops = str(b.params.get("ops", "**"))
            if not re.fullmatch(r"[*/]+", ops):
                err(bloc, "Product ops must be a string of * and /")
            elif "/" in ops:
                warn(bloc, "possible division by zero")
        if b.kind == "Trigonometry" and str(b.params.get("fn", "sin")) not in ("sin", "cos", "tan"):
            err(bloc, "Trigonometry fn must be sin, cos or tan")
        if b.kind == "Exp":
            fn = str(b.params.get("fn", "exp"))
            if fn not in ("exp", "log"):
                err(bloc, "Exp fn must be exp or log")
            elif fn == "log":
                warn(bloc, "log of a possibly nonpositive argument")
        if b.kind == "Sqrt":
            warn(bloc, "sqrt of a possibly negative argument")
        if b.kind == "Relational" and str(b.params.get("op", "<=")) not in ("<", "<=", "==", ">=", ">"):
            err(bloc, "Relational op must be one of < <= == >= >")
        if b.kind == "Logical" and str(b.params.get("op", "and")) not in ("and", "or", "not"):
            err(bloc, "Logical op must be and, or or not")
        for key in ("value", "k", "init", "lower", "upper", "threshold"):
            if key in b.params and not isinstance(b.params[key], Fraction):
                err(bloc, f"param {key} must be a number")
        if b.kind in ("Inport", "Outport") and not top and "port" not in b.params:
            err(bloc, f"{b.kind} inside a subsystem needs port=<n>")
        if b.kind == "Subsystem":
            for kind in ("Inport", "Outport"):
                idx = sorted(_port_index(x) for x in b.blocks if x.kind == kind)
                if idx != list(range(1, len(idx) + 1)):
                    err(bloc, f"subsystem {kind} ports must be numbered 1..{len(idx)} uniquely")
            _validate_blocks(b.blocks, b.lines, bloc, err, warn, top=False)

    drivers: dict[tuple[str, int], int] = {}
    for ln in lines:
        sid, sp = ln.src
        if sid not in by_id:
            err(loc, f"line source {sid}.{sp} references unknown block")
        elif by_id[sid].kind in BLOCK_KINDS and not 1 <= sp <= block_arity(by_id[sid])[1]:
            err(loc, f"line source {sid}.{sp} references unknown port")
        for did, dp in ln.dsts:
            if did not in by_id:
                err(loc, f"line destination {did}.{dp} references unknown block")
                continue
            if by_id[did].kind in BLOCK_KINDS and not 1 <= dp <= block_arity(by_id[did])[0]:
                err(loc, f"line destination {did}.{dp} references unknown port")
                continue
            drivers[(did, dp)] = drivers.get((did, dp), 0) + 1
    for b in blocks:
        if b.kind not in BLOCK_KINDS:
            continue
        for p in range(1, block_arity(b)[0] + 1):
            n = drivers.get((b.id, p), 0)
            if n != 1:
                err(f"{loc}/{b.id}", f"in-port {p} has {n} drivers (exactly one required)")
