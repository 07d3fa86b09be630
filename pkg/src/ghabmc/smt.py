"""SMT-LIB2 emission in the ODE-extended dialect (`define-ode` / `integral`).

Layout: logic, precision, declarations (bounds in brackets), one `define-ode`
per state with integrators, assertions in unroll order, the property, then
`(check-sat)` and `(exit)`. Output is LF-terminated and byte-stable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .expr import Expr, format_decimal, smt_literal, to_smt
from .unroll import Assertion, ConstraintSystem, Decl, _decl_key

LOGIC = "QF_NRA_ODE"


class EmitError(ValueError):
    pass


def _bound(value: Fraction, integer: bool) -> str:
    if integer:
        return str(value.numerator)
    text = format_decimal(abs(value))
    return text if value >= 0 else "-" + text


def _declare(d: Decl) -> tuple[str, list[str]]:
    integer = d.sort == "Int"
    head = f"(declare-fun {d.name} () {d.sort}"
    if d.lo is not None and d.hi is not None:
        return f"{head} [{_bound(d.lo, integer)}, {_bound(d.hi, integer)}])", []
    extra = []
    if d.lo is not None:
        extra.append(f"(assert (>= {d.name} {smt_literal(d.lo, integer)}))")
    if d.hi is not None:
        extra.append(f"(assert (<= {d.name} {smt_literal(d.hi, integer)}))")
    return head + ")", extra


def emit_smt(cs: ConstraintSystem, negated_prop: Expr | None = None, delta: float = 0.001,
             declarations: tuple[Decl, ...] = (), assertions: tuple[Assertion, ...] = ()) -> str:
    """Serialize `cs`, extra (property) declarations/assertions and the goal formula."""
    if not delta > 0:
        raise EmitError("precision must be positive")
    decls = sorted(cs.declarations + tuple(declarations), key=_decl_key)
    names = [d.name for d in decls]
    if len(set(names)) != len(names):
        dup = sorted({n for n in names if names.count(n) > 1})
        raise EmitError(f"duplicate declaration {', '.join(dup)}")
    ints = frozenset(d.name for d in decls if d.sort == "Int")

    out = [f"(set-logic {LOGIC})", f"(set-option :precision {format_decimal(Fraction(repr(float(delta))))})"]
    bound_asserts: list[str] = []
    for d in decls:
        line, extra = _declare(d)
        out.append(line)
        bound_asserts += extra
    for name in sorted(cs.flows):
        fs = cs.flows[name]
        if not fs.state_vars:
            continue
        body = " ".join(f"(= d/dt[{v}] {_render(fs.derivs[v], ints)})" for v in fs.state_vars)
        out.append(f"(define-ode flow_{name} ({body}))")
    out += bound_asserts
    for a in tuple(cs.assertions) + tuple(assertions):
        out.append(f"(assert {_render(a.expr, ints)})")
    if negated_prop is not None:
        out.append(f"(assert {_render(negated_prop, ints)})")
    out += ["(check-sat)", "(exit)"]
    return "\n".join(out) + "\n"


def _render(e: Expr, ints) -> str:
    try:
        return to_smt(e, ints)
    except ValueError as exc:
        raise EmitError(str(exc)) from None


# --------------------------------------------------------------------------
# reader used for self-checks

_TOKEN = re.compile(r"""
    (?P<ws>\s+|;[^\n]*)
  | (?P<ddt>d/dt\[[^\]\s]+\])
  | (?P<open>[(\[])
  | (?P<close>[)\]])
  | (?P<num>-?\d+(?:\.\d*)?)
  | (?P<kw>:[A-Za-z_-]+)
  | (?P<sym>[^\s()\[\];,]+)
  | (?P<comma>,)
""", re.VERBOSE)


class SmtSyntaxError(ValueError):
    pass


@dataclass(frozen=True)
class Sym:
    name: str


def tokenize(text: str) -> list[tuple[str, str]]:
    pos = 0
    toks = []
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise SmtSyntaxError(f"unexpected character {text[pos]!r} at offset {pos}")
        kind = m.lastgroup
        if kind != "ws":
            toks.append((kind, m.group()))
        pos = m.end()
    return toks


def read(text: str) -> list:
    """Parse a document into nested lists; bracket groups become ('[', items)."""
    toks = tokenize(text)
    stack: list[list] = [[]]
    opens: list[str] = []
    for kind, tok in toks:
        if kind == "open":
            stack.append([])
            opens.append(tok)
        elif kind == "close":
            if not opens or {"(": ")", "[": "]"}[opens[-1]] != tok:
                raise SmtSyntaxError(f"unbalanced {tok!r}")
            items = stack.pop()
            stack[-1].append(items if opens.pop() == "(" else ("[", items))
        elif kind == "comma":
            continue
        elif kind == "num":
            stack[-1].append(tok)
        else:
            stack[-1].append(Sym(tok))
    if opens:
        raise SmtSyntaxError("unclosed parenthesis at end of input")
    return stack[0]


def write(forms) -> str:
    """Inverse of `read` for documents produced by `emit_smt`."""
    def go(f) -> str:
        if isinstance(f, Sym):
            return f.name
        if isinstance(f, str):
            return f
        if isinstance(f, tuple):
            inner = f[1]
            if len(inner) == 2 and all(isinstance(x, str) for x in inner):
                return f"[{inner[0]}, {inner[1]}]"
            return "[" + " ".join(go(x) for x in inner) + "]"
        return "(" + " ".join(go(x) for x in f) + ")"
    return "".join(go(f) + "\n" for f in forms)


BUILTINS = frozenset("""
and or not => = < <= > >= + - * / ^ ite integral sin cos tan exp log sqrt abs min max
true false
""".split())


def check_document(text: str) -> list[str]:
    """Structural self-check; returns problems (empty when the document is sound).

    Every symbol inside an `assert` must be declared, a flow, or a builtin.
    """
    forms = read(text)
    problems = []
    declared: set[str] = set()
    flows: set[str] = set()
    seen_check = False
    for f in forms:
        if not isinstance(f, list) or not f or not isinstance(f[0], Sym):
            problems.append("top-level form is not a command")
            continue
        cmd = f[0].name
        if cmd == "declare-fun":
            declared.add(f[1].name)
        elif cmd == "define-ode":
            flows.add(f[1].name)
        elif cmd == "assert":
            for s in _symbols(f[1:]):
                if s not in declared and s not in flows and s not in BUILTINS:
                    problems.append(f"undeclared symbol {s}")
        elif cmd == "check-sat":
            seen_check = True
        elif cmd not in ("set-logic", "set-option", "exit"):
            problems.append(f"unknown command {cmd}")
    if not seen_check:
        problems.append("missing (check-sat)")
    return problems


def _symbols(forms):
    for f in forms:
        if isinstance(f, Sym):
            yield f.name
        elif isinstance(f, tuple):
            yield from _symbols(f[1])
        elif isinstance(f, list):
            yield from _symbols(f)

