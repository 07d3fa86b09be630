"""Symbolic expressions shared by block functions, guards, actions and assertions.

Nodes are frozen dataclasses so they hash, compare structurally and can be
cached. Real-valued and boolean-valued nodes share one tree type; `check_sorts`
enforces that comparisons and connectives never appear as real operands.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping

UNARY_OPS = ("neg", "sin", "cos", "tan", "exp", "log", "sqrt", "abs")
BINARY_OPS = ("add", "sub", "mul", "div", "pow", "min", "max")
CMP_OPS = ("<", "<=", "=", ">=", ">")
BOOL_OPS = ("and", "or", "not", "implies")
TEMPORAL_OPS = ("after", "before", "at", "every", "duration", "temporalCount", "elapsed")


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class Const(Expr):
    value: Fraction


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Unary(Expr):
    op: str
    arg: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Cmp(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Bool(Expr):
    op: str
    args: tuple[Expr, ...]


@dataclass(frozen=True)
class Ite(Expr):
    cond: Expr
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class Integral(Expr):
    """`[end...] = integral(0, dwell, [begin...], flow)` as a single boolean atom."""

    flow: str
    dwell: str
    begin: tuple[str, ...]
    end: tuple[str, ...]


@dataclass(frozen=True)
class Temporal(Expr):
    """Placeholder for a temporal-logic call; it parses but never validates."""

    op: str
    text: str


TRUE = Bool("and", ())
FALSE = Bool("or", ())


class ExprSyntaxError(ValueError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (column {offset + 1})")
        self.column = offset + 1  # 1-based, as displayed


class EvalError(ArithmeticError):
    pass


def const(v) -> Const:
    if isinstance(v, Fraction):
        return Const(v)
    if isinstance(v, float):
        return Const(Fraction(repr(v)))
    return Const(Fraction(v))


def and_(*args: Expr) -> Expr:
    flat: list[Expr] = []
    for a in args:
        if a == TRUE:
            continue
        flat.append(a)
    if len(flat) == 1:
        return flat[0]
    return Bool("and", tuple(flat))


def or_(*args: Expr) -> Expr:
    flat = [a for a in args if a != FALSE]
    if len(flat) == 1:
        return flat[0]
    return Bool("or", tuple(flat))


def not_(a: Expr) -> Expr:
    return Bool("not", (a,))


def implies(a: Expr, b: Expr) -> Expr:
    return Bool("implies", (a, b))


def eq(a: Expr, b: Expr) -> Expr:
    return Cmp("=", a, b)


# --------------------------------------------------------------------------
# traversal


def children(e: Expr) -> tuple[Expr, ...]:
    if isinstance(e, Unary):
        return (e.arg,)
    if isinstance(e, (Binary, Cmp)):
        return (e.lhs, e.rhs)
    if isinstance(e, Bool):
        return e.args
    if isinstance(e, Ite):
        return (e.cond, e.then, e.orelse)
    return ()


def walk(e: Expr) -> Iterable[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(children(node)))


def free_vars(e: Expr) -> set[str]:
    out: set[str] = set()
    for node in walk(e):
        if isinstance(node, Var):
            out.add(node.name)
        elif isinstance(node, Integral):
            out.add(node.dwell)
            out.update(node.begin)
            out.update(node.end)
    return out


def size(e: Expr) -> int:
    return sum(1 for _ in walk(e))


def substitute(e: Expr, mapping: Mapping[str, Expr]) -> Expr:
    if isinstance(e, Var):
        return mapping.get(e.name, e)
    if isinstance(e, Unary):
        return Unary(e.op, substitute(e.arg, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Cmp):
        return Cmp(e.op, substitute(e.lhs, mapping), substitute(e.rhs, mapping))
    if isinstance(e, Bool):
        return Bool(e.op, tuple(substitute(a, mapping) for a in e.args))
    if isinstance(e, Ite):
        return Ite(substitute(e.cond, mapping), substitute(e.then, mapping),
                   substitute(e.orelse, mapping))
    return e


def rename(e: Expr, fn: Callable[[str], str]) -> Expr:
    return substitute(e, {v: Var(fn(v)) for v in free_vars(e)})


def is_boolean(e: Expr) -> bool:
    return isinstance(e, (Cmp, Bool, Integral, Temporal))


def check_sorts(e: Expr, want_bool: bool) -> list[str]:
    """Return messages for nodes used at the wrong sort."""
    problems: list[str] = []

    def visit(node: Expr, boolean: bool) -> None:
        if boolean and not is_boolean(node):
            problems.append(f"real-valued term {to_infix(node)} used as a condition")
            return
        if not boolean and is_boolean(node):
            problems.append(f"condition {to_infix(node)} used as a real operand")
            return
        if isinstance(node, Unary):
            visit(node.arg, False)
        elif isinstance(node, Binary):
            visit(node.lhs, False)
            visit(node.rhs, False)
        elif isinstance(node, Cmp):
            visit(node.lhs, False)
            visit(node.rhs, False)
        elif isinstance(node, Bool):
            for a in node.args:
                visit(a, True)
        elif isinstance(node, Ite):
            visit(node.cond, True)
            visit(node.then, False)
            visit(node.orelse, False)

    visit(e, want_bool)
    return problems


# --------------------------------------------------------------------------
# number formatting


def format_decimal(value: Fraction, digits: int = 17) -> str:
    """Plain decimal text, never scientific; exact when it terminates within `digits`."""
    if value == 0:
        return "0.0"
    with localcontext() as ctx:
        ctx.prec = digits
        d = Decimal(value.numerator) / Decimal(value.denominator)
    text = format(d, "f")
    if "." in text:
        text = text.rstrip("0")
        if text.endswith("."):
            text += "0"
    else:
        text += ".0"
    return text


def is_terminating(value: Fraction) -> bool:
    den = value.denominator
    for p in (2, 5):
        while den % p == 0:
            den //= p
    return den == 1


def format_number(value: Fraction) -> str:
    """Source-form literal for the model format; exact for terminating decimals."""
    if value.denominator == 1:
        return str(value.numerator)
    if is_terminating(value):
        with localcontext() as ctx:
            ctx.prec = 200
            text = format(Decimal(value.numerator) / Decimal(value.denominator), "f")
        return text
    return f"{value.numerator}/{value.denominator}"


# --------------------------------------------------------------------------
# infix printer

_BIN_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}
_CMP_SYM = {"<": "<", "<=": "<=", "=": "==", ">=": ">=", ">": ">"}


def to_infix(e: Expr) -> str:
    if isinstance(e, Const):
        text = format_number(e.value)
        return f"({text})" if e.value < 0 or "/" in text else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Unary):
        if e.op == "neg":
            return f"(-{_atom(e.arg)})"
        return f"{e.op}({to_infix(e.arg)})"
    if isinstance(e, Binary):
        if e.op in ("min", "max"):
            return f"{e.op}({to_infix(e.lhs)}, {to_infix(e.rhs)})"
        return f"({to_infix(e.lhs)} {_BIN_SYM[e.op]} {to_infix(e.rhs)})"
    if isinstance(e, Cmp):
        return f"({to_infix(e.lhs)} {_CMP_SYM[e.op]} {to_infix(e.rhs)})"
    if isinstance(e, Bool):
        if e.op == "not":
            return f"(!{_atom(e.args[0])})"
        if e.op == "implies":
            return f"({to_infix(e.args[0])} => {to_infix(e.args[1])})"
        if not e.args:
            return "true" if e.op == "and" else "false"
        if len(e.args) == 1:
            return f"{e.op}({to_infix(e.args[0])})"
        sym = " && " if e.op == "and" else " || "
        return "(" + sym.join(to_infix(a) for a in e.args) + ")"
    if isinstance(e, Ite):
        return f"ite({to_infix(e.cond)}, {to_infix(e.then)}, {to_infix(e.orelse)})"
    if isinstance(e, Temporal):
        return e.text
    if isinstance(e, Integral):
        return (f"[{' '.join(e.end)}] = integral(0, {e.dwell}, "
                f"[{' '.join(e.begin)}], {e.flow})")
    raise TypeError(f"not an expression: {e!r}")


def _atom(e: Expr) -> str:
    text = to_infix(e)
    if isinstance(e, Const) and not text.startswith("("):
        return f"({text})"
    return text


# --------------------------------------------------------------------------
# infix parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][-+]?\d+)?|\.\d+(?:[eE][-+]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op>&&|\|\||=>|->|<=|>=|==|!=|:=|[-+*/^(),<>=!\[\]]))"
)


def tokenize(text: str) -> list[tuple[str, str, int]]:
    out = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            col = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError(f"unexpected character {text[col]!r}", col)
        kind = m.lastgroup
        start = m.start(kind)
        out.append((kind, m.group(kind), start))
        pos = m.end()
    out.append(("eof", "", len(text)))
    return out


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = tokenize(text)
        self.i = 0

    def peek(self, offset: int = 0):
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def next(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        tok = self.next()
        if tok[1] != value or tok[0] == "eof":
            raise ExprSyntaxError(f"expected {value!r}, found {tok[1] or 'end of input'!r}", tok[2])
        return tok

    def at(self, *values: str) -> bool:
        kind, val, _ = self.peek()
        return kind in ("op", "name") and val in values

    def parse(self) -> Expr:
        e = self.implication()
        kind, val, col = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {val!r}", col)
        return e

    def implication(self) -> Expr:
        lhs = self.disjunction()
        if self.at("=>"):
            self.next()
            return implies(lhs, self.implication())
        return lhs

    def disjunction(self) -> Expr:
        args = [self.conjunction()]
        while self.at("||", "or"):
            self.next()
            args.append(self.conjunction())
        return args[0] if len(args) == 1 else Bool("or", tuple(args))

    def conjunction(self) -> Expr:
        args = [self.negation()]
        while self.at("&&", "and"):
            self.next()
            args.append(self.negation())
        return args[0] if len(args) == 1 else Bool("and", tuple(args))

    def negation(self) -> Expr:
        if self.at("!", "not") and not (self.peek()[1] == "not" and self.peek(1)[1] == "("):
            self.next()
            return not_(self.negation())
        return self.comparison()

    def comparison(self) -> Expr:
        lhs = self.additive()
        kind, val, col = self.peek()
        if kind == "op" and val in ("<", "<=", "==", "=", ">=", ">", "!="):
            self.next()
            rhs = self.additive()
            if val == "!=":
                return not_(Cmp("=", lhs, rhs))
            return Cmp("=" if val == "==" else val, lhs, rhs)
        return lhs

    def additive(self) -> Expr:
        e = self.multiplicative()
        while self.at("+", "-"):
            op = self.next()[1]
            e = Binary("add" if op == "+" else "sub", e, self.multiplicative())
        return e

    def multiplicative(self) -> Expr:
        e = self.unary()
        while self.at("*", "/"):
            op = self.next()[1]
            e = Binary("mul" if op == "*" else "div", e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.at("-"):
            self.next()
            kind, val, _ = self.peek()
            if kind == "num":
                self.next()
                return self.power(Const(-Fraction(val)))
            return Unary("neg", self.unary())
        if self.at("+"):
            self.next()
            return self.unary()
        return self.power(self.primary())

    def power(self, base: Expr) -> Expr:
        if self.at("^"):
            self.next()
            return Binary("pow", base, self.unary())
        return base

    def primary(self) -> Expr:
        kind, val, col = self.next()
        if kind == "num":
            return Const(Fraction(val))
        if kind == "name":
            if val == "true":
                return TRUE
            if val == "false":
                return FALSE
            if self.at("("):
                return self.call(val, col)
            return Var(val)
        if val == "(":
            e = self.implication()
            self.expect(")")
            return e
        raise ExprSyntaxError(f"unexpected {val or 'end of input'!r}", col)

    def call(self, name: str, col: int) -> Expr:
        open_tok = self.expect("(")
        if name in TEMPORAL_OPS:
            depth = 1
            while depth:
                kind, val, c = self.next()
                if kind == "eof":
                    raise ExprSyntaxError("unterminated call", c)
                depth += val == "("
                depth -= val == ")"
            end = self.toks[self.i - 1][2] + 1
            return Temporal(name, self.text[col:end])
        args = []
        if not self.at(")"):
            args.append(self.implication())
            while self.at(","):
                self.next()
                args.append(self.implication())
        self.expect(")")
        arity = {"min": 2, "max": 2, "ite": 3, "and": None, "or": None, "not": 1}
        if name in UNARY_OPS and name != "neg":
            want = 1
        elif name in arity:
            want = arity[name]
        else:
            raise ExprSyntaxError(f"unknown function {name!r}", col)
        if want is not None and len(args) != want:
            raise ExprSyntaxError(f"{name} takes {want} argument(s), got {len(args)}", open_tok[2])
        if name in ("min", "max"):
            return Binary(name, args[0], args[1])
        if name == "ite":
            return Ite(*args)
        if name in ("and", "or", "not"):
            return Bool(name, tuple(args))
        return Unary(name, args[0])


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# numeric evaluation

_PY_UNARY = {
    "neg": "(-{})", "sin": "_m.sin({})", "cos": "_m.cos({})", "tan": "_m.tan({})",
    "exp": "_m.exp({})", "log": "_m.log({})", "sqrt": "_m.sqrt({})", "abs": "abs({})",
}
_PY_BIN = {"add": "({} + {})", "sub": "({} - {})", "mul": "({} * {})", "div": "({} / {})",
           "pow": "_m.pow({}, {})", "min": "min({}, {})", "max": "max({}, {})"}
_PY_CMP = {"<": "<", "<=": "<=", "=": "==", ">=": ">=", ">": ">"}


def to_python(e: Expr, ref: Callable[[str], str] = lambda n: f"e[{n!r}]") -> str:
    """Python source for `e`; variable access is delegated to `ref`."""
    if isinstance(e, Const):
        return repr(float(e.value))
    if isinstance(e, Var):
        return ref(e.name)
    if isinstance(e, Unary):
        return _PY_UNARY[e.op].format(to_python(e.arg, ref))
    if isinstance(e, Binary):
        return _PY_BIN[e.op].format(to_python(e.lhs, ref), to_python(e.rhs, ref))
    if isinstance(e, Cmp):
        return f"({to_python(e.lhs, ref)} {_PY_CMP[e.op]} {to_python(e.rhs, ref)})"
    if isinstance(e, Bool):
        if e.op == "not":
            return f"(not {to_python(e.args[0], ref)})"
        if e.op == "implies":
            return f"((not {to_python(e.args[0], ref)}) or {to_python(e.args[1], ref)})"
        if not e.args:
            return "True" if e.op == "and" else "False"
        return "(" + f" {e.op} ".join(to_python(a, ref) for a in e.args) + ")"
    if isinstance(e, Ite):
        return (f"({to_python(e.then, ref)} if {to_python(e.cond, ref)} "
                f"else {to_python(e.orelse, ref)})")
    raise EvalError(f"cannot evaluate {to_infix(e)}")


def compile_source(src: str, args: str = "e"):
    return eval(f"lambda {args}: {src}", {"_m": math})  # noqa: S307 - generated from Expr trees


@lru_cache(maxsize=4096)
def compile_expr(e: Expr):
    return compile_source(to_python(e))


def evaluate(e: Expr, env: Mapping[str, float]):
    """Evaluate to a float (real terms) or bool (conditions)."""
    try:
        return compile_expr(e)(env)
    except KeyError as exc:
        raise EvalError(f"unbound variable {exc.args[0]}") from None
    except (ValueError, ZeroDivisionError, OverflowError) as exc:
        raise EvalError(f"{to_infix(e)}: {exc}") from None


# --------------------------------------------------------------------------
# SMT-LIB rendering

_SMT_UNARY = {"neg": "-", "sin": "sin", "cos": "cos", "tan": "tan", "exp": "exp",
              "log": "log", "sqrt": "sqrt", "abs": "abs"}
_SMT_BIN = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^", "min": "min", "max": "max"}
_SMT_BOOL = {"and": "and", "or": "or", "not": "not", "implies": "=>"}


def smt_literal(value: Fraction, integer: bool = False) -> str:
    if integer:
        if value.denominator != 1:
            raise ValueError(f"non-integer literal {value} in Int context")
        n = value.numerator
        return str(n) if n >= 0 else f"(- {-n})"
    text = format_decimal(abs(value))
    return text if value >= 0 else f"(- {text})"


def to_smt(e: Expr, int_vars: frozenset[str] | set[str] = frozenset()) -> str:
    def go(node: Expr, integer: bool = False) -> str:
        if isinstance(node, Const):
            return smt_literal(node.value, integer)
        if isinstance(node, Var):
            return node.name
        if isinstance(node, Unary):
            return f"({_SMT_UNARY[node.op]} {go(node.arg)})"
        if isinstance(node, Binary):
            return f"({_SMT_BIN[node.op]} {go(node.lhs)} {go(node.rhs)})"
        if isinstance(node, Cmp):
            ints = any(isinstance(s, Var) and s.name in int_vars for s in (node.lhs, node.rhs))
            return f"({node.op} {go(node.lhs, ints)} {go(node.rhs, ints)})"
        if isinstance(node, Bool):
            if not node.args:
                return "true" if node.op == "and" else "false"
            if len(node.args) == 1 and node.op in ("and", "or"):
                return go(node.args[0])
            return "(" + _SMT_BOOL[node.op] + " " + " ".join(go(a) for a in node.args) + ")"
        if isinstance(node, Ite):
            return f"(ite {go(node.cond)} {go(node.then, integer)} {go(node.orelse, integer)})"
        if isinstance(node, Integral):
            return (f"(= [{' '.join(node.end)}] (integral 0. {node.dwell} "
                    f"[{' '.join(node.begin)}] flow_{node.flow}))")
        raise ValueError(f"no SMT-LIB rendering for {to_infix(node)}")

    return go(e)
