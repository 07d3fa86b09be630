import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghabmc.expr import (
    Binary,
    Cmp,
    Const,
    EvalError,
    ExprSyntaxError,
    Temporal,
    Unary,
    Var,
    check_sorts,
    evaluate,
    format_decimal,
    free_vars,
    parse_expr,
    smt_literal,
    substitute,
    to_infix,
    to_smt,
)
from strategies import conditions, real_terms, with_ite


@settings(max_examples=300)
@given(real_terms())
def test_infix_round_trip_terms(e):
    assert parse_expr(to_infix(e)) == e


@settings(max_examples=300)
@given(conditions())
def test_infix_round_trip_conditions(e):
    assert parse_expr(to_infix(e)) == e


@given(with_ite(real_terms(4)))
def test_infix_round_trip_ite(e):
    assert parse_expr(to_infix(e)) == e


def test_precedence():
    e = parse_expr("a + b * c ^ 2 >= -1 && !(x < y) || z == 0")
    assert to_infix(e) == "((((a + (b * (c ^ 2))) >= (-1)) && (!(x < y))) || (z == 0))"


def test_negative_literal_folds_but_negated_group_does_not():
    assert parse_expr("-2") == Const(Fraction(-2))
    assert parse_expr("-(2)") == Unary("neg", Const(Fraction(2)))


def test_not_equal_is_negated_equality():
    assert parse_expr("x != 1") == parse_expr("!(x == 1)")


def test_temporal_operator_parses_to_temporal_node():
    assert isinstance(parse_expr("after(5, sec)"), Temporal)


@pytest.mark.parametrize("text", ["x +", "sin(", "1 2", "x === y", "foo(x)"])
def test_syntax_errors_carry_a_column(text):
    with pytest.raises(ExprSyntaxError) as err:
        parse_expr(text)
    assert err.value.column >= 1


@pytest.mark.parametrize("value,text", [
    (Fraction(1, 1000), "0.001"),
    (Fraction(4, 100), "0.04"),
    (Fraction(2), "2.0"),
    (Fraction(0), "0.0"),
    (Fraction(10) ** 20, "100000000000000000000.0"),
    (Fraction(1, 3), "0.33333333333333333"),
    (Fraction(1, 10**9), "0.000000001"),
])
def test_decimal_formatting(value, text):
    assert format_decimal(value) == text


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_decimal_formatting_never_scientific(x):
    text = format_decimal(Fraction(x))
    assert "e" not in text.lower() and "." in text


def test_smt_literals():
    assert smt_literal(Fraction(-2)) == "(- 2.0)"
    assert smt_literal(Fraction(-1), integer=True) == "(- 1)"
    assert smt_literal(Fraction(3), integer=True) == "3"
    with pytest.raises(ValueError):
        smt_literal(Fraction(1, 2), integer=True)


def test_int_context_in_comparisons():
    e = Cmp("=", Var("s_0"), Const(Fraction(1)))
    assert to_smt(e, {"s_0"}) == "(= s_0 1)"
    assert to_smt(e) == "(= s_0 1.0)"


@given(real_terms(), st.dictionaries(st.sampled_from(["x", "y", "z", "u1", "p"]),
                                     st.floats(-3, 3), min_size=5, max_size=5))
def test_evaluate_matches_recursive_definition(e, env):
    def ref(node):
        if isinstance(node, Const):
            return float(node.value)
        if isinstance(node, Var):
            return env[node.name]
        if isinstance(node, Unary):
            a = ref(node.arg)
            return {"neg": lambda: -a, "abs": lambda: abs(a)}.get(node.op, lambda: getattr(math, node.op)(a))()
        a, b = ref(node.lhs), ref(node.rhs)
        return {"add": lambda: a + b, "sub": lambda: a - b, "mul": lambda: a * b,
                "div": lambda: a / b, "pow": lambda: math.pow(a, b),
                "min": lambda: min(a, b), "max": lambda: max(a, b)}[node.op]()
    try:
        expected = ref(e)
    except (ValueError, ZeroDivisionError, OverflowError):
        with pytest.raises(EvalError):
            evaluate(e, env)
        return
    got = evaluate(e, env)
    assert got == expected or (math.isnan(got) and math.isnan(expected))


def test_unbound_variable():
    with pytest.raises(EvalError, match="unbound variable q"):
        evaluate(Var("q"), {})


def test_substitute_and_free_vars():
    e = parse_expr("x + y * x")
    s = substitute(e, {"x": Var("x_0_end")})
    assert free_vars(s) == {"x_0_end", "y"}


def test_sort_check_flags_boolean_operand():
    bad = Binary("add", Cmp("<", Var("x"), Var("y")), Var("z"))
    assert check_sorts(bad, want_bool=False)
    assert not check_sorts(parse_expr("x < y && z >= 1"), want_bool=True)
