from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghabmc.generate import GenConfig, random_model
from ghabmc.model import (
    ModelSyntaxError,
    errors,
    parse_model,
    print_model,
    validate_model,
)
from conftest import MODELS

FIG1 = (MODELS / "fig1" / "fig1.gha").read_text()


def messages(m):
    return [d.message for d in errors(validate_model(m))]


def test_fig1_parses(fig1):
    assert len(fig1.states) == 2 and len(fig1.transitions) == 1
    t = fig1.transitions[0]
    assert (t.src, t.dst, t.vars) == ("S0", "S1", ("y1",))
    assert fig1.initial == "S0"


def test_fig1_and_usv_validate(fig1, usv):
    assert validate_model(fig1) == []
    assert messages(usv) == []


def test_degenerate_document_parses_then_fails_validation():
    m = parse_model("outputs\n  y\n")
    assert len(m.states) == 0 and len(m.transitions) == 0
    assert messages(m)


def test_unknown_block_kind():
    text = "state A\n  block D kind=Derivative\n"
    with pytest.raises(ModelSyntaxError, match="unknown block kind"):
        parse_model(text)


def test_syntax_error_reports_line_and_column():
    with pytest.raises(ModelSyntaxError) as err:
        parse_model("inputs\n  x1\nstate A\n  block G kind=Gain k\n")
    assert err.value.line == 4 and err.value.column >= 1


@pytest.mark.parametrize("text", [
    "inputs\n  x\n  x\n",
    "initial A\ninitial B\n",
    "state A\n  block G kind=Gain k=1 k=2\n",
    "params\n  p = 1\n  p = 2\n",
])
def test_duplicate_key(text):
    with pytest.raises(ModelSyntaxError, match="duplicate key"):
        parse_model(text)


def test_tabs_rejected():
    with pytest.raises(ModelSyntaxError, match="tabs"):
        parse_model("state A\n\tvars x\n")


def test_unresolved_transition_state():
    m = parse_model(FIG1.replace("transition S0 -> S1", "transition S9 -> S1"))
    assert "unresolved state S9" in messages(m)


def test_input_declared_as_output():
    m = parse_model(FIG1.replace("outputs\n  y1\n", "outputs\n  x1\n  y1\n"))
    assert any("duplicate declaration" in msg for msg in messages(m))


def test_temporal_condition_rejected():
    m = parse_model(FIG1.replace("when y1 >= 10", "when after(5, sec)"))
    assert any("temporal condition not supported" in msg for msg in messages(m))


def test_unknown_variable_in_guard():
    m = parse_model(FIG1.replace("when y1 >= 10", "when w >= 10"))
    assert any("unknown variable" in msg for msg in messages(m))


def test_action_target_must_be_declared():
    m = parse_model(FIG1.replace("do y1 := 0", "do q := 0"))
    assert messages(m)


def test_single_driver_rule():
    m = parse_model(FIG1.replace("  line In2.1 -> Sum.2\n", "  line In2.1 -> Sum.2, Sum.1\n", 1))
    assert any("driver" in msg for msg in messages(m))


def test_undriven_port():
    m = parse_model(FIG1.replace("  line In2.1 -> Sum.2\n", "", 1))
    assert messages(m)


def test_reserved_names():
    m = parse_model(FIG1.replace("inputs\n  x1\n", "inputs\n  x1\n  tau\n"))
    assert any("reserved" in msg for msg in messages(m))


def test_division_warning():
    text = FIG1.replace("block Sum kind=Sum signs=++", "block Sum kind=Product ops=*/", 1)
    diags = validate_model(parse_model(text))
    assert not errors(diags)
    assert any(d.severity == "warning" and "division" in d.message for d in diags)


def test_validate_is_deterministic_and_sorted():
    m = parse_model(FIG1.replace("S0 -> S1", "S8 -> S9").replace("when y1", "when w"))
    a, b = validate_model(m), validate_model(m)
    assert a == b == sorted(a)


def test_ranged_params_and_inits(usv):
    assert usv.params["wind"].lo == Fraction(-4, 100)
    assert usv.inits["psi"] == Fraction(6, 10)


def test_print_parse_fixtures(fig1, usv):
    assert parse_model(print_model(fig1)) == fig1
    assert parse_model(print_model(usv)) == usv
    assert print_model(parse_model(print_model(usv))) == print_model(usv)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 3), st.booleans())
def test_print_parse_identity_on_generated(seed, depth, smooth):
    m = random_model(seed, GenConfig(depth=depth, smooth=smooth))
    assert errors(validate_model(m)) == []
    assert parse_model(print_model(m)) == m
