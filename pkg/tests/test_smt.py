import importlib.util
import re
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDEN, ROOT
from ghabmc.expr import Bool, Cmp, Const, Var
from ghabmc.flatten import flatten_gha
from ghabmc.generate import random_model
from ghabmc.smt import EmitError, SmtSyntaxError, check_document, emit_smt, read, write
from ghabmc.unroll import Decl, unroll

spec = importlib.util.spec_from_file_location("regen_goldens", ROOT / "scripts" / "regen_goldens.py")
regen = importlib.util.module_from_spec(spec)
spec.loader.exec_module(regen)


@pytest.mark.parametrize("name", ["fig1_k1.smt2", "usv_desk_k5.smt2"])
def test_golden(name):
    assert regen.goldens()[name] == (GOLDEN / name).read_text()


def test_header_and_trailer(fig1):
    doc = emit_smt(unroll(fig1, k=1), delta=0.01)
    lines = doc.splitlines()
    assert lines[:2] == ["(set-logic QF_NRA_ODE)", "(set-option :precision 0.01)"]
    assert lines[-2:] == ["(check-sat)", "(exit)"]
    assert doc.endswith("\n") and "\r" not in doc


def test_define_ode_fig1(fig1):
    doc = emit_smt(unroll(fig1, k=1))
    assert "(define-ode flow_S0 ((= d/dt[y1] (+ x1 x2))))" in doc
    assert "(define-ode flow_S1 ((= d/dt[I] x1)))" in doc
    assert "(= [y1_0_end] (integral 0. d_0 [y1_0_begin] flow_S0))" in doc


def test_bounded_declarations(fig1):
    doc = emit_smt(unroll(fig1, k=1))
    assert "(declare-fun d_0 () Real [0.0, 10.0])" in doc
    assert "(declare-fun c_0 () Int [-1, 0])" in doc


def test_half_bounded_declaration_becomes_assert(fig1):
    doc = emit_smt(unroll(fig1, k=0), declarations=(Decl("w", "Real", None, Fraction(2)),))
    assert "(declare-fun w () Real)" in doc and "(assert (<= w 2.0))" in doc


def test_k0_no_dynamics(fig1):
    doc = emit_smt(unroll(fig1, k=0))
    asserts = [ln for ln in doc.splitlines() if ln.startswith("(assert")]
    assert all(re.fullmatch(r"\(assert \(= \w+ [\d.]+\)\)", a) for a in asserts)
    assert "integral" not in "".join(asserts)


def test_structure_counts(usv_flat):
    k = 4
    cs = unroll(usv_flat, k=k)
    doc = emit_smt(cs)
    heads = Counter(f[0].name for f in read(doc))
    assert heads["declare-fun"] == len(cs.declarations)
    assert heads["define-ode"] == len(cs.states)
    assert heads["assert"] == len(cs.assertions)
    assert doc.count("(integral ") == k * len(cs.states)
    assert heads["check-sat"] == 1
    assert check_document(doc) == []


def test_errors(fig1):
    cs = unroll(fig1, k=1)
    with pytest.raises(EmitError, match="precision"):
        emit_smt(cs, delta=0)
    with pytest.raises(EmitError, match="duplicate"):
        emit_smt(cs, declarations=(Decl("d_0", "Real"),))


def test_check_document_catches_undeclared(fig1):
    doc = emit_smt(unroll(fig1, k=1), Cmp(">", Var("ghost"), Const(0)))
    assert check_document(doc) == ["undeclared symbol ghost"]
    with pytest.raises(SmtSyntaxError):
        read("(assert (> x 1)")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 4))
def test_round_trip_and_determinism(seed, k):
    cs = unroll(flatten_gha(random_model(seed)), k=k)
    goal = Bool("or", (Cmp(">", Var(f"x_{k}_end"), Const(1)),))
    doc = emit_smt(cs, goal)
    assert write(read(doc)) == doc
    assert emit_smt(unroll(flatten_gha(random_model(seed)), k=k), goal) == doc
    assert check_document(doc) == []
