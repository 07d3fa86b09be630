from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghabmc.expr import to_infix
from ghabmc.flatten import flatten_gha
from ghabmc.generate import random_model
from ghabmc.model import parse_model
from ghabmc.sim import check_trace, replay
from ghabmc.unroll import UnrollError, check_declared, unroll

RAMP = """\
outputs
  x
initial A
state A
  vars x
  block One kind=Constant value=1
  block X kind=Integrator init=0
  block O kind=Outport var=x
  line One.1 -> X.1
  line X.1 -> O.1
"""


def infix(cs, kind):
    return [to_infix(a.expr) for a in cs.assertions if a.kind == kind]


def test_fig1_k1_core_assertions(fig1):
    cs = unroll(fig1, k=1)
    assert "((s_0 == 0) => [y1_0_end] = integral(0, d_0, [y1_0_begin], S0))" in infix(cs, "continuous-update")
    [t] = infix(cs, "transition")
    assert t.startswith("(((s_0 == 0) && (c_0 == 0)) => ((y1_0_end >= 10) && (s_1 == 1)")
    assert "(y1_1_begin == 0)" in t
    assert check_declared(cs) == []


def test_k0_has_only_init(fig1):
    cs = unroll(fig1, k=0)
    assert {a.kind for a in cs.assertions} == {"init"}
    assert {d.name for d in cs.declarations} >= {"s_0", "tau_0", "y1_0_begin", "x1_0"}


def test_errors(fig1):
    with pytest.raises(UnrollError):
        unroll(fig1, k=-1)
    hier = parse_model((__import__("conftest").MODELS / "usv-desk" / "usv.gha").read_text())
    with pytest.raises(UnrollError, match="flattened"):
        unroll(hier, k=1)


def test_update_cases_exclusive_and_exhaustive(usv_flat):
    """Per (step, variable, state) exactly one of continuous / algebraic / frame."""
    k = 3
    cs = unroll(usv_flat, k=k)
    seen = Counter()
    for a in cs.assertions:
        if a.kind == "continuous-update":
            for v in a.subject.split(","):
                seen[(a.step, v, a.state)] += 1
        elif a.kind in ("algebraic-update", "frame") and a.step < k:
            seen[(a.step, a.subject, a.state)] += 1
    expected = {(i, v, s) for i in range(k) for v in cs.tracked for s in cs.states}
    assert set(seen) == expected and set(seen.values()) == {1}


def test_one_transition_and_stutter_per_step(usv_flat):
    cs = unroll(usv_flat, k=4)
    c = Counter((a.kind, a.step, a.subject) for a in cs.assertions if a.kind in ("transition", "stutter", "clock"))
    assert set(c.values()) == {1}
    assert sum(1 for a in cs.assertions if a.kind == "transition") == 4 * len(usv_flat.transitions)


def test_mode_variables_are_bounded_ints(usv_flat):
    cs = unroll(usv_flat, k=3)
    modes = [d for d in cs.declarations if d.name.startswith("s_")]
    assert [d.name for d in modes] == ["s_0", "s_1", "s_2", "s_3"]
    assert all(d.sort == "Int" and d.lo == 0 and d.hi == len(cs.states) - 1 for d in modes)


def test_frame_for_untouched_variable(fig1):
    # y2 only lives in S1, so in S0 its value is framed and never assigned
    m = parse_model((__import__("conftest").MODELS / "fig1" / "fig1.gha").read_text()
                    .replace("outputs\n  y1\n", "outputs\n  w\n  y1\n"))
    cs = unroll(m, k=3)
    kinds = {a.kind for a in cs.assertions if a.subject == "w"}
    assert kinds == {"frame", "init"}


def test_declared_initial_values(usv_flat):
    cs = unroll(usv_flat, k=1)
    assert cs.init_values["psi"] == Fraction(6, 10)
    assert cs.init_values["x"] == 0


def test_ramp_closed_form():
    """dx/dt = 1 with dwell 1 per step: x_2 end value is 2."""
    m = parse_model(RAMP)
    cs = unroll(m, k=2)
    tr = replay(m, ["A", "A", "A"], [-1, -1], [1.0, 1.0], [{}, {}, {}], {})
    rep = check_trace(tr, cs, 1e-9)
    assert rep.satisfied
    assert abs(tr.segments[2].entry["x"] - 2.0) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.integers(0, 5))
def test_every_assertion_symbol_declared(seed, k):
    cs = unroll(flatten_gha(random_model(seed)), k=k)
    assert check_declared(cs) == []
    names = [d.name for d in cs.declarations]
    assert len(names) == len(set(names))


def test_clock_chain(fig1):
    cs = unroll(fig1, k=2)
    assert infix(cs, "clock") == ["(tau_1 == (tau_0 + d_0))", "(tau_2 == (tau_1 + d_1))"]
