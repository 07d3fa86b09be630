import stat
import sys

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghabmc.solver import (
    ENV_VAR,
    CandidateCounterexample,
    DeltaSat,
    Failure,
    HoldsUpTo,
    Inconclusive,
    Unknown,
    Unsat,
    interpret,
    parse_output,
    parse_witness,
    resolve_solver,
    run_solver,
)

DREAL_SAT = b"""delta-sat with delta = 0.00100000000000000
Solution:
d_0 : [3.332031250000000, 3.333984375000000]
s_1 : [1, 1]
wind : [-0.04, 0.04]
tau_0 : [ENTIRE] = [-INFTY, INFTY]
"""


def test_unsat():
    assert parse_output(b"unsat\n") == Unsat()


def test_delta_sat_with_model():
    v = parse_output(DREAL_SAT)
    assert isinstance(v, DeltaSat) and v.delta == pytest.approx(1e-3)
    assert v.witness["d_0"] == (3.33203125, 3.333984375)
    assert v.witness["s_1"] == (1.0, 1.0)
    assert "tau_0" not in v.witness


def test_plain_sat_and_point_values():
    v = parse_output("sat\nx : 1.5\n")
    assert v == DeltaSat(None, {"x": (1.5, 1.5)})


def test_unknown_and_failure():
    assert isinstance(parse_output(b"unknown\n"), Unknown)
    assert parse_output(b"", 137, b"Killed") == Failure(137, "Killed")
    assert isinstance(parse_output(b"garbage"), Unknown)


def test_witness_skips_bad_boxes():
    assert parse_witness("a : [2, 1]\nb : [nan, 1]\nc : (0, 1)") == {"c": (0.0, 1.0)}


@settings(max_examples=2000, deadline=None)
@given(st.binary(max_size=200), st.integers(-300, 300), st.binary(max_size=50))
def test_parse_is_total(out, code, err):
    v = parse_output(out, code, err)
    assert isinstance(v, (Unsat, DeltaSat, Unknown, Failure))


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet="unsatdelt-wh=0.1 :[],\nxy", max_size=120))
def test_parse_is_total_on_near_misses(text):
    assert isinstance(parse_output(text), (Unsat, DeltaSat, Unknown, Failure))


def _fake(tmp_path, body: str) -> str:
    exe = tmp_path / "fake-solver"
    exe.write_text(f"#!{sys.executable}\nimport sys, time\n{body}\n")
    exe.chmod(exe.stat().st_mode | stat.S_IEXEC)
    return str(exe)


@pytest.fixture
def doc(tmp_path):
    p = tmp_path / "q.smt2"
    p.write_text("(check-sat)\n")
    return str(p)


def test_run_solver_passes_model_flag(tmp_path, doc):
    exe = _fake(tmp_path, "print('delta-sat with delta = 0.001' if sys.argv[1] == '--model' else 'unsat')\n"
                          "print('d_0 : [1, 2]')")
    assert run_solver(doc, exe) == DeltaSat(0.001, {"d_0": (1.0, 2.0)})


def test_run_solver_timeout(tmp_path, doc):
    exe = _fake(tmp_path, "time.sleep(10)")
    v = run_solver(doc, exe, timeout=0.5)
    assert isinstance(v, Unknown) and v.raw.startswith("timeout")


def test_run_solver_crash(tmp_path, doc):
    exe = _fake(tmp_path, "sys.stderr.write('out of memory'); sys.exit(137)")
    assert run_solver(doc, exe) == Failure(137, "out of memory")


def test_run_solver_missing(tmp_path, doc):
    assert isinstance(run_solver(doc, str(tmp_path / "nope")), Failure)
    with pytest.raises(FileNotFoundError):
        run_solver(str(tmp_path / "missing.smt2"), "true")


def test_resolve(tmp_path, monkeypatch):
    exe = _fake(tmp_path, "pass")
    monkeypatch.setenv(ENV_VAR, exe)
    assert resolve_solver() == exe
    assert resolve_solver(str(tmp_path / "nope")) is None
    monkeypatch.delenv(ENV_VAR)
    monkeypatch.setenv("PATH", str(tmp_path))
    assert resolve_solver() is None


def test_interpret():
    assert interpret(Unsat(), 5) == HoldsUpTo(5)
    ans = interpret(DeltaSat(0.001, {"d_0": (0.0, 1.0)}), 5)
    assert ans == CandidateCounterexample({"d_0": (0.0, 1.0)}) and not ans.confirmed
    assert interpret(Unknown("timeout after 3 s\n"), 5) == Inconclusive("timeout after 3 s")
    assert interpret(Failure(137, ""), 5) == Inconclusive("solver failed with exit code 137")
