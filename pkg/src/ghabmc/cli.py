"""Command-line front end: validate, flatten, frs, translate, simulate, check."""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from contextlib import contextmanager
from pathlib import Path

from . import __version__
from .expr import EvalError
from .flatten import FlattenError, flatten_gha
from .frs import AlgebraicLoopError, format_flow
from .model import ModelSyntaxError, errors, parse_model, print_model, validate_model
from .props import PropertyError, compile_property, negate_for_bmc, parse_properties
from .sim import (
    Confirmed,
    SimulationError,
    WitnessError,
    check_trace,
    falsify,
    simulate,
    validate_witness,
)
from .smt import EmitError, emit_smt
from .solver import (
    DEFAULT_TIMEOUT,
    CandidateCounterexample,
    HoldsUpTo,
    interpret,
    resolve_solver,
    run_solver,
)
from .unroll import UnrollError, derive_all, unroll

EXIT_HOLDS, EXIT_CONFIRMED, EXIT_CANDIDATE, EXIT_INCONCLUSIVE, EXIT_ERROR = range(5)


class StageError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@contextmanager
def stage(name: str):
    try:
        yield
    except StageError:
        raise
    except (ValueError, ArithmeticError, KeyError, OSError, RuntimeError) as exc:
        raise StageError(name, str(exc)) from exc


def load_model(path: str):
    with stage("parse"):
        m = parse_model(Path(path).read_text())
    with stage("validate"):
        diags = validate_model(m)
        bad = errors(diags)
        for d in diags:
            if d not in bad:
                print(f"warning: {d.location}: {d.message}", file=sys.stderr)
        if bad:
            raise StageError("validate", "; ".join(f"{d.location}: {d.message}" for d in bad))
    with stage("flatten"):
        flat = flatten_gha(m)
    return m, flat


def build(flat, k: int, d_max: float):
    with stage("fr"):
        frs = derive_all(flat)
    with stage("unroll"):
        return unroll(flat, frs, k, d_max)


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _json_arg(text: str | None) -> dict:
    if not text:
        return {}
    p = Path(text)
    raw = p.read_text() if p.exists() else text
    try:
        return json.loads(raw)
    except json.JSONDecodeError as exc:
        raise StageError("parse", f"bad JSON: {exc}") from None


# --------------------------------------------------------------------------
# subcommands


def cmd_validate(args) -> int:
    with stage("parse"):
        m = parse_model(Path(args.model).read_text())
    diags = validate_model(m)
    for d in diags:
        print(f"{d.severity}: {d.location}: {d.message}")
    if errors(diags):
        print("error[validate]: model has errors", file=sys.stderr)
        return EXIT_ERROR
    print("ok")
    return EXIT_HOLDS


def cmd_flatten(args) -> int:
    _, flat = load_model(args.model)
    _emit(print_model(flat), args.out)
    return EXIT_HOLDS


def cmd_frs(args) -> int:
    _, flat = load_model(args.model)
    with stage("fr"):
        frs = derive_all(flat)
    _emit("".join(format_flow(frs[name]) + "\n" for name in sorted(frs)), args.out)
    return EXIT_HOLDS


def _select(props, name: str | None):
    if name is None:
        return props
    chosen = [p for p in props if p.name == name]
    if not chosen:
        raise StageError("props", f"no property named {name}")
    return chosen


def _load_props(path: str, name: str | None):
    with stage("props"):
        return _select(parse_properties(Path(path).read_text()), name)


def _document(cs, prop, delta: float, positive: bool = False) -> str:
    with stage("props"):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cp = compile_property(prop, cs)
        for w in caught:
            print(f"warning: {prop.name}: {w.message}", file=sys.stderr)
        goal = cp.formula if positive else negate_for_bmc(cp.formula)
    with stage("emit"):
        return emit_smt(cs, goal, delta, cp.declarations, cp.assertions)


def cmd_translate(args) -> int:
    _, flat = load_model(args.model)
    cs = build(flat, args.bound, args.dwell_max)
    if not args.props:
        with stage("emit"):
            _emit(emit_smt(cs, None, args.precision), args.out)
        return EXIT_HOLDS
    props = _load_props(args.props, args.property)
    if len(props) > 1 and not args.out:
        raise StageError("props", "several properties: pick one with --property or give --out DIR")
    for p in props:
        doc = _document(cs, p, args.precision, args.reach_positive)
        if len(props) == 1:
            _emit(doc, args.out)
        else:
            _emit(doc, str(Path(args.out) / f"{p.name}_k{args.bound}.smt2"))
    return EXIT_HOLDS


def cmd_simulate(args) -> int:
    m, _ = load_model(args.model)
    inputs = _json_arg(args.inputs)
    params = _json_arg(args.params)
    with stage("validate"):
        tr = simulate(m, inputs, horizon=args.horizon, dt=args.dt, params=params, seed=args.seed,
                      max_transitions=args.max_transitions, choose=args.choose)
    _emit(tr.to_csv(), args.out)
    print(f"segments={len(tr.segments)} events={len(tr.events)} t_end={tr.segments[-1].t_end!r}",
          file=sys.stderr)
    return EXIT_HOLDS


def cmd_check(args) -> int:
    _, flat = load_model(args.model)
    props = _load_props(args.props, args.property)
    cs = build(flat, args.bound, args.dwell_max)
    out_dir = Path(args.out or "ghabmc-out")
    out_dir.mkdir(parents=True, exist_ok=True)
    exe = resolve_solver(args.solver_path)
    codes = []
    for p in props:
        doc = _document(cs, p, args.precision)
        smt_path = out_dir / f"{p.name}_k{args.bound}.smt2"
        smt_path.write_text(doc)
        report = {"property": p.name, "k": args.bound, "delta": args.precision,
                  "smt": str(smt_path), "solver": exe or "none"}
        if exe:
            code = _check_with_solver(p, flat, cs, exe, smt_path, args, report, out_dir)
        else:
            code = _check_by_simulation(p, cs, args, report, out_dir)
        report["exit"] = code
        for key, val in report.items():
            print(f"{key}={val}")
        print()
        codes.append(code)
    print("summary:")
    for p, code in zip(props, codes):
        print(f"  {p.name}: {_LABEL[code]}")
    for code in (EXIT_CONFIRMED, EXIT_CANDIDATE, EXIT_INCONCLUSIVE):
        if code in codes:
            return code
    return EXIT_HOLDS


_LABEL = {EXIT_HOLDS: "holds up to bound", EXIT_CONFIRMED: "confirmed counterexample",
          EXIT_CANDIDATE: "candidate counterexample (unvalidated)",
          EXIT_INCONCLUSIVE: "inconclusive"}


def _check_with_solver(p, flat, cs, exe, smt_path, args, report, out_dir) -> int:
    with stage("solve"):
        verdict = run_solver(str(smt_path), exe, args.timeout)
        answer = interpret(verdict, args.bound)
    report["verdict"] = type(verdict).__name__
    if isinstance(answer, HoldsUpTo):
        report["answer"] = f"holds up to k={answer.k}"
        return EXIT_HOLDS
    if isinstance(answer, CandidateCounterexample):
        with stage("witness"):
            try:
                res = validate_witness(answer.witness, flat, cs, p, eps=max(args.precision, 1e-4),
                                       dt=args.dt)
            except WitnessError as exc:
                report["answer"] = f"candidate ({exc})"
                return EXIT_CANDIDATE
        report["residual"] = res.residual
        if isinstance(res, Confirmed):
            trace_path = out_dir / f"{p.name}_k{args.bound}_witness.csv"
            trace_path.write_text(res.trace.to_csv())
            report["trace"] = str(trace_path)
            report["answer"] = "confirmed counterexample"
            return EXIT_CONFIRMED
        report["answer"] = "candidate counterexample, replay did not confirm"
        return EXIT_CANDIDATE
    report["answer"] = f"inconclusive ({answer.reason})"
    return EXIT_INCONCLUSIVE


def _check_by_simulation(p, cs, args, report, out_dir) -> int:
    with stage("witness"):
        res = falsify(cs.model, cs, p, runs=args.falsify_runs, seed=args.seed, dt=args.dt,
                      choose=args.choose)
    report["mode"] = "falsification"
    report["runs"] = res.runs
    if not res.found:
        report["answer"] = "inconclusive (no solver; no violation found by simulation)"
        return EXIT_INCONCLUSIVE
    trace_path = out_dir / f"{p.name}_k{args.bound}_falsified.csv"
    trace_path.write_text(res.trace.to_csv())
    report["trace"] = str(trace_path)
    with stage("witness"):
        rep = check_trace(res.trace, cs, 1e-3)
    report["residual"] = rep.max_residual
    if rep.satisfied:
        report["answer"] = "confirmed counterexample (simulation)"
        return EXIT_CONFIRMED
    report["answer"] = "candidate counterexample (simulation trace off the unrolling)"
    return EXIT_CANDIDATE


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ghabmc", description=__doc__)
    ap.add_argument("--version", action="version", version=f"ghabmc {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def model_cmd(name, fn, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("model")
        p.set_defaults(fn=fn)
        return p

    def bmc_opts(p):
        p.add_argument("--bound", "-k", type=int, default=20)
        p.add_argument("--precision", type=float, default=0.001, help="delta")
        p.add_argument("--dwell-max", type=float, default=10.0)
        p.add_argument("--property", help="only this named property")

    model_cmd("validate", cmd_validate, "parse and validate a model")
    model_cmd("flatten", cmd_flatten, "inline subsystems").add_argument("--out")
    model_cmd("frs", cmd_frs, "print flows and closed-form outputs").add_argument("--out")

    p = model_cmd("translate", cmd_translate, "emit SMT-LIB2")
    p.add_argument("props", nargs="?")
    bmc_opts(p)
    p.add_argument("--out")
    p.add_argument("--reach-positive", action="store_true",
                   help="assert the property itself instead of its negation")

    p = model_cmd("simulate", cmd_simulate, "simulate and write a CSV trace")
    p.add_argument("--inputs", help="JSON object or file: name -> value or [[t, value], ...]")
    p.add_argument("--params", help="JSON object or file fixing ranged params")
    p.add_argument("--horizon", type=float, default=10.0)
    p.add_argument("--dt", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-transitions", type=int)
    p.add_argument("--choose", choices=["first"])
    p.add_argument("--out")

    p = model_cmd("check", cmd_check, "bounded model checking of a property file")
    p.add_argument("props")
    bmc_opts(p)
    p.add_argument("--solver-path")
    p.add_argument("--timeout", type=float, default=DEFAULT_TIMEOUT)
    p.add_argument("--out", help="artifact directory (default ghabmc-out)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dt", type=float, default=1e-2)
    p.add_argument("--falsify-runs", type=int, default=200)
    p.add_argument("--choose", choices=["first"], default="first")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_ERROR if exc.code else EXIT_HOLDS
    try:
        return args.fn(args)
    except StageError as exc:
        print(f"error[{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (ModelSyntaxError, FlattenError, AlgebraicLoopError, UnrollError, PropertyError,
            EmitError, SimulationError, EvalError, OSError) as exc:
        tag = {ModelSyntaxError: "parse", FlattenError: "flatten", AlgebraicLoopError: "fr",
               UnrollError: "unroll", PropertyError: "props", EmitError: "emit"}.get(type(exc), "validate")
        print(f"error[{tag}]: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
