"""External delta-complete solver: subprocess driver, verdict parser, BMC reading."""

from __future__ import annotations

import math
import os
import re
import shutil
import subprocess
from dataclasses import dataclass, field
from typing import Mapping, Union

DEFAULT_TIMEOUT = 300.0
ENV_VAR = "GHABMC_SOLVER"


@dataclass(frozen=True)
class Unsat:
    pass


@dataclass(frozen=True)
class DeltaSat:
    delta: float | None
    witness: dict[str, tuple[float, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class Unknown:
    raw: str


@dataclass(frozen=True)
class Failure:
    code: int
    stderr: str


SolverVerdict = Union[Unsat, DeltaSat, Unknown, Failure]

_FLOAT = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?|[-+]?inf(?:inity)?|[-+]?INFTY"
_DELTA = re.compile(rf"delta-sat\s+with\s+delta\s*=\s*({_FLOAT})")
_BOX = re.compile(rf"^\s*([A-Za-z_][\w.]*)\s*:\s*[\[(]\s*({_FLOAT})\s*,\s*({_FLOAT})\s*[\])]")
_POINT = re.compile(rf"^\s*([A-Za-z_][\w.]*)\s*:\s*({_FLOAT})\s*$")


def _num(text: str) -> float:
    t = text.lower().replace("infinity", "inf").replace("infty", "inf")
    return float(t)


def parse_witness(text: str) -> dict[str, tuple[float, float]]:
    box: dict[str, tuple[float, float]] = {}
    for line in text.splitlines():
        m = _BOX.match(line)
        if m:
            lo, hi = _num(m.group(2)), _num(m.group(3))
        else:
            m = _POINT.match(line)
            if not m:
                continue
            lo = hi = _num(m.group(2))
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            continue
        box[m.group(1)] = (lo, hi)
    return box


def parse_output(stdout: bytes | str, code: int = 0, stderr: bytes | str = b"") -> SolverVerdict:
    """Classify solver output. Total: every input maps to exactly one verdict."""
    out = stdout.decode("utf-8", "replace") if isinstance(stdout, bytes) else stdout
    err = stderr.decode("utf-8", "replace") if isinstance(stderr, bytes) else stderr
    for line in out.splitlines():
        tok = line.strip()
        if not tok:
            continue
        word = tok.split()[0]
        if word == "unsat":
            return Unsat()
        if word in ("delta-sat", "sat"):
            m = _DELTA.search(tok)
            delta = None
            if m:
                try:
                    delta = _num(m.group(1))
                except ValueError:
                    delta = None
            return DeltaSat(delta, parse_witness(out))
        if word in ("unknown", "timeout"):
            return Unknown(out[:2000])
    if code != 0:
        return Failure(code, err[-2000:])
    return Unknown(out[:2000])


def resolve_solver(path: str | None = None) -> str | None:
    cand = path or os.environ.get(ENV_VAR)
    if not cand:
        for name in ("dReal", "dreal"):
            found = shutil.which(name)
            if found:
                return found
        return None
    return shutil.which(cand) or (cand if os.path.isfile(cand) else None)


def run_solver(doc: str, exe: str, timeout: float = DEFAULT_TIMEOUT,
               args: tuple[str, ...] = ("--model",)) -> SolverVerdict:
    if not os.path.exists(doc):
        raise FileNotFoundError(doc)
    try:
        proc = subprocess.run([exe, *args, doc], capture_output=True, timeout=timeout)
    except subprocess.TimeoutExpired as exc:
        return Unknown(f"timeout after {timeout} s\n" + (exc.stdout or b"").decode("utf-8", "replace"))
    except OSError as exc:
        return Failure(-1, str(exc))
    return parse_output(proc.stdout, proc.returncode, proc.stderr)


# --------------------------------------------------------------------------
# BMC answers


@dataclass(frozen=True)
class HoldsUpTo:
    k: int


@dataclass(frozen=True)
class CandidateCounterexample:
    witness: Mapping[str, tuple[float, float]]
    confirmed: bool = False


@dataclass(frozen=True)
class Inconclusive:
    reason: str


BmcAnswer = Union[HoldsUpTo, CandidateCounterexample, Inconclusive]


def interpret(v: SolverVerdict, k: int) -> BmcAnswer:
    """Read a verdict on M and not-phi. A delta-sat answer is never reported as
    confirmed here; only witness validation may upgrade it."""
    if isinstance(v, Unsat):
        return HoldsUpTo(k)
    if isinstance(v, DeltaSat):
        return CandidateCounterexample(dict(v.witness))
    if isinstance(v, Unknown):
        return Inconclusive(v.raw.splitlines()[0] if v.raw.strip() else "unknown")
    return Inconclusive(f"solver failed with exit code {v.code}")
