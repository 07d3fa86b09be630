"""Rewrite the SMT-LIB golden files under tests/golden.

Run only after an intentional change to the emitted dialect, then review the diff.
"""

import argparse
from pathlib import Path

from ghabmc.flatten import flatten_gha
from ghabmc.model import parse_model
from ghabmc.props import compile_property, negate_for_bmc, parse_properties
from ghabmc.smt import emit_smt
from ghabmc.unroll import unroll

ROOT = Path(__file__).resolve().parent.parent


def goldens() -> dict[str, str]:
    fig1 = parse_model((ROOT / "models/fig1/fig1.gha").read_text())
    usv = flatten_gha(parse_model((ROOT / "models/usv-desk/usv.gha").read_text()))
    cs = unroll(usv, k=5)
    r1 = parse_properties((ROOT / "models/usv-desk/r1.prop").read_text())[0]
    cp = compile_property(r1, cs)
    return {
        "fig1_k1.smt2": emit_smt(unroll(fig1, k=1)),
        "usv_desk_k5.smt2": emit_smt(cs, negate_for_bmc(cp.formula), declarations=cp.declarations,
                                     assertions=cp.assertions),
    }


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=ROOT / "tests" / "golden")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    for name, text in goldens().items():
        (args.out / name).write_text(text)
        print(f"wrote {args.out / name} ({text.count(chr(10))} lines)")


if __name__ == "__main__":
    main()
