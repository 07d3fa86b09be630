"""Regenerate models/usv-desk/usv.gha.

The four modes share one block layout (kinematics subsystem, speed loop,
heading loop) and differ only in the speed reference and loop gains.
"""

from pathlib import Path

PSI_REF = "0.7853981633974483"  # pi/4, heading of the straight line to (50, 50)

MODES = {
    # name: (speed reference, speed gain, heading gain, gps, acc)
    "accelerate": (5, 1, 2, 1, 1),
    "cruise": (5, 1, 2, 1, 0),
    "turn_adjust": (2, 1, 4, 1, 1),
    "stop": (0, 2, 2, 0, 0),
}

HEADER = """\
# Desk-scale unmanned surface vessel: planar kinematics, first-order speed and
# heading loops, target (50, 50), arrival tolerance 0.8. Regenerate with
# scripts/make_usv_desk.py.
outputs
  hError
  dec
  gps
  acc
params
  wind in [-0.04, 0.04]
init
  psi = 0.6
initial accelerate
"""

STATE = """\
state {name}
  vars x, y, v, psi, hError, gps, acc, wind
  block X kind=Integrator init=0 out=x
  block Y kind=Integrator init=0 out=y
  block V kind=Integrator init=0 out=v
  block Psi kind=Integrator init=0.6 out=psi
  block Kin kind=Subsystem
    block Speed kind=Inport port=1
    block Heading kind=Inport port=2
    block Cos kind=Trigonometry fn=cos
    block Sin kind=Trigonometry fn=sin
    block Vx kind=Product ops=**
    block Vy kind=Product ops=**
    block OutX kind=Outport port=1
    block OutY kind=Outport port=2
    line Heading.1 -> Cos.1, Sin.1
    line Speed.1 -> Vx.1, Vy.1
    line Cos.1 -> Vx.2
    line Sin.1 -> Vy.2
    line Vx.1 -> OutX.1
    line Vy.1 -> OutY.1
  block Vref kind=Constant value={vref}
  block Verr kind=Sum signs=+-
  block Kv kind=Gain k={kv}
  block PsiRef kind=Constant value={psi_ref}
  block Herr kind=Sum signs=+-
  block Kpsi kind=Gain k={kpsi}
  block Wind kind=Inport var=wind
  block Turn kind=Sum signs=++
  block Gps kind=Constant value={gps}
  block Acc kind=Constant value={acc}
  block OutH kind=Outport var=hError
  block OutGps kind=Outport var=gps
  block OutAcc kind=Outport var=acc
  line V.1 -> Kin.1, Verr.2
  line Psi.1 -> Kin.2, Herr.2
  line Kin.1 -> X.1
  line Kin.2 -> Y.1
  line Vref.1 -> Verr.1
  line Verr.1 -> Kv.1
  line Kv.1 -> V.1
  line PsiRef.1 -> Herr.1
  line Herr.1 -> Kpsi.1, OutH.1
  line Kpsi.1 -> Turn.1
  line Wind.1 -> Turn.2
  line Turn.1 -> Psi.1
  line Gps.1 -> OutGps.1
  line Acc.1 -> OutAcc.1
"""

ARRIVED = "50 - x <= 0.8 && 50 - y <= 0.8"

TRANSITIONS = f"""\
transition accelerate -> cruise when v >= 4.5
transition cruise -> stop when {ARRIVED}
transition cruise -> turn_adjust when hError > 0.01 do dec := 1
transition turn_adjust -> stop when {ARRIVED} do dec := 0
transition turn_adjust -> cruise when hError <= 0.005 do dec := 0
"""


def render() -> str:
    parts = [HEADER]
    for name, (vref, kv, kpsi, gps, acc) in MODES.items():
        parts.append(STATE.format(name=name, vref=vref, kv=kv, kpsi=kpsi, gps=gps, acc=acc,
                                  psi_ref=PSI_REF))
    parts.append(TRANSITIONS)
    return "".join(parts)


if __name__ == "__main__":
    out = Path(__file__).resolve().parent.parent / "models" / "usv-desk" / "usv.gha"
    out.write_text(render())
    print(f"wrote {out}")
