"""Write scenarios/*.toml from the scenario tables in graphflow.suites.

The files are regenerated rather than edited by hand, and a test checks that
they still load to the same tables.
"""

import argparse
import copy
from pathlib import Path

from graphflow.suites import SCENARIOS

# extra fixtures that are not part of the acceptance tables
EXTRA = {
    "bad_amplitude": {
        "name": "bad_amplitude",
        "description": "sinusoid with slope 1.2: not spacelike, rejected before stepping",
        "sigma1": {"kind": "flat-torus", "dim": 1, "scale": 6.283185307179586, "resolution": [64]},
        "sigma2": {"kind": "euclidean-chart", "dim": 1},
        "initial": {"preset": "sinusoid", "amplitude": 1.2},
        "checks": ["slice_converged"],
    },
    "expression_torus": {
        "name": "expression_torus",
        "description": "T2 -> R with initial data from an expression",
        "sigma1": {"kind": "flat-torus", "dim": 2, "scale": 6.283185307179586, "resolution": [32]},
        "sigma2": {"kind": "euclidean-chart", "dim": 1},
        "initial": {"preset": "expression", "components": ["0.05*sin(x)*cos(y) + 0.02*cos(2*x)"]},
        "flow": {"cfl": 0.8, "t_max": 40.0, "tol_H": 1e-10, "monitor_stride": 50},
        "checks": ["slice_converged", "monotonicity", "volume_law", "spacelike_preservation", "decay_rate",
                   "eq3_inequalities", "normal_velocity"],
    },
}


def _value(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int,)):
        return str(v)
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, str):
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_value(x) for x in v) + "]"
    raise TypeError(f"cannot write {v!r}")


def to_toml(d):
    lines = []
    tables = []
    for k, v in d.items():
        if isinstance(v, dict):
            tables.append((k, v))
        else:
            lines.append(f"{k} = {_value(v)}")
    for name, tab in tables:
        lines.append("")
        lines.append(f"[{name}]")
        for k, v in tab.items():
            lines.append(f"{k} = {_value(v)}")
    return "\n".join(lines) + "\n"


def all_scenarios():
    out = copy.deepcopy(SCENARIOS)
    out.update(copy.deepcopy(EXTRA))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "scenarios"))
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, d in all_scenarios().items():
        path = out / f"{name}.toml"
        path.write_text(to_toml(d), encoding="utf-8")
        print(path)


if __name__ == "__main__":
    main()
