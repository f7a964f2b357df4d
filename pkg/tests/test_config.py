import copy
import math
import sys
from pathlib import Path

import numpy as np
import pytest
import tomli
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow.config import load_scenario, parse_expression, scenario_from_dict
from graphflow.errors import ConfigError

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "scripts"))

import export_scenarios  # noqa: E402

BASE = {
    "name": "t",
    "sigma1": {"kind": "flat-torus", "dim": 1, "resolution": [32]},
    "sigma2": {"kind": "euclidean-chart", "dim": 1},
    "initial": {"preset": "sinusoid", "amplitude": 0.1},
}


def with_(path, value):
    d = copy.deepcopy(BASE)
    cur = d
    keys = path.split(".")
    for k in keys[:-1]:
        cur = cur.setdefault(k, {})
    cur[keys[-1]] = value
    return d


class TestExpressions:
    @pytest.mark.parametrize("text,expected", [
        ("1 + 2*3", 7.0), ("-x", -0.5), ("sin(pi/2)", 1.0), ("exp(0) - cos(0)", 0.0),
        ("x / y", 0.25), ("+e", math.e), ("2 * (x - 0.5)", 0.0),
    ])
    def test_values(self, text, expected):
        assert parse_expression(text)({"x": 0.5, "y": 2.0}) == pytest.approx(expected)

    @pytest.mark.parametrize("text,msg", [
        ("x **", "syntax error"), ("z + 1", "unknown identifier 'z'"), ("x ** 2", "unsupported"),
        ("tan(x)", "unsupported"), ("__import__('os')", "unsupported"), ("sin(x, y)", "unsupported"),
        ("True", "unsupported"), ("'a'", "unsupported"),
    ])
    def test_rejects(self, text, msg):
        with pytest.raises(ConfigError, match=msg):
            parse_expression(text)

    def test_arrays(self):
        x = np.linspace(0, 1, 5)
        np.testing.assert_allclose(parse_expression("sin(x)*cos(y)")({"x": x, "y": x}), np.sin(x) * np.cos(x))

    @settings(max_examples=50, deadline=None)
    @given(a=st.floats(-10, 10), b=st.floats(0.1, 10))
    def test_matches_python_arithmetic(self, a, b):
        f = parse_expression(f"({a!r}) * x - ({b!r}) / (y + 1)")
        assert f({"x": 1.5, "y": 0.5}) == pytest.approx(a * 1.5 - b / 1.5)


class TestValidation:
    def test_minimal(self):
        sc = scenario_from_dict(BASE)
        assert sc.grid.shape == (32,) and sc.flow.cfl == 0.2
        assert sc.initial_state().field.values.shape == (32, 1)

    @pytest.mark.parametrize("path,value,msg", [
        ("bogus", 1, r"unknown key\(s\) in \[top level\]: bogus"),
        ("sigma1.colour", "red", r"unknown key\(s\) in \[sigma1\]: colour"),
        ("sigma2.resolution", [8], r"unknown key\(s\) in \[sigma2\]: resolution"),
        ("flow.dtt", 0.1, r"unknown key\(s\) in \[flow\]: dtt"),
        ("initial.amp", 0.1, r"unknown key\(s\) in \[initial\]: amp"),
        ("sigma1.kind", "klein", "kind 'klein' is not one of"),
        ("sigma1.resolution", [2], "integers >= 4"),
        ("sigma1.order", 3, "order must be 2 or 4"),
        ("rho", -1.0, "rho must be positive"),
        ("rho", "inf", "disables the target metric"),
        ("flow.cfl", 2.0, r"\[flow\] cfl must lie"),
        ("checks", ["slice_converged", "wobble"], "unknown check"),
        ("initial.preset", "spiral", "preset 'spiral' is not one of"),
        ("sigma1.dim", 0, "dim must be a positive integer"),
    ])
    def test_errors_name_the_key(self, path, value, msg):
        with pytest.raises(ConfigError, match=msg):
            scenario_from_dict(with_(path, value))

    def test_missing_table(self):
        d = copy.deepcopy(BASE)
        del d["sigma2"]
        with pytest.raises(ConfigError, match=r"missing \[sigma2\]"):
            scenario_from_dict(d)

    def test_expression_checked_at_load(self):
        d = with_("initial", {"preset": "expression", "components": ["sin(q)"]})
        with pytest.raises(ConfigError, match="unknown identifier 'q'"):
            scenario_from_dict(d)

    def test_component_count(self):
        d = with_("initial", {"preset": "constant", "value": [1.0, 2.0]})
        with pytest.raises(ConfigError, match="components"):
            scenario_from_dict(d).initial_state()

    def test_sphere_grid(self):
        d = {"sigma1": {"kind": "round-sphere", "resolution": [8], "polar_band": 0.3},
             "sigma2": {"kind": "round-sphere", "scale": 2.0}, "initial": {"preset": "constant",
                                                                          "value": [1.5, 0.0]}}
        sc = scenario_from_dict(d)
        assert sc.grid.shape == (8, 16) and sc.grid.polar_band == 0.3

    def test_box_needs_domain(self):
        d = with_("sigma1", {"kind": "euclidean-chart", "dim": 2, "resolution": [9]})
        with pytest.raises(ConfigError, match="need a domain"):
            scenario_from_dict(d)


class TestFiles:
    def test_toml_syntax_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.toml"
        p.write_text('name = "x"\n[sigma1\nkind = 1\n')
        with pytest.raises(ConfigError, match="line 2"):
            load_scenario(p)

    def test_error_names_the_file(self, tmp_path):
        p = tmp_path / "s.toml"
        p.write_text(export_scenarios.to_toml(with_("flow.nope", 1)))
        with pytest.raises(ConfigError, match="s.toml.*nope"):
            load_scenario(p)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_scenario(tmp_path / "absent.toml")

    @pytest.mark.parametrize("name", sorted(export_scenarios.all_scenarios()))
    def test_shipped_scenarios_match_tables(self, name):
        path = ROOT / "scenarios" / f"{name}.toml"
        with open(path, "rb") as fh:
            assert tomli.load(fh) == export_scenarios.all_scenarios()[name]
        load_scenario(path)

    @settings(max_examples=30, deadline=None)
    @given(st.dictionaries(st.sampled_from(["cfl", "t_max", "tol_H", "tol_osc"]), st.floats(1e-6, 1.0)))
    def test_writer_round_trip(self, flow):
        d = copy.deepcopy(BASE)
        d["flow"] = flow
        assert tomli.loads(export_scenarios.to_toml(d)) == d
