"""Scenario files: TOML in, validated objects out.

Unknown keys are errors. A scenario names the two factors, the grid, the
initial map, the flow settings and the checks to evaluate after the run::

    name = "sinusoid"
    checks = ["slice_converged", "monotonicity"]

    [sigma1]
    kind = "flat-torus"
    dim = 1
    scale = 6.283185307179586
    resolution = [256]

    [sigma2]
    kind = "euclidean-chart"
    dim = 1

    [initial]
    preset = "sinusoid"
    amplitude = 0.05

    [flow]
    t_max = 30.0
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, field, fields

import numpy as np
import tomli

from .discretization import Grid
from .errors import ConfigError
from .factors import KINDS, FactorManifold, ProductSpace
from .flow import FlowConfig, GraphState

SIGMA1_KEYS = {"kind", "dim", "scale", "resolution", "order", "polar_band", "domain"}
SIGMA2_KEYS = {"kind", "dim", "scale"}
TOP_KEYS = {"name", "description", "rho", "checks", "output", "sigma1", "sigma2", "initial", "flow",
            "check_params"}
PRESET_KEYS = {
    "constant": {"value"},
    "sinusoid": {"amplitude", "mode"},
    "linear-wrap": {"slope", "perturbation", "mode"},
    "catenoid": {"c"},
    "expression": {"components"},
    "sphere-bump": {"lambda_sq"},
    "meridian-tilt": {"a", "lambda_sq"},
}
FLOW_KEYS = {f.name for f in fields(FlowConfig)}

KNOWN_CHECKS = ("slice_converged", "maximal_converged", "monotonicity", "volume_law",
                "spacelike_preservation", "decay_rate", "eq3_inequalities", "eq4_bounded",
                "totally_geodesic", "rho_certificate", "normal_velocity")


# -- expression grammar -------------------------------------------------------------

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
_CONSTS = {"pi": math.pi, "e": math.e}
_VARS = ("x", "y")


def parse_expression(text: str):
    """Compile an arithmetic expression in x, y with + − * /, sin, cos, exp and numeric constants.

    Returns a callable taking a dict of coordinate arrays.
    """
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"expression {text!r}: syntax error at column {exc.offset}") from exc

    def build(node):
        if isinstance(node, ast.Expression):
            return build(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            v = float(node.value)
            return lambda env: v
        if isinstance(node, ast.Name):
            if node.id in _VARS:
                name = node.id
                return lambda env: env[name]
            if node.id in _CONSTS:
                v = _CONSTS[node.id]
                return lambda env: v
            raise ConfigError(f"expression {text!r}: unknown identifier {node.id!r}")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op, lhs, rhs = _BINOPS[type(node.op)], build(node.left), build(node.right)
            return lambda env: op(lhs(env), rhs(env))
        if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
            op, arg = _UNARY[type(node.op)], build(node.operand)
            return lambda env: op(arg(env))
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS \
                and len(node.args) == 1 and not node.keywords:
            fn, arg = _FUNCS[node.func.id], build(node.args[0])
            return lambda env: fn(arg(env))
        raise ConfigError(f"expression {text!r}: unsupported construct {type(node).__name__}")

    return build(tree)


# -- scenario objects ----------------------------------------------------------------------

@dataclass
class ScenarioConfig:
    name: str
    space: ProductSpace
    grid: Grid
    initial: dict
    flow: FlowConfig
    checks: list = field(default_factory=list)
    check_params: dict = field(default_factory=dict)
    output: str | None = None
    description: str = ""
    raw: dict = field(default_factory=dict)

    def initial_state(self) -> GraphState:
        from . import presets

        p = dict(self.initial)
        kind = p.pop("preset")
        g, sp = self.grid, self.space
        if kind == "constant":
            fld = presets.constant(g, p.get("value", [0.0] * sp.n))
        elif kind == "sinusoid":
            fld = presets.sinusoid(g, p["amplitude"], int(p.get("mode", 1)), sp.n)
        elif kind == "linear-wrap":
            fld = presets.linear_wrap(g, p["slope"], p.get("perturbation", 0.0), int(p.get("mode", 1)))
        elif kind == "catenoid":
            fld = presets.catenoid(g, p.get("c", 0.5))
        elif kind == "expression":
            fld = presets.expression_map(g, [parse_expression(c) for c in p["components"]])
        elif kind == "sphere-bump":
            fld = presets.sphere_bump(g, sp, p.get("lambda_sq", 0.25))
        elif kind == "meridian-tilt":
            if "a" not in p and "lambda_sq" not in p:
                raise ConfigError("[initial] meridian-tilt needs a or lambda_sq")
            fld = presets.meridian_tilt(g, p.get("a"), sp, p.get("lambda_sq"))
        else:  # pragma: no cover - rejected during validation
            raise ConfigError(f"unknown preset {kind!r}")
        if fld.n != sp.n:
            raise ConfigError(f"initial map has {fld.n} components but sigma2 has dim {sp.n}")
        return GraphState(fld, sp)


def _require_keys(section, table, allowed, where):
    if not isinstance(table, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = set(table) - set(allowed)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(extra))}")


def _num(v, key, positive=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{key} must be a number, got {v!r}")
    v = float(v)
    if positive and not v > 0:
        raise ConfigError(f"{key} must be positive, got {v!r}")
    return v


def _factor(tab, where, keys):
    _require_keys(where, tab, keys, where)
    if "kind" not in tab:
        raise ConfigError(f"[{where}] needs a kind")
    kind = tab["kind"]
    if kind not in KINDS:
        raise ConfigError(f"[{where}] kind {kind!r} is not one of {', '.join(KINDS)}")
    dim = tab.get("dim", 2 if kind == "round-sphere" else 1)
    if isinstance(dim, bool) or not isinstance(dim, int) or dim < 1:
        raise ConfigError(f"[{where}] dim must be a positive integer")
    scale = _num(tab.get("scale", 1.0), f"{where}.scale", positive=True)
    domain = tab.get("domain")
    try:
        return FactorManifold(kind, dim, scale, tuple(tuple(d) for d in domain) if domain else None)
    except ValueError as exc:
        raise ConfigError(f"[{where}] {exc}") from exc


def _grid(tab, s1: FactorManifold):
    res = tab.get("resolution")
    if res is None:
        raise ConfigError("[sigma1] needs a resolution")
    res = [res] if isinstance(res, int) else list(res)
    if not all(isinstance(r, int) and not isinstance(r, bool) and r >= 4 for r in res):
        raise ConfigError("[sigma1] resolution entries must be integers >= 4")
    order = tab.get("order", 2)
    if order not in (2, 4):
        raise ConfigError("[sigma1] order must be 2 or 4")
    band = _num(tab.get("polar_band", 0.0), "sigma1.polar_band")
    if s1.kind == "flat-torus":
        if len(res) == 1:
            res = res * s1.dim
        if len(res) != s1.dim:
            raise ConfigError("[sigma1] resolution needs one entry per axis")
        return Grid.periodic(tuple(res), s1.scale, order=order)
    if s1.kind == "round-sphere":
        n_lat = res[0]
        n_lon = res[1] if len(res) > 1 else 2 * n_lat
        if n_lon % 2:
            raise ConfigError("[sigma1] sphere longitude resolution must be even")
        return Grid.sphere(n_lat, n_lon, order, band)
    if s1.kind == "euclidean-chart":
        if s1.domain is None:
            raise ConfigError("[sigma1] euclidean charts need a domain")
        lo = [d[0] for d in s1.domain]
        hi = [d[1] for d in s1.domain]
        if len(res) == 1:
            res = res * s1.dim
        return Grid.box(lo, hi, res, order)
    raise ConfigError(f"[sigma1] no grid is available for kind {s1.kind!r}")


def scenario_from_dict(d: dict, source="<dict>") -> ScenarioConfig:
    _require_keys("top", d, TOP_KEYS, "top level")
    for sec in ("sigma1", "sigma2", "initial"):
        if sec not in d:
            raise ConfigError(f"{source}: missing [{sec}] table")
    s1 = _factor(d["sigma1"], "sigma1", SIGMA1_KEYS)
    s2 = _factor(d["sigma2"], "sigma2", SIGMA2_KEYS)
    rho = d.get("rho", 1.0)
    if isinstance(rho, str) and rho.lower() in ("inf", "+inf"):
        raise ConfigError("rho = inf disables the target metric and cannot drive a flow")
    rho = _num(rho, "rho", positive=True)
    space = ProductSpace(s1, s2, rho)
    grid = _grid(d["sigma1"], s1)
    init = d["initial"]
    if not isinstance(init, dict) or "preset" not in init:
        raise ConfigError("[initial] needs a preset")
    preset = init["preset"]
    if preset not in PRESET_KEYS:
        raise ConfigError(f"[initial] preset {preset!r} is not one of {', '.join(PRESET_KEYS)}")
    _require_keys("initial", init, PRESET_KEYS[preset] | {"preset"}, "initial")
    if preset == "expression":
        comps = init.get("components")
        if not isinstance(comps, list) or not all(isinstance(c, str) for c in comps):
            raise ConfigError("[initial] components must be a list of expression strings")
        for c in comps:
            parse_expression(c)
    flow_tab = d.get("flow", {})
    _require_keys("flow", flow_tab, FLOW_KEYS, "flow")
    try:
        flow = FlowConfig(**flow_tab)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[flow] {exc}") from exc
    checks = d.get("checks", [])
    if not isinstance(checks, list):
        raise ConfigError("checks must be a list of names")
    bad = [c for c in checks if c not in KNOWN_CHECKS]
    if bad:
        raise ConfigError(f"unknown check(s): {', '.join(bad)}; known: {', '.join(KNOWN_CHECKS)}")
    params = d.get("check_params", {})
    if not isinstance(params, dict):
        raise ConfigError("[check_params] must be a table")
    return ScenarioConfig(d.get("name", "scenario"), space, grid, dict(init), flow, checks, params,
                          d.get("output"), d.get("description", ""), d)


def load_scenario(path) -> ScenarioConfig:
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        return scenario_from_dict(data, str(path))
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
