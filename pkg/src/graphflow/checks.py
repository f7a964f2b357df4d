"""Named post-run checks for scenario files.

Every check returns a :class:`CheckVerdict` with status ``pass``, ``fail`` or
``inapplicable`` and the numbers it was decided on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import curvature_hypotheses, decay_fit, volume_law_check
from .errors import InsufficientDataError
from .factors import ProductSpace
from .flow import normal_velocity_check
from .immersion import GraphJet, certificate_rho, graph_predicates
from .discretization import refinement_order


@dataclass
class CheckVerdict:
    name: str
    status: str
    numbers: dict = field(default_factory=dict)
    note: str = ""

    @property
    def passed(self):
        return self.status == "pass"

    def as_dict(self):
        return {"check": self.name, "status": self.status, "numbers": _clean(self.numbers), "note": self.note}


def _clean(d):
    out = {}
    for k, v in d.items():
        if isinstance(v, (float, np.floating)):
            v = float(v)
            out[k] = v if math.isfinite(v) else repr(v)
        elif isinstance(v, (np.bool_, bool)):
            out[k] = bool(v)
        elif isinstance(v, (np.integer,)):
            out[k] = int(v)
        elif isinstance(v, dict):
            out[k] = _clean(v)
        else:
            out[k] = v
    return out


def _status(ok):
    return "pass" if ok else "fail"


def _slice(sc, tr, p):
    return CheckVerdict("slice_converged", _status(tr.termination == "slice-converged"),
                        {"termination": tr.termination, "t_final": tr.final.t,
                         "oscillation": tr.final.oscillation()})


def _maximal(sc, tr, p):
    # a slice is a particular maximal limit, so both terminations count
    ok = tr.termination in ("maximal-converged", "slice-converged")
    return CheckVerdict("maximal_converged", _status(ok),
                        {"termination": tr.termination, "t_final": tr.final.t,
                         "oscillation": tr.final.oscillation(), "sup_H": tr.records[-1].sup_H})


def _monotonicity(sc, tr, p):
    cosh = np.array([r.max_cosh_theta for r in tr.records])
    rise = float(np.max(np.diff(cosh))) if cosh.size > 1 else 0.0
    ok = bool(tr.meta.get("monotone_all", True)) and all(r.monotonicity_ok for r in tr.records)
    return CheckVerdict("monotonicity", _status(ok), {"max_rise": rise, "slack": sc.flow.monotone_slack})


def _volume_law(sc, tr, p):
    try:
        v = volume_law_check(tr, bound_tol=p.get("volume_bound_tol", 1e-6))
    except InsufficientDataError as exc:
        if tr.termination == "slice-converged" and tr.final.step == 0:
            # an initial slice never moves: the law holds with zero residual
            r = tr.records[-1]
            ok = r.volume_law_residual < p.get("volume_law_tol", 1e-4) and r.volume <= r.volume1 + 1e-6
            return CheckVerdict("volume_law", _status(ok), {"differential_residual": r.volume_law_residual,
                                                             "records": len(tr.records)}, "stationary slice")
        return CheckVerdict("volume_law", "inapplicable", {"records": len(tr.records)}, str(exc))
    tol = p.get("volume_law_tol", 1e-4)
    ok = v.nondecreasing and v.bounded_by_sigma1 and v.differential_residual < tol
    return CheckVerdict("volume_law", _status(ok),
                        {"differential_residual": v.differential_residual, "tolerance": tol,
                         "exponential_residual": v.exponential_residual, "nondecreasing": v.nondecreasing,
                         "bounded_by_sigma1": v.bounded_by_sigma1, "sup_bound_ok": v.sup_bound_ok})


def _spacelike(sc, tr, p):
    ric_ok, k_ok = curvature_hypotheses(sc.space)
    h = sc.grid.h_min
    C = p.get("margin_constant", 1.0)
    m0, mmin = tr.meta["margin0"], tr.meta.get("min_margin_all", float("nan"))
    nums = {"margin0": m0, "min_margin": mmin, "allowance": C * h * h}
    if not (ric_ok and k_ok):
        return CheckVerdict("spacelike_preservation", "inapplicable", nums, "curvature hypotheses fail")
    guard = tr.termination == "spacelike-guard"
    return CheckVerdict("spacelike_preservation", _status(not guard and mmin >= m0 - C * h * h), nums)


def _decay(sc, tr, p):
    fit = decay_fit(tr, p.get("decay_quantity", "cosh_theta_minus_1"))
    nums = {"rate": fit.rate, "points": fit.n_points, "window_start": fit.window[0],
            "window_end": fit.window[1], "fit_residual": fit.residual}
    if fit.shortened:
        return CheckVerdict("decay_rate", "inapplicable", nums, "too few monitor records inside the fit window")
    lo, hi = p.get("decay_min"), p.get("decay_max")
    if lo is None and hi is None:
        ok = fit.rate > 0
    else:
        ok = (lo is None or fit.rate >= lo) and (hi is None or fit.rate <= hi)
    return CheckVerdict("decay_rate", _status(ok), nums)


def _eq3(sc, tr, p):
    ric_ok, k_ok = curvature_hypotheses(sc.space)
    res = [r.eq3_max_residual for r in tr.records if math.isfinite(r.eq3_max_residual)]
    nums = {"max_residual": max(res) if res else float("nan")}
    if not (ric_ok and k_ok):
        return CheckVerdict("eq3_inequalities", "inapplicable", nums, "curvature hypotheses fail")
    braced = all(r.eq3_braced_ok for r in tr.records)
    curv = all(r.eq3_curvature_ok for r in tr.records)
    nums.update(braced_ok=braced, curvature_ok=curv)
    return CheckVerdict("eq3_inequalities", _status(braced and curv), nums)


def _eq4(sc, tr, p):
    val = tr.meta.get("eq4_running_max", float("nan"))
    bound = p.get("eq4_bound", math.inf)
    return CheckVerdict("eq4_bounded", _status(math.isfinite(val) and val <= bound),
                        {"running_max": val, "bound": bound,
                         "signed_running_max": tr.meta.get("eq4_signed_running_max", float("nan"))})


def _totally_geodesic(sc, tr, p):
    tol = p.get("B2_tol", 1e-8)
    b2 = tr.records[-1].max_B2
    return CheckVerdict("totally_geodesic", _status(b2 < tol), {"max_B2": b2, "tolerance": tol})


def _rho(sc, tr, p):
    base = ProductSpace(sc.space.sigma1, sc.space.sigma2, 1.0)
    rho = certificate_rho(base)
    J = sc.initial_state().jets()
    pred = graph_predicates(GraphJet(J.x, J.y, J.df, J.d2f), base, J.valid)
    nums = {"rho": rho, "max_lambda1_sq": pred["max_lambda1_sq"], "spacelike_unrescaled": pred["spacelike"]}
    if rho == 0.0:
        return CheckVerdict("rho_certificate", "inapplicable", nums, "no curvature certificate for these factors")
    return CheckVerdict("rho_certificate", _status(bool(pred["rho_certificate"])), nums)


def _normal_velocity(sc, tr, p):
    from dataclasses import replace

    states = [sc.initial_state()]
    states.append(replace(sc, grid=sc.grid.refined()).initial_state())
    errs = [normal_velocity_check(s, s.grid.eval_mask()) for s in states]
    ro = refinement_order(errs, [s.grid.h_min for s in states])
    target, tol = p.get("order", 2.0), p.get("order_tol", 0.3)
    nums = {"errors": list(map(float, errs)), "order": ro.order}
    if ro.inconclusive:
        return CheckVerdict("normal_velocity", "inapplicable", nums, "residuals at the floating-point floor")
    return CheckVerdict("normal_velocity", _status(abs(ro.order - target) <= tol), nums)


CHECKS = {
    "slice_converged": _slice,
    "maximal_converged": _maximal,
    "monotonicity": _monotonicity,
    "volume_law": _volume_law,
    "spacelike_preservation": _spacelike,
    "decay_rate": _decay,
    "eq3_inequalities": _eq3,
    "eq4_bounded": _eq4,
    "totally_geodesic": _totally_geodesic,
    "rho_certificate": _rho,
    "normal_velocity": _normal_velocity,
}


def evaluate_checks(scenario, trajectory):
    p = scenario.check_params
    return [CHECKS[name](scenario, trajectory, p) for name in scenario.checks]
