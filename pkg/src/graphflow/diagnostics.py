"""Verifiers for the identities, inequalities and convergence behaviour of the flow.

Time derivatives of geometric scalars along the flow are taken in the
parametric gauge: if ψ is read off the graph at base point x, its rate along
mean curvature flow is ∂ₜψ + ∇ψ·H₁, with H₁ the Σ₁ component of H.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import discretization as disc
from .discretization import Grid, JetField
from .errors import InsufficientDataError
from .factors import ProductSpace
from .immersion import GraphJet, compute_geometry

RECORD_COLUMNS = ("t", "dt", "max_cosh_theta", "min_margin", "sup_H", "max_B2", "volume",
                  "volume_law_residual", "eq3_max_residual", "eq4_gap", "monotonicity_ok")


@dataclass
class DiagnosticsRecord:
    t: float
    dt: float
    max_cosh_theta: float
    min_margin: float
    sup_H: float
    max_B2: float
    volume: float
    volume_law_residual: float
    eq3_max_residual: float
    eq4_gap: float
    monotonicity_ok: bool
    max_cosh_minus_1: float = float("nan")
    oscillation: float = float("nan")
    volume1: float = float("nan")
    volume_exp_residual: float = float("nan")
    eq4_gap_signed: float = float("nan")
    eq3_braced_ok: bool = True
    eq3_curvature_ok: bool = True
    step: int = 0

    def row(self):
        return [getattr(self, c) for c in RECORD_COLUMNS]

    def as_dict(self):
        return asdict(self)


# -- node geometry of a whole field ---------------------------------------------------

@dataclass
class FieldGeometry:
    """Frame-level geometry at the valid nodes of a jet field, scattered back to the grid."""

    mask: np.ndarray
    geo: object
    shape: tuple

    def full(self, attr, fill=np.nan):
        a = getattr(self.geo, attr)
        out = np.full(self.shape + a.shape[1:], fill)
        out[self.mask] = a
        return out


def field_geometry(jets: JetField, space: ProductSpace, mask=None) -> FieldGeometry:
    sel = jets.valid if mask is None else (mask & jets.valid)
    jet = GraphJet(jets.x[sel], jets.y[sel], jets.df[sel], jets.d2f[sel])
    return FieldGeometry(sel, compute_geometry(jet, space), jets.valid.shape)


def _jets_of(state):
    return state.kinematics().jets


# -- evolution of the hyperbolic angle along the flow --------------------------------------

def _h_pairs(h, lam, nmin):
    """Σ_k λ_i² (h^{m+i}_{ik})², the two i<j cross sums, over i, j < min(m, n)."""
    sq = np.zeros(lam.shape[:-1])
    diag = np.zeros(lam.shape[:-1])
    cross = np.zeros(lam.shape[:-1])
    for i in range(nmin):
        sq += lam[..., i] ** 2 * np.sum(h[..., i, i, :] ** 2, axis=-1)
        for j in range(i + 1, nmin):
            w = lam[..., i] * lam[..., j]
            diag += w * np.sum(h[..., i, i, :] * h[..., j, j, :], axis=-1)
            cross += w * np.sum(h[..., j, i, :] * h[..., i, j, :], axis=-1)
    return sq, diag, cross


def curvature_hypotheses(space: ProductSpace):
    """(Ricci₁ ≥ 0, K₁ ≥ K₂ on 2-planes of the rescaled target)."""
    K1 = space.K1
    ric_ok = space.sigma1.ricci_constant >= 0
    if space.n < 2 or space.m < 2:
        k_ok = True
    else:
        k_ok = K1 >= space.K2
    return ric_ok, k_ok


def _curvature_term(lam, space, ricci_form="a"):
    """−Σ_i λ_i² (coef · Ric₁ + Σ_{j≠i} λ_j² [K₁ − K₂] / ((1−λ_i²)(1−λ_j²))) with its sign removed."""
    m = lam.shape[-1]
    one = 1.0 - lam**2
    ric = space.sigma1.ricci_constant
    coef = lam**2 / one if ricci_form == "a" else lam**2 / one**2
    out = ric * np.sum(coef, axis=-1)
    if space.m >= 2 and space.n >= 2:
        dK = space.K1 - space.K2
        for i in range(m):
            for j in range(m):
                if i != j:
                    out = out + lam[..., i] ** 2 * lam[..., j] ** 2 / (one[..., i] * one[..., j]) * dK
    return out


@dataclass
class Eq3Terms:
    L: np.ndarray
    lap_L: np.ndarray
    grad_L: np.ndarray
    braced: np.ndarray
    curvature: np.ndarray
    B2: np.ndarray
    margin_min: float


def eq3_terms(state, ricci_form="a") -> Eq3Terms:
    grid = state.grid
    kin = state.kinematics()
    fg = field_geometry(kin.jets, state.space)
    geo = fg.geo
    m, n = state.space.m, state.space.n
    L = np.log1p(fg.full("cosh_theta_m1"))
    sq, _, cross = _h_pairs(geo.h, geo.lam, min(m, n))
    braced = np.full(grid.shape, np.nan)
    braced[fg.mask] = geo.B2 - sq - 2 * cross
    curv = np.full(grid.shape, np.nan)
    curv[fg.mask] = _curvature_term(geo.lam, state.space, ricci_form)
    return Eq3Terms(L, disc.laplace_beltrami(L, kin.g, grid), grid.gradient(L), braced, curv,
                    fg.full("B2"), float(np.min(geo.margin)))


@dataclass
class Eq3Result:
    residual: np.ndarray
    max_residual: float
    braced_ok: bool
    curvature_ok: bool
    applicable: bool
    min_braced_gap: float = float("nan")


def eq3_residual(state0, state1, mask=None, tol=1e-12, ricci_form="a", terms=None) -> Eq3Result:
    """Pointwise residual of the ln cosh θ evolution between two consecutive flow states.

    The time derivative is a forward difference made parametric with the
    averaged H₁ transport term; the right-hand side is averaged over both
    states, so the residual is O(h² + dt²) for the exact identity.
    """
    ric_ok, k_ok = curvature_hypotheses(state0.space)
    dt = state1.t - state0.t
    if dt <= 0:
        raise ValueError("states must be strictly ordered in time")
    T0 = terms[0] if terms else eq3_terms(state0, ricci_form)
    T1 = terms[1] if terms else eq3_terms(state1, ricci_form)
    k0, k1 = state0.kinematics(), state1.kinematics()
    transport = 0.5 * (np.sum(T0.grad_L * k0.H1, axis=-1) + np.sum(T1.grad_L * k1.H1, axis=-1))
    dLdt = (T1.L - T0.L) / dt + transport
    rhs0 = T0.lap_L - T0.braced - T0.curvature
    rhs1 = T1.lap_L - T1.braced - T1.curvature
    res = dLdt - 0.5 * (rhs0 + rhs1)
    mask = state0.grid.eval_mask() if mask is None else mask
    sel = mask & np.isfinite(res)
    gap = T0.braced - T0.margin_min * T0.B2
    braced_ok = bool(np.all(gap[sel] >= -tol * np.maximum(1.0, T0.B2[sel])))
    curv_ok = bool(np.all(T0.curvature[sel] >= -tol)) if (ric_ok and k_ok) else False
    return Eq3Result(res, float(np.max(np.abs(res[sel]))) if np.any(sel) else 0.0,
                     braced_ok, curv_ok, bool(ric_ok and k_ok),
                     float(np.min(gap[sel])) if np.any(sel) else 0.0)


# -- differential inequality for ‖B‖² ------------------------------------------------

def eq4_gap_field(state0, state1, terms0=None, terms1=None):
    """d/dt‖B‖² − Δ‖B‖² + (1/n)‖B‖⁴ at every node (parametric time derivative)."""
    n = state0.space.n
    dt = state1.t - state0.t
    B0 = terms0.B2 if terms0 else field_geometry(_jets_of(state0), state0.space).full("B2")
    B1 = terms1.B2 if terms1 else field_geometry(_jets_of(state1), state1.space).full("B2")
    k0, k1 = state0.kinematics(), state1.kinematics()
    grid = state0.grid
    tr = 0.5 * (np.sum(grid.gradient(B0) * k0.H1, axis=-1) + np.sum(grid.gradient(B1) * k1.H1, axis=-1))
    dB = (B1 - B0) / dt + tr

    def rest(B, k):
        return -disc.laplace_beltrami(B, k.g, grid) + B**2 / n

    return dB + 0.5 * (rest(B0, k0) + rest(B1, k1))


# -- run monitor -------------------------------------------------------------------

class Monitor:
    """Accumulates run integrals and produces :class:`DiagnosticsRecord` rows."""

    def __init__(self, initial, config, resume_meta=None, ricci_form="a"):
        self.config = config
        self.ricci_form = ricci_form
        if resume_meta:
            self.accum = dict(resume_meta)
            return
        kin = initial.kinematics()
        vol, vol1 = self._volumes(initial)
        q = self._h_integrals(initial)
        self.accum = {
            "vol0": vol, "vol_sigma1": vol1,
            "int_H2_dvol": 0.0, "int_mean_H2": 0.0, "int_sup_H2": 0.0,
            "last_q": q,
            "prev_max_cosh": None, "prev_volume": None,
            "eq4_running_max": 0.0, "eq4_signed_running_max": -math.inf,
            "margin0": kin.min_margin, "min_margin_all": kin.min_margin, "monotone_all": True,
        }

    @staticmethod
    def _volumes(state):
        kin = state.kinematics()
        return disc.volume(kin.g, state.grid, kin.g1)

    @staticmethod
    def _h_integrals(state):
        kin = state.kinematics()
        w = kin.volume_density() * state.grid.cell_measure
        tot = float(np.sum(kin.normH2 * w))
        vol = float(np.sum(w))
        return [tot, tot / vol, float(np.max(kin.normH2))]

    def accumulate(self, state, new):
        q0 = self.accum["last_q"]
        q1 = self._h_integrals(new)
        dt = new.t - state.t
        self.accum["int_H2_dvol"] += 0.5 * dt * (q0[0] + q1[0])
        self.accum["int_mean_H2"] += 0.5 * dt * (q0[1] + q1[1])
        self.accum["int_sup_H2"] += 0.5 * dt * (q0[2] + q1[2])
        self.accum["last_q"] = q1
        self.accum["min_margin_all"] = min(self.accum.get("min_margin_all", math.inf), new.kinematics().min_margin)

    def record(self, state, nxt, dt) -> DiagnosticsRecord:
        acc = self.accum
        cfg = self.config
        kin = state.kinematics()
        T0 = eq3_terms(state, self.ricci_form)
        fg_cosh_m1 = np.expm1(T0.L)
        vol, vol1 = self._volumes(state)
        max_cosh_m1 = float(np.nanmax(fg_cosh_m1))
        max_cosh = 1.0 + max_cosh_m1
        eq3 = float("nan")
        braced_ok = curv_ok = True
        if nxt is not None and nxt.t > state.t:
            T1 = eq3_terms(nxt, self.ricci_form)
            r3 = eq3_residual(state, nxt, terms=(T0, T1), ricci_form=self.ricci_form)
            eq3 = r3.max_residual
            braced_ok, curv_ok = r3.braced_ok, (r3.curvature_ok or not r3.applicable)
            gap = eq4_gap_field(state, nxt, T0, T1)
            mask = state.grid.eval_mask() & np.isfinite(gap)
            acc["eq4_running_max"] = max(acc["eq4_running_max"], float(np.max(np.abs(gap[mask]))))
            acc["eq4_signed_running_max"] = max(acc["eq4_signed_running_max"], float(np.max(gap[mask])))
        vol0 = acc["vol0"]
        vlaw = abs(vol - vol0 - acc["int_H2_dvol"]) / vol0
        vexp = abs(vol - vol0 * math.exp(acc["int_mean_H2"])) / vol0
        ok = True
        if acc["prev_max_cosh"] is not None:
            ok &= max_cosh <= acc["prev_max_cosh"] + cfg.monotone_slack
            ok &= vol >= acc["prev_volume"] - 1e-12 * vol0
        ok &= vol <= vol1 * (1 + 1e-12)
        acc["prev_max_cosh"], acc["prev_volume"] = max_cosh, vol
        acc["monotone_all"] = bool(acc["monotone_all"] and ok)
        return DiagnosticsRecord(
            t=state.t, dt=dt, max_cosh_theta=max_cosh, min_margin=kin.min_margin,
            sup_H=kin.sup_H, max_B2=float(np.nanmax(T0.B2)), volume=vol,
            volume_law_residual=vlaw, eq3_max_residual=eq3,
            eq4_gap=acc["eq4_running_max"] if nxt is not None else float("nan"),
            monotonicity_ok=bool(ok), max_cosh_minus_1=max_cosh_m1,
            oscillation=state.oscillation(), volume1=vol1, volume_exp_residual=vexp,
            eq4_gap_signed=acc["eq4_signed_running_max"], eq3_braced_ok=braced_ok,
            eq3_curvature_ok=curv_ok, step=state.step)


# -- trajectory-level checks -----------------------------------------------------------

@dataclass
class VolumeLawResult:
    differential_residual: float
    exponential_residual: float
    nondecreasing: bool
    bounded_by_sigma1: bool
    sup_bound_ok: bool
    int_sup_H2: float


def volume_law_check(trajectory, slack=1e-12, bound_tol=1e-6) -> VolumeLawResult:
    recs = trajectory.records
    if len(recs) < 3:
        raise InsufficientDataError("volume law check needs at least 3 monitor records")
    vol = np.array([r.volume for r in recs])
    vol1 = np.array([r.volume1 for r in recs])
    diff = max(r.volume_law_residual for r in recs)
    expo = max(r.volume_exp_residual for r in recs)
    nondec = bool(np.all(np.diff(vol) >= -slack * vol[0]))
    bounded = bool(np.all(vol <= vol1 + bound_tol))
    sup_int = float(trajectory.meta.get("int_sup_H2", float("nan")))
    sup_ok = bool(vol[-1] <= vol[0] * math.exp(sup_int) * (1 + 1e-12)) if math.isfinite(sup_int) else True
    return VolumeLawResult(float(diff), float(expo), nondec, bounded, sup_ok, sup_int)


@dataclass
class DecayFit:
    quantity: str
    rate: float
    window: tuple
    residual: float
    n_points: int
    shortened: bool


def _quantity(rec, name):
    if name == "cosh_theta_minus_1":
        return rec.max_cosh_minus_1
    if name == "norm_B":
        return math.sqrt(max(rec.max_B2, 0.0))
    if name == "sup_H":
        return rec.sup_H
    if name == "oscillation":
        return rec.oscillation
    raise ValueError(f"unknown decay quantity {name!r}")


def decay_fit(trajectory, quantity="cosh_theta_minus_1", lo=1e-10, hi=1e-2, min_points=5) -> DecayFit:
    """Least-squares exponential rate of a monitored quantity over the window q ∈ [lo, hi]."""
    recs = getattr(trajectory, "records", trajectory)
    t = np.array([r.t for r in recs])
    q = np.array([_quantity(r, quantity) for r in recs])
    sel = np.isfinite(q) & (q >= lo) & (q <= hi)
    k = int(np.sum(sel))
    if k < 2:
        return DecayFit(quantity, float("nan"), (float("nan"), float("nan")), float("nan"), k, True)
    tt, lq = t[sel], np.log(q[sel])
    A = np.stack([tt, np.ones_like(tt)], axis=1)
    coef, *_ = np.linalg.lstsq(A, lq, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - lq) ** 2)))
    return DecayFit(quantity, float(-coef[0]), (float(tt[0]), float(tt[-1])), resid, k, k < min_points)


# -- static identities -------------------------------------------------------------------

@dataclass
class IdentityResult:
    residual: np.ndarray
    max_residual: float
    applicable: bool = True
    note: str = ""


def eq1_residual(jets: JetField, space: ProductSpace, grid: Grid, mask=None, tol_H=1e-6) -> IdentityResult:
    """Δ_g cosh θ against cosh θ · {…} for a maximal state (analytic or stencil jets).

    The Laplacian is the discrete divergence-form operator applied to the
    cosh θ field; everything else is pointwise.
    """
    fg = field_geometry(jets, space)
    geo = fg.geo
    mask = (grid.eval_mask() if mask is None else mask) & fg.mask
    supH = float(np.max(geo.normH[mask[fg.mask]])) if np.any(mask) else 0.0
    m, n = space.m, space.n
    sq, diag, cross = _h_pairs(geo.h, geo.lam, min(m, n))
    del sq
    lam = geo.lam
    one = 1 - lam**2
    bracket = geo.B2 + 2 * diag - 2 * cross + space.sigma1.ricci_constant * np.sum(lam**2 / one, axis=-1)
    if m >= 2 and n >= 2:
        dK = space.K1 - space.K2
        for i in range(m):
            for j in range(m):
                if i != j:
                    bracket = bracket + lam[..., i] ** 2 * lam[..., j] ** 2 / (one[..., i] * one[..., j]) * dK
    rhs = np.full(grid.shape, np.nan)
    rhs[fg.mask] = geo.cosh_theta * bracket
    cosh = fg.full("cosh_theta")
    g = np.full(grid.shape + (m, m), np.nan)
    g[fg.mask] = geo.g
    with np.errstate(invalid="ignore"):
        lap = disc.laplace_beltrami(cosh, g, grid)
    res = np.abs(lap - rhs)
    sel = mask & np.isfinite(res)
    applicable = supH < tol_H
    note = "" if applicable else f"sup|H| = {supH:.3e} >= {tol_H:g}: identity needs parallel mean curvature"
    return IdentityResult(res, float(np.max(res[sel])) if np.any(sel) else 0.0, applicable, note)


def calabi_residual(field, space: ProductSpace, mask=None) -> IdentityResult:
    """Divergence-form maximal-graph operator Σᵢ ∂ᵢ( fᵢ / sqrt(1 − |Df|²) ) for n = 1, flat factors."""
    if field.n != 1 or not (space.sigma1.is_flat and space.sigma2.is_flat):
        return IdentityResult(np.zeros(field.grid.shape), float("nan"), False,
                              "needs codimension one and flat factors")
    grid = field.grid
    ue = grid.extend(field.values[..., 0])
    grad = np.stack([grid.d1(ue, i) + field.winding[0, i] for i in range(grid.dim)], axis=-1)
    scale = space.sigma2.metric(np.zeros(1))[0, 0] / space.rho
    with np.errstate(invalid="ignore"):
        wgt = 1.0 / np.sqrt(1.0 - scale * np.sum(grad**2, axis=-1))
        div = sum(grid.d1(grad[..., i] * wgt, i) for i in range(grid.dim))
    res = np.abs(grid.crop(div))
    sel = np.isfinite(res) if mask is None else (mask & np.isfinite(res))
    return IdentityResult(res, float(np.max(res[sel])) if np.any(sel) else float("nan"))


@dataclass
class HeinzChernResult:
    lhs: float
    rhs: float
    holds: bool
    applicable: bool = True
    note: str = ""


def heinz_chern_check(jets: JetField, space: ProductSpace, grid: Grid, radius: float,
                      center=None, mask=None) -> HeinzChernResult:
    """m·min‖H‖ ≤ sup cosh θ · m / r over a Euclidean ball, with ‖H‖ the normalised mean curvature.

    With H the trace, m·‖H/m‖ is the trace norm, which is what is compared.
    """
    if not space.sigma1.is_flat:
        return HeinzChernResult(float("nan"), float("nan"), False, False,
                                "Cheeger constant only available for flat Σ₁")
    X = jets.x
    c = np.zeros(space.m) if center is None else np.asarray(center, dtype=float)
    ball = np.sum((X - c) ** 2, axis=-1) <= radius**2 * (1 + 1e-12)
    if mask is not None:
        ball &= mask
    fg = field_geometry(jets, space, ball)
    lhs = float(np.min(fg.geo.normH))
    rhs = float(np.max(fg.geo.cosh_theta)) * space.m / radius
    return HeinzChernResult(lhs, rhs, bool(lhs <= rhs))


def heinz_chern_pointwise(geo, m, radius):
    """Same inequality for a batch of sampled ball nodes given as a PointGeometry."""
    lhs = float(np.min(geo.normH))
    rhs = float(np.max(geo.cosh_theta)) * m / radius
    return HeinzChernResult(lhs, rhs, bool(lhs <= rhs))


# -- Simons identity in flat ambient space ----------------------------------------------

@dataclass
class SimonsTerms:
    lap_B2: np.ndarray
    grad_B2: np.ndarray
    hH: np.ndarray
    cubic: np.ndarray
    commutator: np.ndarray
    quartic: np.ndarray
    residual: np.ndarray


def _graph_second_form(df, d2f):
    """Coordinate second fundamental form b^β_ij = G^{βγ} ∂ᵢⱼ f^γ in flat factors with unit metrics."""
    G = np.eye(df.shape[-2]) - df @ np.swapaxes(df, -1, -2)
    Ginv = np.linalg.inv(G)
    return np.einsum("...bc,...cij->...bij", Ginv, d2f), G, Ginv


def _orthonormalize(b_tensor, g, G, n_tan_axes):
    """Components in g-orthonormal tangent and G-orthonormal normal frames."""
    Lg = np.linalg.cholesky(g)
    E = np.swapaxes(np.linalg.inv(Lg), -1, -2)
    LG = np.linalg.cholesky(G)
    out = np.einsum("...ab,...b" + "ijk"[:n_tan_axes] + "->...a" + "ijk"[:n_tan_axes],
                    np.swapaxes(LG, -1, -2), b_tensor)
    letters = "ijk"[:n_tan_axes]
    for ax, l in enumerate(letters):
        src = "".join(("p" if q == l else q) for q in letters)
        out = np.einsum(f"...a{src},...p{l}->...a{letters}", out, E)
    return out


def simons_flat_residual(jets: JetField, space: ProductSpace, grid: Grid, mask=None) -> IdentityResult:
    """Residual of the flat-ambient Simons identity for ‖B‖² on a graph.

    Needs Euclidean factors with unit metrics (ρ = 1). ∇B is built from
    analytic third derivatives when ``jets`` carries ``d3f``, otherwise from
    stencils of the second fundamental form. Δ‖B‖² and the derivatives of H
    always use grid stencils.
    """
    if not (space.sigma1.is_flat and space.sigma2.is_flat):
        return IdentityResult(np.zeros(grid.shape), float("nan"), False, "curved ambient not supported")
    if space.rho != 1.0:
        return IdentityResult(np.zeros(grid.shape), float("nan"), False, "needs unit flat metrics")
    m, n = space.m, space.n
    sel = jets.valid.copy()
    d3f = getattr(jets, "d3f", None)
    if d3f is not None:
        sel &= np.all(np.isfinite(d3f), axis=(-1, -2, -3, -4))

    def scatter(a):
        out = np.full(grid.shape + a.shape[1:], np.nan)
        out[sel] = a
        return out

    df, d2f = jets.df[sel], jets.d2f[sel]
    g = np.eye(m) - np.swapaxes(df, -1, -2) @ df
    ginv = np.linalg.inv(g)
    b, G, Ginv = _graph_second_form(df, d2f)
    # Christoffels of g: Γ^l_ki = −g^{lp} Σ_β f^β_p f^β_ki
    Gam = -np.einsum("...lp,...bp,...bki->...lki", ginv, df, d2f)
    # normal connection ω^β_{kγ} = −G^{βδ} Σ_i f^γ_ki f^δ_i
    omega = -np.einsum("...bd,...cki,...di->...bkc", Ginv, d2f, df)
    if d3f is not None:
        dG = -(np.einsum("...bik,...ci->...bck", d2f, df) + np.einsum("...bi,...cik->...bck", df, d2f))
        dGinv = -np.einsum("...ab,...bck,...cd->...adk", Ginv, dG, Ginv)
        db = (np.einsum("...adk,...dij->...aijk", dGinv, d2f)
              + np.einsum("...ad,...dijk->...aijk", Ginv, d3f[sel]))
    else:
        bf = scatter(b)
        db = np.stack([grid.gradient(bf[..., a, i, j]) for a in range(n) for i in range(m) for j in range(m)],
                      axis=-2).reshape(grid.shape + b.shape[1:] + (m,))[sel]
    nablaB = (db + np.einsum("...bkc,...cij->...bijk", omega, b)
              - np.einsum("...lki,...blj->...bijk", Gam, b)
              - np.einsum("...lkj,...bil->...bijk", Gam, b))
    h = _orthonormalize(b, g, G, 2)
    hk = _orthonormalize(nablaB, g, G, 3)
    B2 = np.sum(h**2, axis=(-1, -2, -3))
    grad2 = np.sum(hk**2, axis=(-1, -2, -3, -4))
    Hc = np.einsum("...ij,...bij->...b", ginv, b)
    hH = np.zeros(B2.shape)
    if np.max(np.abs(Hc)) > 1e-12:
        # covariant Hessian of the normal section H, outer derivatives by stencils
        Hf = scatter(Hc)
        dH = np.stack([grid.gradient(Hf[..., a]) for a in range(n)], axis=-2)[sel]
        nabH = dH + np.einsum("...bkc,...c->...bk", omega, Hc)
        nf = scatter(nabH)
        dnabH = np.stack([grid.gradient(nf[..., a, k]) for a in range(n) for k in range(m)],
                         axis=-2).reshape(grid.shape + (n, m, m))[sel]
        hessH = (dnabH + np.einsum("...bjc,...ck->...bkj", omega, nabH)
                 - np.einsum("...lkj,...bl->...bkj", Gam, nabH))
        hessH = 0.5 * (hessH + np.swapaxes(hessH, -1, -2))
        hH = np.sum(h * _orthonormalize(hessH, g, G, 2), axis=(-1, -2, -3))
    Hon = np.einsum("...aii->...a", h)
    cubic = np.einsum("...aij,...ajk,...bki,...b->...", h, h, h, Hon)
    comm = np.einsum("...aik,...bjk->...abij", h, h)
    comm = comm - np.swapaxes(comm, -3, -4)
    commutator = np.sum(comm**2, axis=(-1, -2, -3, -4))
    quartic = np.sum(np.einsum("...aij,...bij->...ab", h, h) ** 2, axis=(-1, -2))
    with np.errstate(invalid="ignore"):
        lap = disc.laplace_beltrami(scatter(B2), scatter(g), grid)
    rhs = scatter(2 * grad2 + 2 * hH - 2 * cubic + 2 * commutator + 2 * quartic)
    res = lap - rhs
    ok = (grid.eval_mask() if mask is None else mask) & np.isfinite(res)
    out = IdentityResult(np.abs(res), float(np.max(np.abs(res[ok]))) if np.any(ok) else float("nan"))
    out.terms = SimonsTerms(lap, scatter(grad2), scatter(hH), scatter(cubic), scatter(commutator),
                            scatter(quartic), res)
    return out
