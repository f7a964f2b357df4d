"""Nonparametric mean curvature flow of spacelike graphs.

The graph x ↦ (x, f(x, t)) moves with velocity (0, v) where

    v^γ = g^{ij} (∂ᵢⱼ f^γ − Γ₁^k_ij ∂_k f^γ + Γ₂^γ_ab ∂ᵢ f^a ∂ⱼ f^b).

This equals H − dF(H₁), H₁ being the Σ₁ component of the mean curvature
vector, so the normal speed is exactly H. Everything needed cheaply at every
step (velocity, H₁, ‖H‖², volume density, margin) comes out of one pass over
the jets, collected in :class:`Kinematics`.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from . import discretization as disc
from .discretization import Grid, MapField
from .errors import (CheckpointFormatError, CheckpointVersionError, NotSpacelikeError,
                     NumericFailure, SpacelikeGuardError)
from .factors import FactorManifold, ProductSpace

TERMINATIONS = ("slice-converged", "maximal-converged", "t_max-reached",
                "spacelike-guard", "numeric-failure")


@dataclass(frozen=True)
class FlowConfig:
    cfl: float = 0.2
    t_max: float = 10.0
    tol_H: float = 1e-8
    tol_osc: float = 1e-8
    guard_margin: float = 1e-6
    monitor_stride: int = 100
    checkpoint_stride: int = 0
    max_retries: int = 8
    polar_filter: bool = True
    max_steps: int | None = None
    snapshot_stride: int | None = None
    monotone_slack: float = 1e-9
    margin_slack: float | None = None

    def __post_init__(self):
        if not (0 < self.cfl <= 1):
            raise ValueError("cfl must lie in (0, 1]")
        for name in ("t_max", "tol_H", "tol_osc", "guard_margin"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.monitor_stride < 1:
            raise ValueError("monitor_stride must be >= 1")
        if self.checkpoint_stride < 0:
            raise ValueError("checkpoint_stride must be >= 0")


@dataclass
class GraphState:
    """A map Σ₁ → Σ₂ on a grid at time ``t`` after ``step`` steps."""

    field: MapField
    space: ProductSpace
    t: float = 0.0
    step: int = 0
    _kin: object = field(default=None, repr=False, compare=False)

    @property
    def grid(self) -> Grid:
        return self.field.grid

    def with_values(self, values, t=None, step=None):
        f = MapField(self.grid, values, self.field.winding)
        return GraphState(f, self.space, self.t if t is None else t,
                          self.step if step is None else step)

    def kinematics(self):
        if self._kin is None:
            self._kin = kinematics(self.field, self.space)
        return self._kin

    def jets(self):
        return self.kinematics().jets

    def oscillation(self) -> float:
        full = self.field.full_values()
        return float(np.max(np.max(full, axis=tuple(range(self.grid.dim)))
                            - np.min(full, axis=tuple(range(self.grid.dim)))))


@dataclass
class Kinematics:
    jets: disc.JetField
    g: np.ndarray
    ginv: np.ndarray
    detg: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    margin: np.ndarray
    velocity: np.ndarray
    H1: np.ndarray
    normH2: np.ndarray

    @property
    def min_margin(self) -> float:
        return float(np.min(self.margin))

    @property
    def sup_H(self) -> float:
        return float(np.sqrt(np.max(self.normH2)))

    def volume_density(self):
        return np.sqrt(self.detg)


def _margin(S, g1):
    """1 − λ₁² with closed forms for m ≤ 2."""
    m = S.shape[-1]
    if m == 1:
        return 1.0 - S[..., 0, 0] / g1[..., 0, 0]
    if m == 2:
        M = disc.inv_small(g1) @ S
        tr = M[..., 0, 0] + M[..., 1, 1]
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        disc_ = np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
        return 1.0 - (0.5 * tr + disc_)
    from .immersion import _eigen_singular_values

    return _eigen_singular_values(S, g1)[1]


def _cols(a, k):
    """Move the last ``k`` (component) axes to the front as a view."""
    return np.moveaxis(a, tuple(range(a.ndim - k, a.ndim)), tuple(range(k)))


def _mat(c):
    """Stacked-matrix view of a components-first array."""
    return np.moveaxis(c, (0, 1), (-2, -1))


def kinematics(field: MapField, space: ProductSpace) -> Kinematics:
    # The index contractions run over m, n <= 3, so they are written as sums of
    # node arrays; batched matmul on 2x2 blocks is several times slower.
    J = disc.jets(field)
    s1, s2 = space.sigma1, space.sigma2
    n, m = J.df.shape[-2:]
    shape = J.df.shape[:-2]
    g1 = s1.metric(J.x)
    g2 = space.metric2(J.y)
    df, d2f = _cols(J.df, 2), _cols(J.d2f, 3)
    G1, G2 = _cols(g1, 2), _cols(g2, 2)
    g2df = np.empty((n, m) + shape)
    for a in range(n):
        for j in range(m):
            g2df[a, j] = sum(G2[a, b] * df[b, j] for b in range(n))
    gC = np.empty((m, m) + shape)
    SC = np.empty((m, m) + shape)
    for i in range(m):
        for j in range(i, m):
            SC[i, j] = sum(df[a, i] * g2df[a, j] for a in range(n))
            gC[i, j] = G1[i, j] - SC[i, j]
            if j != i:
                SC[j, i] = SC[i, j]
                gC[j, i] = gC[i, j]
    g, S = _mat(gC), _mat(SC)
    detg = disc.det_small(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ginv = disc.inv_small(g)
    margin = _margin(S, g1)
    gi = _cols(ginv, 2)

    def trace(T):
        return sum(gi[i, j] * T[i, j] for i in range(m) for j in range(m))

    # v^a = g^ij (∂²_ij f^a − Γ₁^k_ij ∂_k f^a + Γ₂^a_cb ∂_i f^c ∂_j f^b)
    v = np.empty((n,) + shape)
    for a in range(n):
        v[a] = trace(d2f[a])
    if not s1.is_flat:
        gam1 = _cols(s1.christoffel(J.x), 3)
        t1 = [trace(gam1[k]) for k in range(m)]
        for a in range(n):
            v[a] -= sum(t1[k] * df[a, k] for k in range(m))
    if not s2.is_flat:
        gam2 = _cols(s2.christoffel(J.y), 3)
        q = [[None] * n for _ in range(n)]
        for c in range(n):
            for b in range(c, n):
                q[c][b] = q[b][c] = sum(df[c, i] * gi[i, j] * df[b, j] for i in range(m) for j in range(m))
        for a in range(n):
            v[a] += sum(gam2[a, c, b] * q[c][b] for c in range(n) for b in range(n))
    g2v = [sum(G2[a, b] * v[b] for b in range(n)) for a in range(n)]
    w = [sum(df[a, j] * g2v[a] for a in range(n)) for j in range(m)]
    H1 = np.empty((m,) + shape)
    for i in range(m):
        H1[i] = sum(gi[i, j] * w[j] for j in range(m))
    # ‖H‖² in the Riemannian metric that flips the normal sign: |τ₂|²_{g₂} − |τ₁|²_{g₁}
    tau2 = [v[a] + sum(df[a, i] * H1[i] for i in range(m)) for a in range(n)]
    normH2 = (sum(tau2[a] * G2[a, b] * tau2[b] for a in range(n) for b in range(n))
              - sum(H1[i] * G1[i, j] * H1[j] for i in range(m) for j in range(m)))
    normH2 = np.maximum(normH2, 0.0)
    return Kinematics(J, g, ginv, detg, g1, g2, margin, np.moveaxis(v, 0, -1), np.moveaxis(H1, 0, -1), normH2)


def tension_velocity(state: GraphState, guard: float = 0.0) -> np.ndarray:
    """∂f/∂t of the graph flow at every node, shape grid.shape + (n,)."""
    kin = state.kinematics()
    if kin.min_margin < guard or not np.all(kin.margin > 0):
        raise SpacelikeGuardError(f"margin {kin.min_margin:.3e} below guard {guard:g}",
                                  kin.min_margin, state.t)
    return kin.velocity


# -- gauge certificate ------------------------------------------------------------

def _coordinate_normals(df, g1, g2):
    """Normal basis n_β = (g₁⁻¹ dfᵀ g₂ ε_β, ε_β) and G_βγ = −ḡ(n_β, n_γ)."""
    top = disc.inv_small(g1) @ np.swapaxes(df, -1, -2) @ g2
    G = g2 - g2 @ df @ top
    return top, G


def product_norm2(D1, D2, kin: Kinematics):
    """Squared ĝ-norm of product vectors (D1, D2) at the graph points."""
    df, g1, g2 = kin.jets.df, kin.g1, kin.g2
    # tangential coefficients c = g⁻¹ ḡ(D, ∂F)
    gD = np.einsum("...ij,...j->...i", g1, D1) - np.einsum("...ai,...ab,...b->...i", df, g2, D2)
    c = np.einsum("...ij,...j->...i", kin.ginv, gD)
    top, G = _coordinate_normals(df, g1, g2)
    w = np.einsum("...i,...ij,...jb->...b", D1, g1, top) - np.einsum("...a,...ab->...b", D2, g2)
    tan2 = np.einsum("...i,...i->...", c, gD)
    nor2 = np.einsum("...a,...ab,...b->...", w, disc.inv_small(G) if G.shape[-1] <= 2 else np.linalg.inv(G), w)
    return tan2 + nor2


def mean_curvature_lb(state: GraphState):
    """H computed as Δ_g F plus the ambient Christoffel term, with the divergence-form operator.

    Returns the Σ₁ and Σ₂ components at every node.
    """
    grid = state.grid
    kin = state.kinematics()
    space = state.space
    m, n = grid.dim, state.field.n
    we_shape = grid.extend(np.zeros(grid.shape)).shape
    H1 = np.empty(grid.shape + (m,))
    for p in range(m):
        grad = np.zeros(we_shape + (m,))
        grad[..., p] = 1.0
        H1[..., p] = disc.laplace_beltrami_of_gradient(grad, kin.g, grid)
    ue = grid.extend(state.field.values)
    H2 = np.empty(grid.shape + (n,))
    W = state.field.winding
    for a in range(n):
        grad = np.stack([grid.d1(ue[..., a], i) + W[a, i] for i in range(m)], axis=-1)
        H2[..., a] = disc.laplace_beltrami_of_gradient(grad, kin.g, grid)
    J = kin.jets
    if not space.sigma1.is_flat:
        H1 += np.einsum("...ij,...pij->...p", kin.ginv, space.sigma1.christoffel(J.x))
    if not space.sigma2.is_flat:
        H2 += np.einsum("...ij,...cab,...ai,...bj->...c", kin.ginv, space.sigma2.christoffel(J.y), J.df, J.df)
    return H1, H2


def normal_velocity_check(state: GraphState, mask=None) -> float:
    """Max-node ĝ-norm of (normal part of (0, v)) − Δ_g F."""
    kin = state.kinematics()
    if not np.all(kin.margin > 0):
        raise NotSpacelikeError("normal velocity check needs a spacelike state")
    df, g1, g2 = kin.jets.df, kin.g1, kin.g2
    top, G = _coordinate_normals(df, g1, g2)
    g2v = np.einsum("...ab,...b->...a", g2, kin.velocity)
    d = np.linalg.solve(G, g2v[..., None])[..., 0]
    P1 = np.einsum("...ib,...b->...i", top, d)
    P2 = d
    L1, L2 = mean_curvature_lb(state)
    r2 = product_norm2(P1 - L1, P2 - L2, kin)
    mask = state.grid.eval_mask() if mask is None else mask
    return float(np.sqrt(np.max(np.maximum(r2[mask], 0.0))))


# -- time stepping ------------------------------------------------------------------------

def _axis_scale(grid: Grid, use_filter: bool):
    """Per-node, per-axis factor d_i / h_i used by the stability bound."""
    m = grid.dim
    d = np.ones(grid.shape + (m,))
    if grid.topology == "lat-long-sphere" and use_filter:
        th = grid.axis_coords(0)
        s = np.minimum(1.0, np.sin(th) * grid.spacing[1] / grid.spacing[0])
        d[..., 1] = s[:, None]
    return d / np.asarray(grid.spacing)


def adaptive_dt(state: GraphState, config: FlowConfig, cap=True) -> float:
    """cfl · h_min² / (2m · max λ(scaled g⁻¹)), clipped to the time left before t_max."""
    grid = state.grid
    kin = state.kinematics()
    sc = _axis_scale(grid, config.polar_filter) * grid.h_min
    M = sc[..., :, None] * kin.ginv * sc[..., None, :]
    if grid.dim == 1:
        lam = M[..., 0, 0]
    elif grid.dim == 2:
        tr = M[..., 0, 0] + M[..., 1, 1]
        det = M[..., 0, 0] * M[..., 1, 1] - M[..., 0, 1] * M[..., 1, 0]
        lam = 0.5 * tr + np.sqrt(np.maximum(0.25 * tr * tr - det, 0.0))
    else:
        lam = np.linalg.eigvalsh(M)[..., -1]
    lmax = float(np.max(lam))
    if not (lmax > 0 and math.isfinite(lmax)):
        raise NumericFailure("inverse metric is not finite")
    dt = config.cfl * grid.h_min**2 / (2 * grid.dim * lmax)
    if cap:
        dt = min(dt, max(config.t_max - state.t, 0.0))
    return dt


_FILTERS = {}


def _polar_weights(grid: Grid):
    """Per-row, per-longitudinal-mode factors ≤ 1 for the velocity spectrum.

    Mode k in a row at colatitude θ is stiffer than the meridional modes by
    (sin(kΔφ/2) / s)², s = sin θ·Δφ/Δθ. Multiplying it by the inverse ratio
    caps its decay rate at the meridional one, so dt can follow Δθ. Scaling
    rather than truncating keeps every mode moving: the filtered scheme has
    the same fixed points as the unfiltered one.
    """
    key = (grid.shape, grid.spacing)
    if key not in _FILTERS:
        n_lon = grid.shape[1]
        k = np.arange(n_lon // 2 + 1)
        th = grid.axis_coords(0)
        s = (np.sin(th) * grid.spacing[1] / grid.spacing[0])[:, None]
        stiff = np.abs(np.sin(0.5 * k * grid.spacing[1]))[None, :]
        with np.errstate(divide="ignore"):
            w = np.where(stiff <= s, 1.0, (s / np.where(stiff > 0, stiff, 1.0)) ** 2)
        _FILTERS[key] = w
    return _FILTERS[key]


def polar_filter(v: np.ndarray, grid: Grid) -> np.ndarray:
    """Slow down longitudinal modes too fast for the polar rows' stability limit."""
    if grid.topology != "lat-long-sphere":
        return v
    w = _polar_weights(grid)
    rows = ~np.all(w == 1.0, axis=1)
    if not np.any(rows):
        return v
    out = v.copy()
    coef = np.fft.rfft(v[rows], axis=1)
    coef *= w[rows][..., None]
    out[rows] = np.fft.irfft(coef, n=grid.shape[1], axis=1)
    return out


def _stage_velocity(state: GraphState, config: FlowConfig):
    kin = state.kinematics()
    if not np.all(kin.margin > 0):
        raise SpacelikeGuardError("intermediate stage is not spacelike", kin.min_margin, state.t)
    v = kin.velocity
    if config.polar_filter:
        v = polar_filter(v, state.grid)
    return v


def step(state: GraphState, dt: float, config: FlowConfig | None = None) -> GraphState:
    """One midpoint Runge–Kutta step with margin-guarded step rejection."""
    config = config or FlowConfig()
    f0 = state.field.values
    attempt_dt = dt
    last_margin = None
    for _ in range(config.max_retries + 1):
        try:
            k1 = _stage_velocity(state, config)
            mid = state.with_values(f0 + 0.5 * attempt_dt * k1)
            k2 = _stage_velocity(mid, config)
            vals = f0 + attempt_dt * k2
            if not np.all(np.isfinite(vals)):
                raise NumericFailure(f"non-finite values after step at t={state.t:.6g}")
            new = state.with_values(vals, state.t + attempt_dt, state.step + 1)
            mg = new.kinematics().min_margin
        except SpacelikeGuardError as exc:
            last_margin = exc.min_margin
        else:
            if not math.isfinite(mg):
                raise NumericFailure(f"non-finite margin after step at t={state.t:.6g}")
            if mg >= config.guard_margin:
                return new
            last_margin = mg
        attempt_dt *= 0.5
    raise SpacelikeGuardError(
        f"margin {last_margin:.3e} below guard {config.guard_margin:g} after "
        f"{config.max_retries} step halvings at t={state.t:.6g}", last_margin, state.t)


@dataclass
class FlowTrajectory:
    snapshots: list
    records: list
    termination: str | None = None
    message: str = ""
    final: GraphState | None = None
    meta: dict = field(default_factory=dict)

    @property
    def times(self):
        return np.array([r.t for r in self.records])

    def series(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)


def classify(state: GraphState, config: FlowConfig):
    if state.oscillation() < config.tol_osc:
        return "slice-converged"
    kin = state.kinematics()
    if kin.sup_H < config.tol_H:
        return "maximal-converged"
    if state.t >= config.t_max - 1e-15 * max(1.0, config.t_max):
        return "t_max-reached"
    if config.max_steps is not None and state.step >= config.max_steps:
        return "t_max-reached"
    return None


def run(initial: GraphState, config: FlowConfig, monitor=None, checkpoint=None,
        resume_meta=None, on_record=None) -> FlowTrajectory:
    """Integrate until a termination condition and collect diagnostics.

    ``monitor`` builds a record from ``(state, next_state or None, dt, accum)``;
    it defaults to :class:`graphflow.diagnostics.Monitor`. ``checkpoint`` is
    an optional ``(path, every)`` pair. ``resume_meta`` restores the run
    accumulators saved in a checkpoint.
    """
    from .diagnostics import Monitor

    kin0 = initial.kinematics()
    if not np.all(kin0.margin > config.guard_margin):
        raise NotSpacelikeError(
            f"initial state margin {kin0.min_margin:.3e} is not above the guard {config.guard_margin:g}")
    mon = monitor or Monitor(initial, config, resume_meta)
    traj = FlowTrajectory([], [], meta=mon.accum)
    snap_stride = config.snapshot_stride or config.monitor_stride
    state = initial

    def emit(rec):
        traj.records.append(rec)
        if on_record is not None:
            on_record(rec)

    while True:
        term = classify(state, config)
        monitored = state.step % config.monitor_stride == 0 or term is not None
        if state.step % snap_stride == 0 or term is not None:
            traj.snapshots.append((state.t, state.field.values.copy()))
        if term is not None:
            trial, dt_trial = None, adaptive_dt(state, config, cap=False)
            try:
                trial = step(state, dt_trial, config)
            except (SpacelikeGuardError, NumericFailure):
                trial = None
            emit(mon.record(state, trial, dt_trial if trial is not None else 0.0))
            traj.termination = term
            break
        try:
            dt = adaptive_dt(state, config)
            new = step(state, dt, config)
        except SpacelikeGuardError as exc:
            emit(mon.record(state, None, 0.0))
            traj.termination, traj.message = "spacelike-guard", str(exc)
            break
        except (NumericFailure, FloatingPointError, np.linalg.LinAlgError) as exc:
            emit(mon.record(state, None, 0.0))
            traj.termination, traj.message = "numeric-failure", str(exc)
            break
        if monitored:
            emit(mon.record(state, new, new.t - state.t))
        mon.accumulate(state, new)
        state = new
        if checkpoint is not None and checkpoint[1] and state.step % checkpoint[1] == 0:
            checkpoint_save(state, checkpoint[0], meta=mon.accum)
    traj.final = state
    return traj


# -- checkpoints ---------------------------------------------------------------------------

MAGIC = b"GFLOWCK\x00"
VERSION = 1
_HEADER = struct.Struct("<8sI4x")


def _manifold_desc(s: FactorManifold):
    return {"kind": s.kind, "dim": s.dim, "scale": repr(s.scale),
            "domain": [list(map(repr, d)) for d in s.domain] if s.domain else None}


def _manifold_from(d):
    dom = tuple((float(a), float(b)) for a, b in d["domain"]) if d["domain"] else None
    return FactorManifold(d["kind"], int(d["dim"]), float(d["scale"]), dom)


def _encode(obj):
    if isinstance(obj, float):
        return {"__f": repr(obj)}
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if isinstance(obj, np.floating):
        return {"__f": repr(float(obj))}
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _decode(obj):
    if isinstance(obj, dict):
        if set(obj) == {"__f"}:
            return float(obj["__f"])
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def checkpoint_save(state: GraphState, path, meta=None):
    """Write the state as header, descriptor JSON, float64 payload and CRC32 trailer."""
    desc = {
        "grid": _encode(state.grid.descriptor()),
        "sigma1": _manifold_desc(state.space.sigma1),
        "sigma2": _manifold_desc(state.space.sigma2),
        "rho": repr(float(state.space.rho)),
        "winding": _encode(state.field.winding.tolist()),
        "shape": list(state.field.values.shape),
        "meta": _encode(meta or {}),
    }
    blob = json.dumps(desc, sort_keys=True).encode("utf-8")
    payload = np.ascontiguousarray(state.field.values, dtype="<f8").tobytes()
    body = (_HEADER.pack(MAGIC, VERSION) + struct.pack("<dQI", state.t, state.step, len(blob))
            + blob + payload)
    with open(path, "wb") as fh:
        fh.write(body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF))


def checkpoint_load(path, with_meta=False):
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size + 24:
        raise CheckpointFormatError("checkpoint file is truncated")
    magic, version = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise CheckpointFormatError("not a graphflow checkpoint (bad magic)")
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version} is not supported (expected {VERSION})")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise CheckpointFormatError("checkpoint CRC mismatch (corrupt or truncated payload)")
    off = _HEADER.size
    t, stepno, nblob = struct.unpack_from("<dQI", body, off)
    off += 20
    try:
        desc = json.loads(body[off:off + nblob].decode("utf-8"))
        off += nblob
        shape = tuple(desc["shape"])
        count = int(np.prod(shape))
        if len(body) - off != 8 * count:
            raise CheckpointFormatError("payload size does not match the descriptor")
        values = np.frombuffer(body, dtype="<f8", count=count, offset=off).reshape(shape).astype(float)
        grid = Grid.from_descriptor(_decode(desc["grid"]))
        space = ProductSpace(_manifold_from(desc["sigma1"]), _manifold_from(desc["sigma2"]),
                             float(desc["rho"]))
        winding = np.array(_decode(desc["winding"]), dtype=float).reshape(shape[-1], grid.dim)
    except CheckpointFormatError:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CheckpointFormatError(f"malformed checkpoint descriptor: {exc}") from exc
    state = GraphState(MapField(grid, values, winding), space, t, int(stepno))
    if with_meta:
        return state, _decode(desc["meta"])
    return state
