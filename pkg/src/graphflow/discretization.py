"""Structured grids on the Σ₁ charts, centered stencils, jets, Laplace–Beltrami.

Three topologies are supported:

``periodic-box``
    nodes ``lower + k*h`` on ``[0, L)^m``; indices wrap.
``lat-long-sphere``
    cell-centred colatitudes ``(j + 1/2) * pi / N_lat`` and longitudes
    ``k * 2*pi / N_lon``; poles are never nodes. Stencils that cross a pole
    read ghost rows taken from the mirrored row shifted by pi in longitude.
``bounded-chart``
    nodes on a closed box; any stencil that leaves the box yields NaN, so
    only nodes with full interior stencils carry values.

Sphere ghost rows are expressed in the continued chart (θ', φ) with θ' < 0;
component-valued fields therefore need a parity (±1 per component) when they
are mirrored, and the signed volume weight is negative there.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, NotSpacelikeError

TOPOLOGIES = ("periodic-box", "lat-long-sphere", "bounded-chart")
_COORDS = {}


@dataclass(frozen=True)
class Grid:
    topology: str
    shape: tuple
    lower: tuple
    spacing: tuple
    order: int = 2
    polar_band: float = 0.0

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(f"unknown topology {self.topology!r}")
        if self.order not in (2, 4):
            raise ValueError("stencil order must be 2 or 4")
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "spacing", tuple(float(v) for v in self.spacing))
        if not (len(self.shape) == len(self.lower) == len(self.spacing)):
            raise ValueError("shape, lower and spacing must have one entry per axis")
        if self.topology == "lat-long-sphere":
            if len(self.shape) != 2 or self.shape[1] % 2:
                raise ValueError("sphere grids are (n_lat, n_lon) with an even n_lon")

    # -- constructors -----------------------------------------------------
    @classmethod
    def periodic(cls, n, period=2 * math.pi, dim=None, order=2):
        n = (n,) * (dim or 1) if np.isscalar(n) else tuple(n)
        return cls("periodic-box", n, (0.0,) * len(n), tuple(period / k for k in n), order)

    @classmethod
    def sphere(cls, n_lat, n_lon=None, order=2, polar_band=0.0):
        n_lon = 2 * n_lat if n_lon is None else n_lon
        dth = math.pi / n_lat
        return cls("lat-long-sphere", (n_lat, n_lon), (0.5 * dth, 0.0),
                   (dth, 2 * math.pi / n_lon), order, polar_band)

    @classmethod
    def box(cls, lower, upper, n, order=2):
        lower = tuple(float(v) for v in np.atleast_1d(lower))
        upper = tuple(float(v) for v in np.atleast_1d(upper))
        n = (int(n),) * len(lower) if np.isscalar(n) else tuple(n)
        h = tuple((hi - lo) / (k - 1) for lo, hi, k in zip(lower, upper, n))
        return cls("bounded-chart", n, lower, h, order)

    def refined(self, factor=2):
        """Same domain with spacing divided by ``factor``."""
        if self.topology == "bounded-chart":
            upper = [lo + h * (k - 1) for lo, h, k in zip(self.lower, self.spacing, self.shape)]
            return Grid.box(self.lower, upper, [factor * (k - 1) + 1 for k in self.shape], self.order)
        if self.topology == "lat-long-sphere":
            return Grid.sphere(self.shape[0] * factor, self.shape[1] * factor, self.order, self.polar_band)
        periods = [h * k for h, k in zip(self.spacing, self.shape)]
        return Grid("periodic-box", [k * factor for k in self.shape], self.lower,
                    [p / (k * factor) for p, k in zip(periods, self.shape)], self.order)

    # -- geometry of the node set --------------------------------------------
    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def reach(self) -> int:
        return self.order // 2

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def periods(self):
        if self.topology != "periodic-box":
            return None
        return tuple(h * k for h, k in zip(self.spacing, self.shape))

    def axis_coords(self, axis):
        return self.lower[axis] + self.spacing[axis] * np.arange(self.shape[axis])

    def cached_coords(self) -> np.ndarray:
        """Node coordinates shared between calls; treat as read-only."""
        c = _COORDS.get(self)
        if c is None:
            c = _COORDS[self] = self.coords()
            c.setflags(write=False)
        return c

    def coords(self) -> np.ndarray:
        axes = [self.axis_coords(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def eval_mask(self) -> np.ndarray:
        """Nodes used for static (non-flow) evaluation."""
        mask = np.ones(self.shape, dtype=bool)
        if self.topology == "lat-long-sphere" and self.polar_band > 0:
            th = self.axis_coords(0)
            keep = (th > self.polar_band) & (th < math.pi - self.polar_band)
            mask &= keep[:, None]
        return mask

    def with_band(self, band):
        return Grid(self.topology, self.shape, self.lower, self.spacing, self.order, band)

    def with_order(self, order):
        return Grid(self.topology, self.shape, self.lower, self.spacing, order, self.polar_band)

    def descriptor(self) -> dict:
        return {"topology": self.topology, "shape": list(self.shape), "lower": list(self.lower),
                "spacing": list(self.spacing), "order": self.order, "polar_band": self.polar_band}

    @classmethod
    def from_descriptor(cls, d):
        return cls(d["topology"], tuple(d["shape"]), tuple(d["lower"]), tuple(d["spacing"]),
                   int(d["order"]), float(d.get("polar_band", 0.0)))

    # -- extension to working arrays ----------------------------------------
    @property
    def ghost_width(self) -> int:
        return 2 * self.reach if self.topology == "lat-long-sphere" else 0

    def _periodic_axis(self, axis) -> bool:
        if self.topology == "periodic-box":
            return True
        if self.topology == "lat-long-sphere":
            return axis == 1
        return False

    def extend(self, u, parity=None) -> np.ndarray:
        """Working array: node field plus pole ghost rows (sphere only).

        ``parity`` (broadcastable to the trailing component shape) gives the
        sign each component picks up under the pole reflection.
        """
        u = np.asarray(u, dtype=float)
        w = self.ghost_width
        if w == 0:
            return u
        half = self.shape[1] // 2
        top = np.roll(u[w - 1::-1], half, axis=1)
        bot = np.roll(u[:-w - 1:-1], half, axis=1)
        if parity is not None:
            top = top * parity
            bot = bot * parity
        return np.concatenate([top, u, bot], axis=0)

    def crop(self, a) -> np.ndarray:
        w = self.ghost_width
        return a[w:-w] if w else a

    def extended_coords(self) -> np.ndarray:
        """Continued-chart coordinates of the working array (signed colatitude in ghosts)."""
        if self.ghost_width == 0:
            return self.coords()
        w = self.ghost_width
        n_lat = self.shape[0]
        # continued colatitude: negative past the north pole, beyond pi past the south pole
        th = self.lower[0] + self.spacing[0] * np.arange(-w, n_lat + w)
        ph = self.axis_coords(1)
        return np.stack(np.meshgrid(th, ph, indexing="ij"), axis=-1)

    def orientation_sign(self) -> np.ndarray:
        """Sign of the volume density on the working array (−1 on sphere ghost rows)."""
        if self.ghost_width == 0:
            return np.ones(self.shape)
        w = self.ghost_width
        s = np.ones((self.shape[0] + 2 * w, self.shape[1]))
        s[:w] = -1.0
        s[-w:] = -1.0
        return s

    # -- stencils on working arrays -------------------------------------------
    def _shift(self, a, axis, s):
        if s == 0:
            return a
        if self._periodic_axis(axis):
            return a.take(_wrap_index(a.shape[axis], s), axis=axis)
        out = np.full_like(a, np.nan)
        dst = [slice(None)] * a.ndim
        src = [slice(None)] * a.ndim
        if s > 0:
            dst[axis], src[axis] = slice(0, -s), slice(s, None)
        else:
            dst[axis], src[axis] = slice(-s, None), slice(0, s)
        out[tuple(dst)] = a[tuple(src)]
        return out

    def d1(self, a, axis):
        h = self.spacing[axis]
        if self.order == 2:
            return (self._shift(a, axis, 1) - self._shift(a, axis, -1)) / (2 * h)
        return (-self._shift(a, axis, 2) + 8 * self._shift(a, axis, 1)
                - 8 * self._shift(a, axis, -1) + self._shift(a, axis, -2)) / (12 * h)

    def d2(self, a, axis):
        h = self.spacing[axis]
        if self.order == 2:
            return (self._shift(a, axis, 1) - 2 * a + self._shift(a, axis, -1)) / h**2
        return (-self._shift(a, axis, 2) + 16 * self._shift(a, axis, 1) - 30 * a
                + 16 * self._shift(a, axis, -1) - self._shift(a, axis, -2)) / (12 * h**2)

    def dij(self, a, i, j):
        if i == j:
            return self.d2(a, i)
        return 0.5 * (self.d1(self.d1(a, i), j) + self.d1(self.d1(a, j), i))

    # -- node-level conveniences --------------------------------------------
    def gradient(self, u, parity=None):
        """Centered gradient of a node field; components on a new last axis."""
        ue = self.extend(u, parity)
        return self.crop(np.stack([self.d1(ue, a) for a in range(self.dim)], axis=-1))

    def hessian(self, u, parity=None):
        ue = self.extend(u, parity)
        m = self.dim
        out = np.empty(np.shape(ue) + (m, m))
        for i in range(m):
            for j in range(i, m):
                out[..., i, j] = out[..., j, i] = self.dij(ue, i, j)
        return self.crop(out)


_WRAP = {}


def _wrap_index(n, s):
    key = (n, s)
    idx = _WRAP.get(key)
    if idx is None:
        idx = _WRAP[key] = (np.arange(n) + s) % n
    return idx


def sym2_parity(m):
    """Pole-reflection signs of a symmetric 2-tensor's chart components."""
    p = np.ones((m, m))
    if m == 2:
        p[0, 1] = p[1, 0] = -1.0
    return p


def covector_parity(m):
    p = np.ones(m)
    p[0] = -1.0
    return p


@dataclass(frozen=True)
class MapField:
    """A map Σ₁ → Σ₂ sampled on a grid: f(x) = values(x) + winding @ x.

    ``winding`` (n×m) carries the linear part of maps that wrap around a torus
    target; the stored ``values`` are then periodic.
    """

    grid: Grid
    values: np.ndarray
    winding: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape[: self.grid.dim] != self.grid.shape:
            raise DataError(f"map values shape {v.shape} does not match grid {self.grid.shape}")
        if v.ndim == self.grid.dim:
            v = v[..., None]
        object.__setattr__(self, "values", v)
        n = v.shape[-1]
        w = np.zeros((n, self.grid.dim)) if self.winding is None else np.asarray(self.winding, float)
        if w.shape != (n, self.grid.dim):
            raise DataError("winding must be an n x m matrix")
        if np.any(w != 0) and self.grid.topology != "periodic-box":
            raise DataError("winding maps need a periodic Σ₁ grid")
        object.__setattr__(self, "winding", w)

    @property
    def n(self) -> int:
        return self.values.shape[-1]

    def full_values(self) -> np.ndarray:
        if not np.any(self.winding):
            return self.values
        return self.values + np.einsum("an,...n->...a", self.winding, self.grid.coords())


@dataclass
class JetField:
    """Per-node chart jets of a map (batched :class:`GraphJet` data)."""

    x: np.ndarray
    y: np.ndarray
    df: np.ndarray
    d2f: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.valid is None:
            self.valid = (np.all(np.isfinite(self.df), axis=(-1, -2))
                          & np.all(np.isfinite(self.d2f), axis=(-1, -2, -3)))


def _check_finite(values):
    bad = ~np.isfinite(values)
    if np.any(bad):
        idx = tuple(int(i) for i in np.argwhere(bad)[0])
        raise DataError(f"non-finite map value at node {idx[:-1] if len(idx) > 1 else idx}")


def jets(field: MapField) -> JetField:
    """First and second chart derivatives by centered stencils of the grid order."""
    grid = field.grid
    _check_finite(field.values)
    m, n = grid.dim, field.n
    ue = grid.extend(field.values)
    df = np.empty(ue.shape[:-1] + (n, m))
    d2f = np.empty(ue.shape[:-1] + (n, m, m))
    for i in range(m):
        if grid.order == 2:
            up, dn = grid._shift(ue, i, 1), grid._shift(ue, i, -1)
            h = grid.spacing[i]
            df[..., i] = (up - dn) / (2 * h)
            d2f[..., :, i, i] = (up - 2 * ue + dn) / (h * h)
        else:
            df[..., i] = grid.d1(ue, i)
            d2f[..., :, i, i] = grid.d2(ue, i)
        for j in range(i + 1, m):
            d2f[..., :, i, j] = d2f[..., :, j, i] = grid.dij(ue, i, j)
    df = grid.crop(df)
    if np.any(field.winding):
        df = df + field.winding
    d2f = grid.crop(d2f)
    valid = np.ones(grid.shape, dtype=bool) if grid.topology != "bounded-chart" else None
    return JetField(grid.cached_coords(), field.full_values(), df, d2f, valid)


def signed_weight(g, sign=1.0):
    det = np.linalg.det(g) if g.shape[-1] > 2 else _det_small(g)
    return sign * np.sqrt(det)


def _det_small(g):
    if g.shape[-1] == 1:
        return g[..., 0, 0]
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def inv_small(g):
    """Inverse of stacked 1x1 / 2x2 matrices in closed form, numpy otherwise."""
    m = g.shape[-1]
    if m == 1:
        return 1.0 / g
    if m == 2:
        det = _det_small(g)
        out = np.empty_like(g)
        out[..., 0, 0] = g[..., 1, 1] / det
        out[..., 1, 1] = g[..., 0, 0] / det
        out[..., 0, 1] = -g[..., 0, 1] / det
        out[..., 1, 0] = -g[..., 1, 0] / det
        return out
    return np.linalg.inv(g)


def det_small(g):
    return _det_small(g) if g.shape[-1] <= 2 else np.linalg.det(g)


def _lb_working(grid, grad_e, g_e, w_e):
    """(1/w) Σ_i D_i (w g^{ij} grad_j) on working arrays."""
    ginv = inv_small(g_e)
    flux = w_e[..., None] * np.einsum("...ij,...j->...i", ginv, grad_e)
    div = sum(grid.d1(flux[..., i], i) for i in range(grid.dim))
    return div / w_e


def laplace_beltrami(u, g, grid: Grid) -> np.ndarray:
    """Divergence-form Laplace–Beltrami of a scalar node field for a metric field.

    ``g`` holds the metric components at every node (``grid.shape + (m, m)``).
    """
    u = np.asarray(u, dtype=float)
    g = np.asarray(g, dtype=float)
    det = det_small(g)
    ok = np.isfinite(det)
    if np.any(det[ok] <= 0):
        idx = tuple(int(i) for i in np.argwhere(ok & (det <= 0))[0])
        raise NotSpacelikeError(f"metric not positive definite at node {idx}")
    m = grid.dim
    ue = grid.extend(u)
    ge = grid.extend(g, sym2_parity(m))
    we = grid.orientation_sign() * np.sqrt(det_small(ge))
    grad = np.stack([grid.d1(ue, a) for a in range(m)], axis=-1)
    return grid.crop(_lb_working(grid, grad, ge, we))


def laplace_beltrami_of_gradient(grad_e, g, grid: Grid) -> np.ndarray:
    """Laplace–Beltrami when the gradient is already known on the working array."""
    g = np.asarray(g, dtype=float)
    ge = grid.extend(g, sym2_parity(grid.dim))
    we = grid.orientation_sign() * np.sqrt(det_small(ge))
    return grid.crop(_lb_working(grid, grad_e, ge, we))


def volume(g, grid: Grid, g1=None, mask=None):
    """Midpoint-rule volumes of (Σ₁, g) and, if ``g1`` is given, of (Σ₁, g₁).

    Returns ``(vol_g, vol_g1)``; ``vol_g1`` is None without ``g1``.
    """
    det = det_small(np.asarray(g, dtype=float))
    sel = np.isfinite(det) if mask is None else (mask & np.isfinite(det))
    if np.any(det[sel] <= 0):
        raise NotSpacelikeError("volume requested for a non-spacelike state")
    vol = float(np.sum(np.sqrt(det[sel]))) * grid.cell_measure
    vol1 = None
    if g1 is not None:
        d1 = det_small(np.asarray(g1, dtype=float))
        vol1 = float(np.sum(np.sqrt(d1[sel]))) * grid.cell_measure
    return vol, vol1


@dataclass(frozen=True)
class RefinementResult:
    order: float
    inconclusive: bool
    errors: tuple
    spacings: tuple
    pairwise: tuple = ()


def refinement_order(errors, spacings, floor: float = 1e-13) -> RefinementResult:
    """Least-squares slope of log(error) against log(h).

    Flags the study inconclusive when errors are at the rounding floor or do
    not decrease monotonically with h.
    """
    e = np.asarray(errors, dtype=float)
    h = np.asarray(spacings, dtype=float)
    if e.size < 2:
        raise ValueError("need at least two resolutions")
    order_idx = np.argsort(-h)
    e, h = e[order_idx], h[order_idx]
    inconclusive = bool(np.any(e <= floor) or np.any(np.diff(e) >= 0) or not np.all(np.isfinite(e)))
    with np.errstate(divide="ignore", invalid="ignore"):
        le, lh = np.log(np.maximum(e, 1e-300)), np.log(h)
        slope = float(np.polyfit(lh, le, 1)[0])
        pair = tuple(float((le[i] - le[i + 1]) / (lh[i] - lh[i + 1])) for i in range(e.size - 1))
    return RefinementResult(slope, inconclusive, tuple(e), tuple(h), pair)


def refinement_study(evaluate, grids, floor: float = 1e-13) -> RefinementResult:
    """Run ``evaluate(grid) -> error`` on each grid and estimate the order."""
    errs = [float(evaluate(g)) for g in grids]
    return refinement_order(errs, [g.h_min for g in grids], floor)
