"""Initial maps and analytic states, with closed-form jets where available."""

from __future__ import annotations

import math

import numpy as np

from .discretization import Grid, JetField, MapField
from .immersion import GraphJet


def constant(grid: Grid, value) -> MapField:
    value = np.atleast_1d(np.asarray(value, dtype=float))
    return MapField(grid, np.broadcast_to(value, grid.shape + value.shape).copy())


def _wavenumber(grid: Grid, mode: int) -> float:
    """mode·2π/L along the first axis, so the profile is periodic for any torus length L."""
    if grid.topology == "periodic-box":
        return mode * 2 * math.pi / (grid.spacing[0] * grid.shape[0])
    return float(mode)


def sinusoid(grid: Grid, amplitude: float, mode: int = 1, n: int = 1) -> MapField:
    """f = A sin(k x₁) in every target component, k = 2π·mode/L."""
    x = grid.coords()[..., 0]
    vals = amplitude * np.sin(_wavenumber(grid, mode) * x)
    return MapField(grid, np.repeat(vals[..., None], n, axis=-1))


def sinusoid_jets(grid: Grid, amplitude: float, mode: int = 1) -> JetField:
    X = grid.coords()
    x = X[..., 0]
    m = grid.dim
    df = np.zeros(grid.shape + (1, m))
    d2f = np.zeros(grid.shape + (1, m, m))
    k = _wavenumber(grid, mode)
    df[..., 0, 0] = amplitude * k * np.cos(k * x)
    d2f[..., 0, 0, 0] = -amplitude * k**2 * np.sin(k * x)
    return JetField(X, (amplitude * np.sin(k * x))[..., None], df, d2f)


def linear_wrap(grid: Grid, slope: float, perturbation: float = 0.0, mode: int = 1) -> MapField:
    """f = slope·x₁ (+ perturbation·sin(mode·x₁)) stored as winding plus periodic part."""
    m = grid.dim
    W = np.zeros((1, m))
    W[0, 0] = slope
    x = grid.coords()[..., 0]
    return MapField(grid, (perturbation * np.sin(_wavenumber(grid, mode) * x))[..., None], W)


# -- radial maximal graphs and their relatives ------------------------------------

def _catenoid_profile(c):
    def prof(r):
        s = c * c + r * r
        return (c * np.arcsinh(r / c), c / np.sqrt(s), -c * r / s**1.5,
                c * (2 * r * r - c * c) / s**2.5)
    return prof


def _hyperboloid_profile(R):
    def prof(r):
        s = R * R + r * r
        return (np.sqrt(s), r / np.sqrt(s), R * R / s**1.5, -3 * R * R * r / s**2.5)
    return prof


def radial_jets(X, profile, with_third=True):
    """Exact jets of f(x) = φ(|x|) at points X (..., m); requires |x| > 0."""
    r = np.sqrt(np.sum(X**2, axis=-1))
    phi, p1, p2, p3 = profile(r)
    m = X.shape[-1]
    u = X / r[..., None]
    eye = np.eye(m)
    A = p2 - p1 / r
    Bc = p1 / r
    df = (p1[..., None] * u)[..., None, :]
    uu = np.einsum("...i,...j->...ij", u, u)
    d2 = A[..., None, None] * uu + Bc[..., None, None] * eye
    out = {"y": phi[..., None], "df": df, "d2f": d2[..., None, :, :]}
    if with_third:
        Ap = p3 - p2 / r + p1 / r**2
        uuu = np.einsum("...i,...j,...k->...ijk", u, u, u)
        sym = (np.einsum("ik,...j->...ijk", eye, u) + np.einsum("jk,...i->...ijk", eye, u)
               + np.einsum("ij,...k->...ijk", eye, u))
        d3 = (Ap - 2 * A / r)[..., None, None, None] * uuu + (A / r)[..., None, None, None] * sym
        out["d3f"] = d3[..., None, :, :, :]
    return out


def catenoid_value(X, c=0.5):
    r = np.sqrt(np.sum(X**2, axis=-1))
    return c * np.arcsinh(r / c)


def catenoid(grid: Grid, c: float = 0.5) -> MapField:
    return MapField(grid, catenoid_value(grid.coords(), c)[..., None])


def catenoid_jets(grid: Grid, c: float = 0.5, mask=None):
    """Analytic jets of the maximal catenoid graph; nodes outside ``mask`` are NaN."""
    return _radial_field(grid, _catenoid_profile(c), mask)


def hyperboloid(grid: Grid, R: float) -> MapField:
    r2 = np.sum(grid.coords() ** 2, axis=-1)
    return MapField(grid, np.sqrt(R * R + r2)[..., None])


def hyperboloid_jets(grid: Grid, R: float, mask=None):
    return _radial_field(grid, _hyperboloid_profile(R), mask)


def _radial_field(grid, profile, mask):
    X = grid.coords()
    r = np.sqrt(np.sum(X**2, axis=-1))
    ok = r > 0 if mask is None else (mask & (r > 0))
    shape = grid.shape
    m = grid.dim
    y = np.full(shape + (1,), np.nan)
    df = np.full(shape + (1, m), np.nan)
    d2f = np.full(shape + (1, m, m), np.nan)
    d3f = np.full(shape + (1, m, m, m), np.nan)
    jet = radial_jets(X[ok], profile)
    y[ok], df[ok], d2f[ok], d3f[ok] = jet["y"], jet["df"], jet["d2f"], jet["d3f"]
    field = JetField(X, y, df, d2f, ok)
    field.d3f = d3f
    return field


def annulus_mask(grid: Grid, r0: float = 1.0, r1: float = 2.0):
    r = np.sqrt(np.sum(grid.coords() ** 2, axis=-1))
    return (r >= r0 - 1e-12) & (r <= r1 + 1e-12)


def disk_mask(grid: Grid, radius: float, center=None):
    X = grid.coords()
    if center is not None:
        X = X - np.asarray(center, dtype=float)
    return np.sum(X**2, axis=-1) <= radius * radius * (1 + 1e-12)


# -- random smooth graphs over Euclidean charts ---------------------------------------

class FourierGraph:
    """f(x) = Σ_k a_k sin(w_k·x + b_k) with random coefficients, one function per target axis."""

    def __init__(self, rng, m, n, radius, n_modes=4, max_slope=0.9):
        self.m, self.n = m, n
        self.w = rng.normal(size=(n, n_modes, m)) * (2.0 / radius)
        self.b = rng.uniform(0, 2 * math.pi, size=(n, n_modes))
        self.a = rng.normal(size=(n, n_modes))
        self.max_slope = max_slope

    def values(self, X):
        ph = np.einsum("akm,...m->...ak", self.w, X) + self.b
        return np.sum(self.a * np.sin(ph), axis=-1)

    def jets(self, X):
        ph = np.einsum("akm,...m->...ak", self.w, X) + self.b
        s, c = np.sin(ph), np.cos(ph)
        y = np.sum(self.a * s, axis=-1)
        df = np.einsum("...ak,akm->...am", self.a * c, self.w)
        d2f = -np.einsum("...ak,akm,akl->...aml", self.a * s, self.w, self.w)
        return y, df, d2f

    def normalize(self, X, target_lambda_sq):
        """Rescale so that max λ₁² over the sample points X equals ``target_lambda_sq`` (flat factors)."""
        _, df, _ = self.jets(X)
        S = np.einsum("...ai,...aj->...ij", df, df)
        mu = np.max(np.linalg.eigvalsh(S))
        if mu > 0:
            self.a *= math.sqrt(target_lambda_sq / mu)
        return self

    def graph_jet(self, X):
        y, df, d2f = self.jets(X)
        return GraphJet(X, y, df, d2f)


# -- sphere maps -------------------------------------------------------------------------

def _cartesian(X):
    th, ph = X[..., 0], X[..., 1]
    return np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)


def sphere_bump_raw(X, eps=1.0):
    """A smooth non-axisymmetric perturbation of the equatorial slice in (colatitude, longitude)."""
    cx, cy, cz = _cartesian(X)
    u = cz + 0.5 * cx * cy + 0.3 * cx
    v = cx - 0.4 * cy * cz + 0.2 * cz * cz
    return np.stack([0.5 * math.pi + eps * u, eps * v], axis=-1)


def sphere_bump(grid: Grid, space, lambda_sq_max: float = 0.25, eps=None) -> MapField:
    """Equatorial slice plus a smooth bump scaled so that max λ₁² equals ``lambda_sq_max``.

    The scaling is iterated since λ depends nonlinearly on the amplitude.
    """
    from .discretization import jets
    from .immersion import singular_values

    X = grid.coords()
    if eps is None:
        eps = 0.1
        for _ in range(30):
            fld = MapField(grid, sphere_bump_raw(X, eps))
            J = jets(fld)
            lam, _ = singular_values(GraphJet(J.x, J.y, J.df, J.d2f), _unit_rho(space))
            cur = float(np.max(lam[..., 0] ** 2))
            if abs(cur - lambda_sq_max) < 1e-6 * lambda_sq_max:
                break
            eps *= math.sqrt(lambda_sq_max / cur)
    return MapField(grid, sphere_bump_raw(X, eps))


def meridian_tilt(grid: Grid, a: float | None = None, space=None, lambda_sq: float | None = None) -> MapField:
    """f(θ, φ) = (π/2 + a cos θ, 0): for a round target of radius R, λ₁² = R² a² sin² θ.

    With ``lambda_sq`` (and ``space``) the amplitude is solved so that the grid
    maximum of λ₁², measured against the unrescaled Σ₂ metric, hits the target.
    """
    th = grid.coords()[..., 0]

    def build(amp):
        return MapField(grid, np.stack([0.5 * math.pi + amp * np.cos(th), np.zeros_like(th)], axis=-1))

    if lambda_sq is None:
        return build(a)
    from .discretization import jets
    from .immersion import singular_values

    unit = _unit_rho(space)
    amp = a if a is not None else math.sqrt(lambda_sq) / space.sigma2.scale
    for _ in range(40):
        J = jets(build(amp))
        lam, _ = singular_values(GraphJet(J.x, J.y, J.df, J.d2f), unit)
        cur = float(np.max(lam[..., 0] ** 2))
        if abs(cur - lambda_sq) < 1e-12 * lambda_sq:
            break
        amp *= math.sqrt(lambda_sq / cur)
    return build(amp)


def _unit_rho(space):
    from .factors import ProductSpace

    return ProductSpace(space.sigma1, space.sigma2, 1.0)


def expression_map(grid: Grid, exprs) -> MapField:
    """Evaluate parsed coordinate expressions (see :mod:`graphflow.config`) on the grid."""
    X = grid.coords()
    env = {"x": X[..., 0], "y": X[..., 1] if grid.dim > 1 else np.zeros(grid.shape)}
    vals = np.stack([np.broadcast_to(np.asarray(e(env), dtype=float), grid.shape) for e in exprs], axis=-1)
    return MapField(grid, vals)
