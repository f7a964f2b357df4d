"""Pointwise geometry of the graph immersion x ↦ (x, f(x)) in (Σ₁×Σ₂, g₁ - g₂).

All functions are vectorised: jet arrays may carry any number of leading node
axes. Shapes (m = dim Σ₁, n = dim Σ₂):

    x (..., m)   y (..., n)   df (..., n, m)   d2f (..., n, m, m)

Adapted frames follow the convention df(a_i) = +λ_i a_{m+i}, which makes
e_i = (a_i + λ_i a_{m+i}) / sqrt(1 - λ_i²) tangent to the graph.
Normal-valued quantities are normed with the Riemannian metric that flips
the sign of the pseudo-metric on the normal bundle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .discretization import det_small, inv_small, sym2_parity
from .errors import DimensionError, NotSpacelikeError, NumericError
from .factors import ProductSpace


@dataclass
class GraphJet:
    x: np.ndarray
    y: np.ndarray
    df: np.ndarray
    d2f: np.ndarray
    d3f: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        self.df = np.asarray(self.df, dtype=float)
        self.d2f = np.asarray(self.d2f, dtype=float)

    @property
    def m(self):
        return self.df.shape[-1]

    @property
    def n(self):
        return self.df.shape[-2]


@dataclass
class PointGeometry:
    g: np.ndarray
    ginv: np.ndarray
    detg: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    pullback: np.ndarray
    lam: np.ndarray
    margin: np.ndarray
    cosh_theta: np.ndarray
    cosh_theta_m1: np.ndarray
    a_tan: np.ndarray | None = None
    a_nor: np.ndarray | None = None
    e_tan: np.ndarray | None = None
    e_nor: np.ndarray | None = None
    h: np.ndarray | None = None
    H: np.ndarray | None = None
    B2: np.ndarray | None = None
    normH: np.ndarray | None = None

    @property
    def spacelike(self):
        return self.margin > 0


# -- metric level ------------------------------------------------------------

def _pullback(jet, space):
    g2 = space.metric2(jet.y)
    return np.einsum("...ai,...ab,...bj->...ij", jet.df, g2, jet.df), g2


def induced_metric(jet, space: ProductSpace):
    """g = g₁ - f*g₂ with its inverse and determinant.

    Degenerate or indefinite g is returned as data; ``spacelike`` flags it.
    """
    S, _ = _pullback(jet, space)
    g = space.metric1(jet.x) - S
    det = det_small(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ginv = inv_small(g)
    lam, margin = _eigen_singular_values(S, space.metric1(jet.x))
    return {"g": g, "ginv": ginv, "det": det, "spacelike": margin > 0}


def _eigen_singular_values(S, g1):
    try:
        L = np.linalg.cholesky(g1)
        Linv = np.linalg.inv(L)
        M = Linv @ S @ np.swapaxes(Linv, -1, -2)
        mu = np.linalg.eigvalsh(0.5 * (M + np.swapaxes(M, -1, -2)))[..., ::-1]
    except np.linalg.LinAlgError as exc:
        bad = _first_bad(S)
        raise NumericError(f"generalized eigen-solve failed near node {bad}: {exc}") from exc
    lam = np.sqrt(np.clip(mu, 0.0, None))
    return lam, 1.0 - mu[..., 0]


def _first_bad(a):
    bad = ~np.isfinite(a)
    if a.ndim > 2 and np.any(bad):
        return tuple(int(i) for i in np.argwhere(np.any(bad, axis=(-1, -2)))[0])
    return None


def singular_values(jet, space: ProductSpace):
    """λ_1 ≥ … ≥ λ_m with λ_i² the eigenvalues of f*g₂ relative to g₁, and δ = 1 - λ_1²."""
    S, _ = _pullback(jet, space)
    lam, margin = _eigen_singular_values(S, space.metric1(jet.x))
    return lam, margin


def cosh_from_lambda(lam):
    """(cosh θ, cosh θ - 1) from singular values, the latter without cancellation."""
    with np.errstate(invalid="ignore", divide="ignore"):
        log_cosh = -0.5 * np.sum(np.log1p(-lam**2), axis=-1)
    return np.exp(log_cosh), np.expm1(log_cosh)


# -- frames ----------------------------------------------------------------------

def _rotate_clusters(U, s, Vh, m, n, rng, tol=1e-9):
    """Random orthogonal change of eigenbasis inside every cluster of equal λ."""
    lam = np.zeros(m)
    k = min(m, n)
    lam[:k] = s[:k]
    V = Vh.T.copy()
    U = U.copy()
    i = 0
    while i < m:
        j = i + 1
        while j < m and abs(lam[j] - lam[i]) < tol:
            j += 1
        Q, _ = np.linalg.qr(rng.standard_normal((j - i, j - i)))
        V[:, i:j] = V[:, i:j] @ Q
        if lam[i] > tol:
            # u_i = T v_i / λ_i moves with v_i
            U[:, i:j] = U[:, i:j] @ Q
        i = j
    # the Σ₂ directions not paired with a positive λ may rotate freely
    free = [a for a in range(n) if a >= k or lam[a] <= tol]
    if free:
        Q, _ = np.linalg.qr(rng.standard_normal((len(free), len(free))))
        U[:, free] = U[:, free] @ Q
    return U, V.T


def _frames(jet, space, g1, g2, rotation=None):
    m, n = jet.m, jet.n
    L1 = np.linalg.cholesky(g1)
    L2 = np.linalg.cholesky(g2)
    L1invT = np.swapaxes(np.linalg.inv(L1), -1, -2)
    L2invT = np.swapaxes(np.linalg.inv(L2), -1, -2)
    T = np.swapaxes(L2, -1, -2) @ jet.df @ L1invT
    try:
        U, s, Vh = np.linalg.svd(T, full_matrices=True)
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD of the whitened differential failed: {exc}") from exc
    if rotation is not None:
        if T.ndim != 2:
            raise ValueError("eigenbasis rotation is only supported for a single jet")
        U, Vh = _rotate_clusters(U, s, Vh, m, n, rotation)
    k = min(m, n)
    lead = T.shape[:-2]
    lam = np.zeros(lead + (m,))
    lam[..., :k] = s[..., :k]
    A = L1invT @ np.swapaxes(Vh, -1, -2)
    A2 = L2invT @ U
    return lam, A, A2


def _build_e(lam, A, A2, m, n):
    k = min(m, n)
    lead = lam.shape[:-1]
    inv_c = 1.0 / np.sqrt(1.0 - lam**2)
    e_tan = np.zeros(lead + (m + n, m))
    e_nor = np.zeros(lead + (m + n, n))
    e_tan[..., :m, :] = A * inv_c[..., None, :]
    e_tan[..., m:, :k] = A2[..., :, :k] * (lam[..., :k] * inv_c[..., :k])[..., None, :]
    lam_n = np.zeros(lead + (n,))
    lam_n[..., :k] = lam[..., :k]
    inv_cn = 1.0 / np.sqrt(1.0 - lam_n**2)
    e_nor[..., :m, :k] = A[..., :, :k] * (lam[..., :k] * inv_c[..., :k])[..., None, :]
    e_nor[..., m:, :] = A2 * inv_cn[..., None, :]
    return e_tan, e_nor


def compute_geometry(jet, space: ProductSpace, with_forms=True, rotation=None) -> PointGeometry:
    """Everything at once: metric, λ, cosh θ, frames and second fundamental form.

    Raises :class:`NotSpacelikeError` for frame/form quantities if any node has
    margin ≤ 0; call with ``with_forms=False`` to inspect degenerate data.
    """
    g1 = space.metric1(jet.x)
    S, g2 = _pullback(jet, space)
    g = g1 - S
    det = det_small(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        ginv = inv_small(g)
    lam_e, margin = _eigen_singular_values(S, g1)
    cosh, cosh_m1 = cosh_from_lambda(np.minimum(lam_e, 1.0))
    geo = PointGeometry(g, ginv, det, g1, g2, S, lam_e, margin, cosh, cosh_m1)
    if not with_forms:
        return geo
    if np.any(margin <= 0):
        raise NotSpacelikeError(f"graph is not spacelike (min margin {np.min(margin):.3e})")
    m, n = jet.m, jet.n
    lam, A, A2 = _frames(jet, space, g1, g2, rotation)
    e_tan, e_nor = _build_e(lam, A, A2, m, n)
    geo.lam = lam
    geo.a_tan, geo.a_nor, geo.e_tan, geo.e_nor = A, A2, e_tan, e_nor
    cosh, cosh_m1 = cosh_from_lambda(lam)
    geo.cosh_theta, geo.cosh_theta_m1 = cosh, cosh_m1

    # ambient covariant Hessian of the graph map in chart components
    V = ambient_hessian(jet, space)
    C = e_tan[..., :m, :]
    Ge = np.concatenate([g1 @ e_nor[..., :m, :], -(g2 @ e_nor[..., m:, :])], axis=-2)
    h = -np.einsum("...Akl,...ki,...lj,...Aa->...aij", V, C, C, Ge)
    h = 0.5 * (h + np.swapaxes(h, -1, -2))
    geo.h = h
    geo.H = np.einsum("...aii->...a", h)
    geo.B2 = np.sum(h**2, axis=(-1, -2, -3))
    geo.normH = np.sqrt(np.sum(geo.H**2, axis=-1))
    return geo


def ambient_hessian(jet, space: ProductSpace) -> np.ndarray:
    """∇̄_{∂k} dΓ(∂l) as product-chart vectors, shape (..., m+n, m, m)."""
    m, n = jet.m, jet.n
    gam1 = space.sigma1.christoffel(jet.x)
    gam2 = space.sigma2.christoffel(jet.y)
    lead = jet.df.shape[:-2]
    V = np.empty(lead + (m + n, m, m))
    V[..., :m, :, :] = gam1
    V[..., m:, :, :] = jet.d2f + np.einsum("...cab,...ak,...bl->...ckl", gam2, jet.df, jet.df)
    return V


def adapted_frames(jet, space: ProductSpace, rotation=None):
    """Dict with a_tan (columns a_i), a_nor (columns a_{m+α}), e_tan, e_nor, lam."""
    geo = compute_geometry(jet, space, rotation=rotation)
    return {"a_tan": geo.a_tan, "a_nor": geo.a_nor, "e_tan": geo.e_tan,
            "e_nor": geo.e_nor, "lam": geo.lam}


def frame_gram(geo: PointGeometry, space: ProductSpace, x, y):
    """Gram matrix of (e_i, e_α) under the pseudo-metric."""
    G = space.pseudo_metric(x, y)
    E = np.concatenate([geo.e_tan, geo.e_nor], axis=-1)
    return np.swapaxes(E, -1, -2) @ G @ E


def hyperbolic_angle(jet, space: ProductSpace):
    """The three definitions of cosh θ: product over λ, volume ratio, frame determinant."""
    geo = compute_geometry(jet, space, with_forms=False)
    if np.any(geo.margin <= 0):
        raise NotSpacelikeError("cosh theta undefined for a non-spacelike graph")
    lam, A, A2 = _frames(jet, space, geo.g1, geo.g2)
    e_tan, _ = _build_e(lam, A, A2, jet.m, jet.n)
    prod, _ = cosh_from_lambda(lam)
    ratio = np.sqrt(det_small(geo.g1) / geo.detg)
    frame = np.abs(np.linalg.det(e_tan[..., : jet.m, :])) * np.sqrt(det_small(geo.g1))
    return prod, ratio, frame


def fundamental_forms(jet, space: ProductSpace, rotation=None):
    geo = compute_geometry(jet, space, rotation=rotation)
    return {"h": geo.h, "H": geo.H, "B2": geo.B2, "normH": geo.normH}


# -- predicates ----------------------------------------------------------------------

def certificate_rho(space: ProductSpace) -> float:
    """Largest ρ certified by the factor curvatures (unrescaled Σ₂ metric).

    +inf when Σ₂ has no positive curvature; min K₁ / sup K₂⁺ when K₁ > 0;
    0 when neither hypothesis holds.
    """
    K1 = space.sigma1.sectional_curvature
    K2p = max(space.sigma2.sectional_curvature, 0.0)
    if K2p == 0.0:
        return float("inf")
    if K1 > 0:
        return K1 / K2p
    return 0.0


def graph_predicates(jet, space: ProductSpace, valid=None):
    """Spacelike, area-decreasing, det(g₁ + f*g₂) < 2 and the ρ-certificate over a field.

    Evaluated with the unrescaled Σ₂ metric of ``space.sigma2``.
    """
    base = ProductSpace(space.sigma1, space.sigma2, 1.0)
    lam, margin = singular_values(jet, base)
    g1 = base.metric1(jet.x)
    S, _ = _pullback(jet, base)
    det_ratio = det_small(g1 + S) / det_small(g1)
    if valid is not None:
        lam, margin, det_ratio = lam[valid], margin[valid], det_ratio[valid]
    m = lam.shape[-1]
    area_dec = np.ones(margin.shape, dtype=bool)
    for i in range(m):
        for j in range(m):
            if i != j:
                area_dec &= lam[..., i] * lam[..., j] < 1.0
    rho = certificate_rho(space)
    cert = bool(np.all(lam[..., 0] ** 2 < rho)) if rho > 0 else False
    return {
        "spacelike": bool(np.all(margin > 0)),
        "area_decreasing": bool(np.all(area_dec)),
        "det_condition": bool(np.all(det_ratio < 2.0)),
        "rho_certificate": cert,
        "rho": rho,
        "max_lambda1_sq": float(np.max(lam[..., 0] ** 2)),
    }


# -- Gauss curvature of minimal-surface type graphs ----------------------------------

def gauss_curvature_formula(geo: PointGeometry, space: ProductSpace):
    """K_M = [K₁ - λ₁²λ₂² K₂] / ((1-λ₁²)(1-λ₂²)) + Σ_α (h^α_11)² + (h^α_12)², for m = 2."""
    if geo.g.shape[-1] != 2:
        raise DimensionError("Gauss curvature formula needs a 2-dimensional Σ₁")
    l1, l2 = geo.lam[..., 0], geo.lam[..., 1]
    K1 = space.K1
    K2 = space.K2 if space.n >= 2 else 0.0
    base = (K1 - l1**2 * l2**2 * K2) / ((1 - l1**2) * (1 - l2**2))
    return base + np.sum(geo.h[..., :, 0, 0] ** 2 + geo.h[..., :, 0, 1] ** 2, axis=-1)


def brioschi_curvature(g, grid):
    """Gauss curvature of a 2-D metric field by the Brioschi formula with grid stencils."""
    if grid.dim != 2:
        raise DimensionError("Brioschi formula is for 2-dimensional charts")
    ge = grid.extend(np.asarray(g, dtype=float), sym2_parity(2))
    E, F, G = ge[..., 0, 0], ge[..., 0, 1], ge[..., 1, 1]
    d1, d2, dij = grid.d1, grid.d2, grid.dij
    Eu, Ev, Fu, Fv, Gu, Gv = d1(E, 0), d1(E, 1), d1(F, 0), d1(F, 1), d1(G, 0), d1(G, 1)
    Evv, Fuv, Guu = d2(E, 1), dij(F, 0, 1), d2(G, 0)
    M1 = np.stack([
        np.stack([-0.5 * Evv + Fuv - 0.5 * Guu, 0.5 * Eu, Fu - 0.5 * Ev], -1),
        np.stack([Fv - 0.5 * Gu, E, F], -1),
        np.stack([0.5 * Gv, F, G], -1),
    ], -2)
    zero = np.zeros_like(E)
    M2 = np.stack([
        np.stack([zero, 0.5 * Ev, 0.5 * Gu], -1),
        np.stack([0.5 * Ev, E, F], -1),
        np.stack([0.5 * Gu, F, G], -1),
    ], -2)
    with np.errstate(invalid="ignore"):
        K = (_det3(M1) - _det3(M2)) / (E * G - F**2) ** 2
    return grid.crop(K)


def gauss_form_curvature(g, grid):
    """Gauss curvature of a 2-D metric via K = [(√W Γ²₁₁/E)_v − (√W Γ²₁₂/E)_u] / √W, W = EG − F².

    Only first differences appear, nested once. On smooth data this has a much
    smaller truncation constant than the Brioschi determinant, whose second
    differences of G are divided by W² (large near the poles of a lat-long chart).
    """
    if grid.dim != 2:
        raise DimensionError("Gauss curvature needs a 2-dimensional chart")
    ge = grid.extend(np.asarray(g, dtype=float), sym2_parity(2))
    E, F, G = ge[..., 0, 0], ge[..., 0, 1], ge[..., 1, 1]
    d1 = grid.d1
    Eu, Ev, Fu, Gu = d1(E, 0), d1(E, 1), d1(F, 0), d1(G, 0)
    W = E * G - F**2
    # signed density keeps √W smooth through the pole ghost rows
    sw = np.sqrt(np.abs(W)) * grid.orientation_sign()
    with np.errstate(invalid="ignore", divide="ignore"):
        g211 = (2 * E * Fu - E * Ev - F * Eu) / (2 * W)
        g212 = (E * Gu - F * Ev) / (2 * W)
        K = (d1(sw * g211 / E, 1) - d1(sw * g212 / E, 0)) / sw
    return grid.crop(K)


def _det3(M):
    return (M[..., 0, 0] * (M[..., 1, 1] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 1])
            - M[..., 0, 1] * (M[..., 1, 0] * M[..., 2, 2] - M[..., 1, 2] * M[..., 2, 0])
            + M[..., 0, 2] * (M[..., 1, 0] * M[..., 2, 1] - M[..., 1, 1] * M[..., 2, 0]))


@dataclass
class GaussCheck:
    K_formula: np.ndarray
    K_discrete: np.ndarray
    residual: float
    mask: np.ndarray


def gauss_curvature_check(jet, space: ProductSpace, grid, mask=None, method="gauss") -> GaussCheck:
    """Compare the frame formula for K_M with a finite-difference curvature of the induced metric.

    ``jet`` is a node field of jets on ``grid`` (finite-difference or analytic).
    ``method`` picks the discrete curvature: ``"gauss"`` (nested first
    differences of Christoffel symbols) or ``"brioschi"``.
    """
    if space.m != 2:
        raise DimensionError("Gauss curvature check needs m = 2")
    mask = grid.eval_mask() if mask is None else mask
    geo_all = compute_geometry(jet, space, with_forms=False)
    if method == "gauss":
        Kd = gauss_form_curvature(geo_all.g, grid)
    elif method == "brioschi":
        Kd = brioschi_curvature(geo_all.g, grid)
    else:
        raise ValueError(f"unknown curvature method {method!r}")
    sel = mask & np.isfinite(Kd)
    sub = GraphJet(jet.x[sel], jet.y[sel], jet.df[sel], jet.d2f[sel])
    geo = compute_geometry(sub, space)
    Kf = np.full(grid.shape, np.nan)
    Kf[sel] = gauss_curvature_formula(geo, space)
    res = float(np.max(np.abs(Kf[sel] - Kd[sel])))
    return GaussCheck(Kf, Kd, res, sel)
