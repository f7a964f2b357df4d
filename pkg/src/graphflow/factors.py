"""Constant-curvature factor manifolds in fixed charts, and their product.

Every kind carries a closed-form metric and metric derivative; Christoffel
symbols follow from those, and the Riemann tensor is assembled from the
constant sectional curvature rather than by differentiating.

Array conventions used throughout the package (``d`` = factor dimension):

* ``metric(x)[..., i, j]``            g_ij
* ``metric_derivative(x)[..., i, j, k]``  ∂_k g_ij
* ``christoffel(x)[..., k, i, j]``     Γ^k_ij
* ``riemann[i, j, k, l]``             R_ijkl = K (g_ik g_jl - g_il g_jk)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DomainError, InvalidFrameError

KINDS = ("flat-torus", "euclidean-chart", "round-sphere", "hyperbolic-disk")
FLAT_KINDS = ("flat-torus", "euclidean-chart")


@dataclass(frozen=True)
class FactorManifold:
    """A Riemannian factor Σ in its fixed chart.

    ``scale`` is the torus period (every axis), the sphere radius, or the
    curvature magnitude k of the hyperbolic disk (sectional curvature -k).
    ``domain`` is an optional ``((lo, hi), ...)`` box for the euclidean chart.
    Sphere charts use (colatitude, longitude).
    """

    kind: str
    dim: int
    scale: float = 1.0
    domain: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown factor kind {self.kind!r}; expected one of {KINDS}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ValueError("scale must be a positive finite real")
        if self.kind == "round-sphere" and self.dim != 2:
            raise ValueError("round-sphere charts are 2-dimensional (colatitude, longitude)")
        if self.domain is not None:
            dom = tuple((float(lo), float(hi)) for lo, hi in self.domain)
            if len(dom) != self.dim or any(hi <= lo for lo, hi in dom):
                raise ValueError("domain must be one (lo, hi) pair per axis with lo < hi")
            object.__setattr__(self, "domain", dom)

    # -- scalar curvature data -------------------------------------------
    @property
    def is_flat(self) -> bool:
        return self.kind in FLAT_KINDS

    @property
    def sectional_curvature(self) -> float:
        if self.is_flat or self.dim == 1:
            return 0.0
        if self.kind == "round-sphere":
            return 1.0 / self.scale**2
        return -self.scale

    @property
    def ricci_constant(self) -> float:
        """Ricci = ricci_constant * g."""
        return (self.dim - 1) * self.sectional_curvature

    # -- vectorised chart tensors ------------------------------------------
    def metric(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        d = self.dim
        if self.is_flat:
            return np.broadcast_to(np.eye(d), lead + (d, d))
        if self.kind == "round-sphere":
            r2 = self.scale**2
            g = np.zeros(lead + (2, 2))
            g[..., 0, 0] = r2
            g[..., 1, 1] = r2 * np.sin(x[..., 0]) ** 2
            return g
        conf = self._hyperbolic_conformal(x)
        return conf[..., None, None] * np.eye(d)

    def metric_derivative(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        d = self.dim
        dg = np.zeros(lead + (d, d, d))
        if self.is_flat:
            return dg
        if self.kind == "round-sphere":
            th = x[..., 0]
            dg[..., 1, 1, 0] = self.scale**2 * 2.0 * np.sin(th) * np.cos(th)
            return dg
        conf = self._hyperbolic_conformal(x)
        grad_sigma = self._hyperbolic_log_grad(x)
        # ∂_k g_ij = 2 ∂_k σ g_ij for g = e^{2σ} δ
        dg[...] = (2.0 * conf)[..., None, None, None] * np.eye(d)[..., None] * grad_sigma[..., None, None, :]
        return dg

    def christoffel(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        d = self.dim
        gam = np.zeros(lead + (d, d, d))
        if self.is_flat:
            return gam
        if self.kind == "round-sphere":
            th = x[..., 0]
            s, c = np.sin(th), np.cos(th)
            gam[..., 0, 1, 1] = -s * c
            cot = c / s
            gam[..., 1, 0, 1] = cot
            gam[..., 1, 1, 0] = cot
            return gam
        sig = self._hyperbolic_log_grad(x)
        eye = np.eye(d)
        # Γ^k_ij = δ_ik σ_j + δ_jk σ_i - δ_ij σ_k
        gam = (
            np.einsum("ki,...j->...kij", eye, sig)
            + np.einsum("kj,...i->...kij", eye, sig)
            - np.einsum("ij,...k->...kij", eye, sig)
        )
        return gam

    def _hyperbolic_conformal(self, x):
        rr = np.sum(x * x, axis=-1)
        return 4.0 / (self.scale * (1.0 - rr) ** 2)

    def _hyperbolic_log_grad(self, x):
        rr = np.sum(x * x, axis=-1)
        return 2.0 * x / (1.0 - rr)[..., None]

    # -- domain ---------------------------------------------------------------
    def check_point(self, x, margin: float = 0.0):
        """Raise :class:`DomainError` unless ``x`` lies inside the chart domain."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise DomainError(f"expected a point with {self.dim} coordinates, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("chart point has non-finite coordinates")
        if self.kind == "round-sphere":
            if not (margin < x[0] < math.pi - margin):
                raise DomainError(f"colatitude {x[0]:.6g} outside (0, pi) minus polar margin {margin:g}")
        elif self.kind == "hyperbolic-disk":
            if float(np.dot(x, x)) >= (1.0 - margin) ** 2:
                raise DomainError(f"point {x} outside the Poincare disk")
        elif self.kind == "euclidean-chart" and self.domain is not None:
            for (lo, hi), xi in zip(self.domain, x):
                if not (lo <= xi <= hi):
                    raise DomainError(f"point {x} outside chart box {self.domain}")


@dataclass(frozen=True)
class CurvatureData:
    metric: np.ndarray
    inverse_metric: np.ndarray
    christoffels: np.ndarray
    riemann: np.ndarray
    ricci: np.ndarray
    sectional: Callable = field(repr=False)


def riemann_from_constant(K: float, g: np.ndarray) -> np.ndarray:
    """R_ijkl = K (g_ik g_jl - g_il g_jk), vectorised over leading axes."""
    return K * (np.einsum("...ik,...jl->...ijkl", g, g) - np.einsum("...il,...jk->...ijkl", g, g))


def curvature_data(manifold: FactorManifold, x) -> CurvatureData:
    manifold.check_point(x)
    x = np.asarray(x, dtype=float)
    g = manifold.metric(x)
    ginv = np.linalg.inv(g)
    gam = manifold.christoffel(x)
    riem = riemann_from_constant(manifold.sectional_curvature, g)
    ricci = np.einsum("ik,ijkl->jl", ginv, riem)

    def sectional(u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        num = np.einsum("ijkl,i,j,k,l->", riem, u, v, u, v)
        den = (u @ g @ u) * (v @ g @ v) - (u @ g @ v) ** 2
        if den <= 1e-300:
            raise ValueError("vectors do not span a 2-plane")
        return float(num / den)

    return CurvatureData(g, ginv, gam, riem, ricci, sectional)


@dataclass(frozen=True)
class ProductSpace:
    """Σ₁ × Σ₂ with pseudo-metric g₁ - g₂/ρ.

    ``rho = inf`` switches the Σ₂ metric off; it is only meaningful for the
    homotopy certificate and is rejected wherever a genuine Σ₂ metric is needed.
    """

    sigma1: FactorManifold
    sigma2: FactorManifold
    rho: float = 1.0

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("rho must be positive (or +inf)")

    @property
    def m(self) -> int:
        return self.sigma1.dim

    @property
    def n(self) -> int:
        return self.sigma2.dim

    @property
    def has_target_metric(self) -> bool:
        return math.isfinite(self.rho)

    def _require_metric(self):
        if not self.has_target_metric:
            raise ValueError("rho=+inf disables the Sigma_2 metric; operation needs a genuine metric")

    def metric1(self, x):
        return self.sigma1.metric(x)

    def metric2(self, y):
        self._require_metric()
        return self.sigma2.metric(y) / self.rho

    def metric2_derivative(self, y):
        self._require_metric()
        return self.sigma2.metric_derivative(y) / self.rho

    @property
    def K1(self) -> float:
        return self.sigma1.sectional_curvature

    @property
    def K2(self) -> float:
        """Sectional curvature of the rescaled target metric g₂/ρ."""
        self._require_metric()
        return self.rho * self.sigma2.sectional_curvature

    def pseudo_metric(self, x, y) -> np.ndarray:
        """Block matrix diag(g₁, -g₂/ρ) at (x, y)."""
        g1 = self.metric1(x)
        g2 = self.metric2(y)
        m, n = self.m, self.n
        lead = g1.shape[:-2]
        G = np.zeros(lead + (m + n, m + n))
        G[..., :m, :m] = g1
        G[..., m:, m:] = -g2
        return G

    def riemannian_metric(self, x, y) -> np.ndarray:
        """The associated positive metric g₁ + g₂/ρ."""
        G = self.pseudo_metric(x, y)
        G[..., self.m:, self.m:] *= -1.0
        return G


def product_projectors(space: ProductSpace, base_point, tangent_frame, normal_frame, tol: float = 1e-8):
    """Tangent/normal projectors of the product tangent space for a ḡ-orthonormal frame.

    ``base_point`` is ``(x, y)``; frames are given as lists of (m+n)-vectors.
    Returns ``(P_tan, P_nor)`` as matrices acting on column vectors.
    """
    x, y = base_point
    G = space.pseudo_metric(np.asarray(x, float), np.asarray(y, float))
    E_t = np.atleast_2d(np.asarray(tangent_frame, dtype=float)).T
    E_n = np.asarray(normal_frame, dtype=float)
    E_n = E_n.reshape(-1, space.m + space.n).T if E_n.size else np.zeros((space.m + space.n, 0))
    if E_t.shape != (space.m + space.n, space.m) or E_n.shape != (space.m + space.n, space.n):
        raise InvalidFrameError("frame sizes do not match the product dimensions")
    E = np.hstack([E_t, E_n])
    gram = E.T @ G @ E
    sig = np.diag(np.r_[np.ones(space.m), -np.ones(space.n)])
    err = np.max(np.abs(gram - sig))
    if err > tol:
        raise InvalidFrameError(f"frame is not g-bar orthonormal (deviation {err:.3e})")
    P_tan = E_t @ E_t.T @ G
    P_nor = -E_n @ E_n.T @ G
    return P_tan, P_nor
