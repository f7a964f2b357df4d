import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow.errors import DomainError, InvalidFrameError
from graphflow.factors import FactorManifold, ProductSpace, curvature_data, product_projectors


def numeric_christoffel(M, x, h=1e-5):
    """Christoffel symbols from central differences of the metric."""
    d = M.dim
    dg = np.zeros((d, d, d))
    for k in range(d):
        e = np.zeros(d)
        e[k] = h
        dg[k] = (M.metric(x + e) - M.metric(x - e)) / (2 * h)
    ginv = np.linalg.inv(M.metric(x))
    # Γ^i_jk = ½ g^il (∂_j g_lk + ∂_k g_lj − ∂_l g_jk)
    t = np.einsum("jlk->ljk", dg) + np.einsum("klj->ljk", dg) - dg
    return 0.5 * np.einsum("il,ljk->ijk", ginv, t)


def numeric_gauss_curvature_2d(M, x, h=1e-4):
    """Brute-force K of a 2-D chart metric via Christoffel differences."""
    def gam(p):
        return M.christoffel(p)

    G = gam(x)
    dG = np.zeros((2,) + G.shape)
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        dG[k] = (gam(x + e) - gam(x - e)) / (2 * h)
    # R^i_jkl = ∂_k Γ^i_lj − ∂_l Γ^i_kj + Γ^i_km Γ^m_lj − Γ^i_lm Γ^m_kj
    R = (np.einsum("kilj->ijkl", dG) - np.einsum("likj->ijkl", dG)
         + np.einsum("ikm,mlj->ijkl", G, G) - np.einsum("ilm,mkj->ijkl", G, G))
    g = M.metric(x)
    R_low = np.einsum("im,mjkl->ijkl", g, R)
    return R_low[0, 1, 0, 1] / np.linalg.det(g)


class TestCurvatureData:
    def test_flat_torus_is_flat(self):
        cd = curvature_data(FactorManifold("flat-torus", 2, 2 * math.pi), [0.3, 1.7])
        assert np.all(cd.christoffels == 0)
        assert np.all(cd.riemann == 0)
        assert np.all(cd.ricci == 0)

    def test_sphere_radius_two_sectional(self):
        M = FactorManifold("round-sphere", 2, 2.0)
        x = np.array([1.1, 0.4])
        cd = curvature_data(M, x)
        assert cd.sectional([1, 0], [0, 1]) == pytest.approx(0.25, abs=1e-12)
        assert cd.sectional([1, 2], [-0.3, 0.5]) == pytest.approx(0.25, abs=1e-12)
        # oracle: curvature from a differentiated lat-long metric
        assert numeric_gauss_curvature_2d(M, x) == pytest.approx(0.25, abs=1e-7)

    def test_hyperbolic_disk_coordinate_plane(self):
        M = FactorManifold("hyperbolic-disk", 2, 1.0)
        x = np.array([0.2, -0.35])
        cd = curvature_data(M, x)
        assert cd.sectional([1, 0], [0, 1]) == pytest.approx(-1.0, abs=1e-12)
        np.testing.assert_allclose(cd.metric, 4 * np.eye(2) / (1 - x @ x) ** 2, rtol=1e-14)
        assert numeric_gauss_curvature_2d(M, x) == pytest.approx(-1.0, abs=1e-6)

    def test_hyperbolic_scale_sets_curvature(self):
        M = FactorManifold("hyperbolic-disk", 2, 3.0)
        assert M.sectional_curvature == -3.0
        assert numeric_gauss_curvature_2d(M, np.array([0.1, 0.5])) == pytest.approx(-3.0, abs=1e-6)

    def test_riemann_symmetries_and_bianchi(self):
        for M, x in [(FactorManifold("round-sphere", 2, 1.5), [0.9, 2.0]),
                     (FactorManifold("hyperbolic-disk", 3, 0.7), [0.1, 0.2, -0.3])]:
            R = curvature_data(M, x).riemann
            np.testing.assert_array_equal(R, -np.swapaxes(R, 0, 1))
            np.testing.assert_array_equal(R, -np.swapaxes(R, 2, 3))
            np.testing.assert_allclose(R, np.transpose(R, (2, 3, 0, 1)), atol=1e-15)
            bianchi = R + np.transpose(R, (0, 2, 3, 1)) + np.transpose(R, (0, 3, 1, 2))
            assert np.max(np.abs(bianchi)) < 1e-12

    def test_ricci_of_constant_curvature(self):
        M = FactorManifold("hyperbolic-disk", 3, 2.0)
        cd = curvature_data(M, [0.1, 0.0, 0.2])
        np.testing.assert_allclose(cd.ricci, -2.0 * 2 * cd.metric, rtol=1e-12)
        assert M.ricci_constant == -4.0

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            curvature_data(FactorManifold("hyperbolic-disk", 2), [0.8, 0.7])
        with pytest.raises(DomainError):
            curvature_data(FactorManifold("round-sphere", 2), [0.0, 1.0])
        with pytest.raises(DomainError):
            curvature_data(FactorManifold("euclidean-chart", 1, domain=((0, 1),)), [1.5])

    def test_bad_construction(self):
        with pytest.raises(ValueError):
            FactorManifold("klein-bottle", 2)
        with pytest.raises(ValueError):
            FactorManifold("round-sphere", 3)
        with pytest.raises(ValueError):
            FactorManifold("flat-torus", 1, -1.0)


def _random_point(kind, dim, draw_vals):
    v = np.asarray(draw_vals[:dim], dtype=float)
    if kind == "round-sphere":
        return np.array([0.3 + (math.pi - 0.6) * (v[0] % 1.0), 2 * math.pi * (v[1] % 1.0)])
    if kind == "hyperbolic-disk":
        return 0.7 * np.tanh(v) / math.sqrt(dim)
    return v


@settings(max_examples=40, deadline=None)
@given(kind=st.sampled_from(["flat-torus", "euclidean-chart", "round-sphere", "hyperbolic-disk"]),
       dim=st.integers(1, 3), scale=st.floats(0.3, 3.0),
       vals=st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_metric_compatibility(kind, dim, scale, vals):
    if kind == "round-sphere":
        dim = 2
    M = FactorManifold(kind, dim, scale)
    x = _random_point(kind, dim, vals)
    g = M.metric(x)
    assert np.allclose(g, g.T)
    assert np.all(np.linalg.eigvalsh(g) > 0)
    # ∇g = 0 ⇔ Christoffels equal the Levi-Civita symbols of g (FD oracle, O(h²))
    np.testing.assert_allclose(M.christoffel(x), numeric_christoffel(M, x), atol=1e-7 * max(1, np.max(g)))
    if M.is_flat:
        assert np.all(M.christoffel(x) == 0)


def _slope_frame(c):
    s = 1 / math.sqrt(1 - c * c)
    return [np.array([1.0, c]) * s], [np.array([c, 1.0]) * s]


class TestProjectors:
    space = ProductSpace(FactorManifold("euclidean-chart", 1), FactorManifold("euclidean-chart", 1))

    def test_slice_frame(self):
        Pt, Pn = product_projectors(self.space, ([0.0], [0.0]), [[1, 0]], [[0, 1]])
        np.testing.assert_allclose(Pt @ [1, 0], [1, 0])
        np.testing.assert_allclose(Pn @ [1, 0], [0, 0])
        np.testing.assert_allclose(Pt @ [0, 1], [0, 0])
        np.testing.assert_allclose(Pn @ [0, 1], [0, 1])

    def test_tilted_frame_complementary(self):
        t, n = _slope_frame(0.5)
        Pt, Pn = product_projectors(self.space, ([0.0], [0.0]), t, n)
        v = np.array([1.0, 0.0])
        assert np.max(np.abs(Pt @ v + Pn @ v - v)) < 1e-12

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidFrameError):
            product_projectors(self.space, ([0.0], [0.0]), [[1, 0.5]], [[0.5, 1]])

    @settings(max_examples=50, deadline=None)
    @given(c=st.floats(-0.95, 0.95), d=st.floats(-0.9, 0.9), phi=st.floats(0, 2 * math.pi))
    def test_projector_algebra(self, c, d, phi):
        # ḡ-orthonormal frame in ℝ⁴ with signature (2,2): boost in two planes, then a rotation
        sp = ProductSpace(FactorManifold("euclidean-chart", 2), FactorManifold("euclidean-chart", 2))

        def boost(a, i, j):
            B = np.eye(4)
            s = 1 / math.sqrt(1 - a * a)
            B[i, i] = B[j, j] = s
            B[i, j] = B[j, i] = a * s
            return B

        R = np.eye(4)
        R[:2, :2] = [[math.cos(phi), -math.sin(phi)], [math.sin(phi), math.cos(phi)]]
        E = R @ boost(d, 1, 3) @ boost(c, 0, 2)
        Pt, Pn = product_projectors(sp, (np.zeros(2), np.zeros(2)), E[:, :2].T, E[:, 2:].T)
        I = np.eye(4)
        scale = max(1.0, np.max(np.abs(Pt)))
        assert np.max(np.abs(Pt @ Pt - Pt)) < 1e-10 * scale**2
        assert np.max(np.abs(Pn @ Pn - Pn)) < 1e-10 * scale**2
        assert np.max(np.abs(Pt @ Pn)) < 1e-10 * scale**2
        assert np.max(np.abs(Pt + Pn - I)) < 1e-10 * scale


class TestProductSpace:
    def test_signature_and_positive_companion(self):
        sp = ProductSpace(FactorManifold("round-sphere", 2, 1.0), FactorManifold("hyperbolic-disk", 2), 3.0)
        x, y = np.array([1.0, 0.5]), np.array([0.2, 0.1])
        ev = np.linalg.eigvalsh(sp.pseudo_metric(x, y))
        assert np.sum(ev > 0) == 2 and np.sum(ev < 0) == 2
        assert np.all(np.linalg.eigvalsh(sp.riemannian_metric(x, y)) > 0)

    def test_rescaled_target_curvature(self):
        sp = ProductSpace(FactorManifold("round-sphere", 2), FactorManifold("round-sphere", 2, 2.0), 4.0)
        assert sp.K2 == pytest.approx(1.0)
        np.testing.assert_allclose(sp.metric2(np.array([1.0, 0.0])) * 4,
                                   sp.sigma2.metric(np.array([1.0, 0.0])))

    def test_infinite_rho_disables_target_metric(self):
        sp = ProductSpace(FactorManifold("flat-torus", 1), FactorManifold("round-sphere", 2), math.inf)
        assert not sp.has_target_metric
        with pytest.raises(ValueError):
            sp.metric2(np.array([1.0, 0.0]))

    def test_rho_positive(self):
        with pytest.raises(ValueError):
            ProductSpace(FactorManifold("flat-torus", 1), FactorManifold("flat-torus", 1), 0.0)
