import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow.discretization import (Grid, MapField, jets, laplace_beltrami, refinement_order, refinement_study,
                                      volume)
from graphflow.errors import DataError, NotSpacelikeError
from graphflow import presets

TWO_PI = 2 * math.pi


def eye_field(grid, scale=1.0):
    return np.broadcast_to(scale * np.eye(grid.dim), grid.shape + (grid.dim, grid.dim)).copy()


class TestJets:
    def test_constant(self):
        g = Grid.periodic(32, dim=2)
        J = jets(presets.constant(g, [1.5, -2.0]))
        assert np.all(J.df == 0) and np.all(J.d2f == 0)

    def test_sine_first_derivative_bound(self):
        g = Grid.periodic(256)
        x = g.coords()[..., 0]
        J = jets(MapField(g, np.sin(x)))
        h = TWO_PI / 256
        assert np.max(np.abs(J.df[:, 0, 0] - np.cos(x))) <= h * h / 6 * (1 + 1e-6)

    def test_linear_wrap_exact(self):
        g = Grid.periodic(64)
        J = jets(presets.linear_wrap(g, 0.5))
        assert np.all(J.df == 0.5)
        assert np.all(J.d2f == 0)

    def test_mixed_partials_symmetric(self):
        g = Grid.periodic((24, 20))
        X = g.coords()
        J = jets(MapField(g, np.sin(X[..., 0]) * np.cos(2 * X[..., 1]) + np.cos(X[..., 0] + X[..., 1])))
        np.testing.assert_array_equal(J.d2f, np.swapaxes(J.d2f, -1, -2))

    def test_non_finite(self):
        g = Grid.periodic(16)
        v = np.zeros(16)
        v[5] = np.nan
        with pytest.raises(DataError, match="node"):
            jets(MapField(g, v))

    def test_bounded_chart_marks_stencil_nodes(self):
        g = Grid.box([0, 0], [1, 1], 11)
        J = jets(MapField(g, g.coords()[..., 0] ** 2))
        assert not J.valid[0].any() and not J.valid[:, -1].any()
        assert J.valid[1:-1, 1:-1].all()
        np.testing.assert_allclose(J.d2f[J.valid][:, 0, 0, 0], 2.0, atol=1e-10)

    def test_sphere_jets_through_poles(self):
        # f = cos θ extended across the pole with the longitude shift keeps a smooth jet
        errs = []
        for nl in (16, 32, 64):
            g = Grid.sphere(nl)
            th = g.coords()[..., 0]
            J = jets(MapField(g, np.cos(th)))
            errs.append(np.max(np.abs(J.d2f[..., 0, 0, 0] + np.cos(th))))
        ro = refinement_order(errs, [math.pi / 16, math.pi / 32, math.pi / 64])
        assert ro.order == pytest.approx(2.0, abs=0.1)


class TestLaplaceBeltrami:
    def test_constant_is_exact(self):
        g = Grid.periodic(32, dim=2)
        assert np.all(laplace_beltrami(np.full(g.shape, 3.0), eye_field(g), g) == 0)

    def test_flat_torus(self):
        errs = []
        for n in (32, 64):
            g = Grid.periodic(n, dim=2)
            X = g.coords()
            u = np.sin(X[..., 0]) * np.sin(X[..., 1])
            errs.append(np.max(np.abs(laplace_beltrami(u, eye_field(g), g) + 2 * u)))
        # nested centred differences: leading error 2·(2h)²/6 for this mode
        assert errs[0] < 2 * (2 * TWO_PI / 32) ** 2 / 6 * 1.01
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)

    def test_conformal_one_dimensional(self):
        g = Grid.periodic(128)
        x = g.coords()[..., 0]
        L = laplace_beltrami(np.sin(x), eye_field(g, 4.0), g)
        assert np.max(np.abs(L + 0.25 * np.sin(x))) < 1e-3

    def test_round_sphere_eigenfunction(self):
        # Δ cos θ = −2 cos θ on S²(1); the pole ghost rows keep this O(h²) up to the poles
        errs = []
        for nl in (16, 32, 64):
            g = Grid.sphere(nl)
            th = g.coords()[..., 0]
            G = np.zeros(g.shape + (2, 2))
            G[..., 0, 0] = 1.0
            G[..., 1, 1] = np.sin(th) ** 2
            errs.append(np.max(np.abs(laplace_beltrami(np.cos(th), G, g) + 2 * np.cos(th))))
        ro = refinement_order(errs, [1 / 16, 1 / 32, 1 / 64])
        assert ro.order == pytest.approx(2.0, abs=0.3)

    def test_rejects_indefinite(self):
        g = Grid.periodic(8)
        G = eye_field(g)
        G[3] = -1.0
        with pytest.raises(NotSpacelikeError):
            laplace_beltrami(np.zeros(8), G, g)

    @settings(max_examples=20, deadline=None)
    @given(a=st.floats(-0.5, 0.5), b=st.floats(-0.5, 0.5), k=st.integers(1, 3))
    def test_integration_by_parts(self, a, b, k):
        def asym(n):
            g = Grid.periodic(n, dim=2)
            X = g.coords()
            G = np.zeros(g.shape + (2, 2))
            G[..., 0, 0] = 1 + a * np.sin(X[..., 0])
            G[..., 1, 1] = 1 + b * np.cos(X[..., 1])
            G[..., 0, 1] = G[..., 1, 0] = 0.2 * np.sin(X[..., 0] + X[..., 1])
            w = np.sqrt(np.linalg.det(G))
            u = np.sin(k * X[..., 0]) + np.cos(X[..., 1])
            v = np.cos(X[..., 0] - 2 * X[..., 1])
            lhs = np.sum(laplace_beltrami(u, G, g) * v * w)
            rhs = np.sum(u * laplace_beltrami(v, G, g) * w)
            return abs(lhs - rhs) * g.cell_measure

        e1, e2 = asym(24), asym(48)
        assert e2 < 1e-2
        assert e2 <= e1 / 3.0 or e2 < 1e-10

    def test_maximum_principle(self):
        g = Grid.periodic(64, dim=2)
        X = g.coords()
        u = np.exp(np.cos(X[..., 0]) + np.cos(X[..., 1]))
        G = eye_field(g)
        G[..., 0, 1] = G[..., 1, 0] = 0.3
        L = laplace_beltrami(u, G, g)
        i = np.unravel_index(np.argmax(u), u.shape)
        assert L[i] <= 1e-2 * g.h_min**2


class TestVolume:
    def test_flat_torus_constant(self):
        g = Grid.periodic(32, dim=2)
        v, v1 = volume(eye_field(g), g, eye_field(g))
        assert v == pytest.approx(4 * math.pi**2, rel=1e-14)
        assert v1 == v

    def test_slope_graph(self):
        g = Grid.periodic(64)
        v, _ = volume(eye_field(g, 1 - 0.36), g)
        assert v == pytest.approx(TWO_PI * 0.8, rel=1e-14)

    def test_unit_sphere(self):
        errs = []
        for nl in (16, 32, 64):
            g = Grid.sphere(nl)
            th = g.coords()[..., 0]
            G = np.zeros(g.shape + (2, 2))
            G[..., 0, 0] = 1.0
            G[..., 1, 1] = np.sin(th) ** 2
            errs.append(abs(volume(G, g)[0] - 4 * math.pi))
        assert errs[-1] < 1e-2
        assert refinement_order(errs, [4, 2, 1]).order == pytest.approx(2.0, abs=0.1)

    def test_non_spacelike(self):
        g = Grid.periodic(8)
        with pytest.raises(NotSpacelikeError):
            volume(eye_field(g, -1.0), g)


class TestRefinement:
    @staticmethod
    def _deriv_error(grid):
        x = grid.coords()[..., 0]
        return np.max(np.abs(jets(MapField(grid, np.sin(x))).df[:, 0, 0] - np.cos(x)))

    def test_second_order(self):
        ro = refinement_study(self._deriv_error, [Grid.periodic(n) for n in (32, 64, 128)])
        assert not ro.inconclusive
        assert ro.order == pytest.approx(2.0, abs=0.1)

    def test_fourth_order(self):
        ro = refinement_study(self._deriv_error, [Grid.periodic(n, order=4) for n in (16, 32, 64)])
        assert ro.order == pytest.approx(4.0, abs=0.2)

    def test_exact_quantity_is_inconclusive(self):
        def err(grid):
            return np.max(np.abs(jets(presets.linear_wrap(grid, 0.5)).df - 0.5))

        assert refinement_study(err, [Grid.periodic(n) for n in (16, 32, 64)]).inconclusive

    def test_non_monotone_is_inconclusive(self):
        assert refinement_order([1e-3, 2e-3, 1e-4], [0.1, 0.05, 0.025]).inconclusive

    def test_refined_grid(self):
        g = Grid.sphere(16, polar_band=0.3)
        r = g.refined()
        assert r.shape == (32, 64) and r.polar_band == 0.3
        assert r.spacing[0] == pytest.approx(g.spacing[0] / 2)


class TestGridDescriptor:
    @pytest.mark.parametrize("grid", [Grid.periodic((8, 12), 3.0), Grid.sphere(10, polar_band=0.2, order=4),
                                      Grid.box([0, -1], [2, 1], (5, 7))])
    def test_round_trip(self, grid):
        assert Grid.from_descriptor(grid.descriptor()) == grid

    def test_sphere_excludes_poles(self):
        th = Grid.sphere(8).coords()[..., 0]
        assert th.min() > 0 and th.max() < math.pi

    def test_eval_mask_band(self):
        g = Grid.sphere(32, polar_band=math.pi / 6)
        th = g.coords()[..., 0]
        m = g.eval_mask()
        assert np.all(np.sin(th[m]) >= 0.5 - 1e-12)
        assert np.any(~m)
