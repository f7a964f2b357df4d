import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graphflow import presets
from graphflow.diagnostics import decay_fit, field_geometry
from graphflow.discretization import Grid, refinement_order
from graphflow.errors import (CheckpointFormatError, CheckpointVersionError, NotSpacelikeError,
                              SpacelikeGuardError)
from graphflow.factors import FactorManifold, ProductSpace
from graphflow.flow import (FlowConfig, GraphState, adaptive_dt, checkpoint_load, checkpoint_save, classify,
                            kinematics, normal_velocity_check, polar_filter, run, step, tension_velocity)

TWO_PI = 2 * math.pi


def line_space(target="euclidean-chart", scale=1.0):
    return ProductSpace(FactorManifold("flat-torus", 1), FactorManifold(target, 1, scale))


def plane_space():
    return ProductSpace(FactorManifold("flat-torus", 2), FactorManifold("euclidean-chart", 2))


def sphere_space(rho=1.0):
    return ProductSpace(FactorManifold("round-sphere", 2, 1.0), FactorManifold("round-sphere", 2, 2.0), rho)


def sinusoid_state(n=64, amp=0.3):
    return GraphState(presets.sinusoid(Grid.periodic(n), amp), line_space())


class TestConfig:
    @pytest.mark.parametrize("kw", [{"cfl": 0.0}, {"cfl": 1.5}, {"t_max": -1.0}, {"tol_H": 0.0},
                                    {"monitor_stride": 0}, {"checkpoint_stride": -1}])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            FlowConfig(**kw)

    def test_defaults(self):
        c = FlowConfig()
        assert c.cfl == 0.2 and c.tol_H == 1e-8 and c.tol_osc == 1e-8 and c.guard_margin == 1e-6


class TestKinematics:
    def test_one_dimensional_velocity(self):
        # for a curve in a Lorentzian plane the velocity is f'' / (1 − f'²)
        errs = []
        for n in (64, 128):
            g = Grid.periodic(n)
            x = g.coords()[..., 0]
            a = 0.4
            v = tension_velocity(GraphState(presets.sinusoid(g, a), line_space()))[..., 0]
            exact = -a * np.sin(x) / (1 - (a * np.cos(x)) ** 2)
            errs.append(np.max(np.abs(v - exact)))
        assert math.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.1)

    def test_matches_frame_geometry(self):
        # ‖H‖ from the one-pass kinematics against the orthonormal-frame computation
        sp = sphere_space()
        g = Grid.sphere(16)
        st_ = GraphState(presets.sphere_bump(g, sp, 0.25), sp)
        kin = st_.kinematics()
        fg = field_geometry(kin.jets, sp)
        scale = np.max(fg.geo.normH)
        assert np.max(np.abs(np.sqrt(kin.normH2)[fg.mask] - fg.geo.normH)) < 1e-12 * scale

    def test_margin_and_volume_density(self):
        kin = kinematics(presets.linear_wrap(Grid.periodic(32), 0.6), line_space())
        np.testing.assert_allclose(kin.margin, 0.64, rtol=1e-14)
        np.testing.assert_allclose(kin.volume_density(), 0.8, rtol=1e-14)

    def test_slice_has_zero_velocity(self):
        v = tension_velocity(GraphState(presets.constant(Grid.periodic(16, dim=2), [1.0, 2.0]), plane_space()))
        assert np.all(v == 0)

    def test_guard(self):
        with pytest.raises(SpacelikeGuardError):
            tension_velocity(sinusoid_state(amp=0.3), guard=0.95)


class TestAdaptiveDt:
    def test_flat_formula(self):
        g = Grid.periodic(256)
        s = GraphState(presets.constant(g, [0.0]), line_space())
        h = TWO_PI / 256
        assert adaptive_dt(s, FlowConfig(cfl=0.2, t_max=1.0)) == pytest.approx(0.2 * h * h / 2, rel=1e-14)

    def test_two_dimensions_halves(self):
        g = Grid.periodic(64, dim=2)
        s2 = GraphState(presets.constant(g, [0.0, 0.0]), plane_space())
        s1 = GraphState(presets.constant(Grid.periodic(64), [0.0]), line_space())
        cfg = FlowConfig(t_max=1.0)
        assert adaptive_dt(s2, cfg) == pytest.approx(0.5 * adaptive_dt(s1, cfg), rel=1e-14)

    def test_shrinks_with_margin(self):
        cfg = FlowConfig(t_max=1.0)
        dts = []
        for c in (0.9, 0.99, 0.999):
            s = GraphState(presets.linear_wrap(Grid.periodic(32), c), line_space())
            dts.append(adaptive_dt(s, cfg) / (1 - c * c))
        np.testing.assert_allclose(dts, dts[0], rtol=1e-12)

    def test_capped_by_remaining_time(self):
        s = GraphState(presets.constant(Grid.periodic(16), [0.0]), line_space(), t=0.999999)
        assert adaptive_dt(s, FlowConfig(t_max=1.0)) == pytest.approx(1e-6, rel=1e-6)


class TestStep:
    def test_slice_is_fixed(self):
        s = GraphState(presets.constant(Grid.periodic(16, dim=2), [0.5, 0.5]), plane_space())
        new = step(s, 0.37)
        np.testing.assert_array_equal(new.field.values, s.field.values)
        assert new.t == 0.37 and new.step == 1

    def test_maximal_wrap_is_fixed(self):
        s = GraphState(presets.linear_wrap(Grid.periodic(32), 0.5), line_space("flat-torus", math.pi))
        new = step(s, 0.01)
        np.testing.assert_array_equal(new.field.values, s.field.values)

    def test_guard_after_halvings(self):
        with pytest.raises(SpacelikeGuardError, match="8 step halvings"):
            step(sinusoid_state(32, 0.95), 10.0, FlowConfig())

    def test_halving_recovers(self):
        # a slightly too long step is accepted after rejection
        s = sinusoid_state(32, 0.95)
        new = step(s, 1.0, FlowConfig())
        assert new.t < 1.0 and new.kinematics().min_margin >= 1e-6

    def test_midpoint_second_order_in_time(self):
        s = sinusoid_state(32, 0.3)
        dt0 = adaptive_dt(s, FlowConfig(t_max=1.0))
        T = 40 * dt0

        def advance(k):
            st_ = s
            for _ in range(k):
                st_ = step(st_, T / k)
            return st_.field.values

        ref = advance(640)
        e = [np.max(np.abs(advance(k) - ref)) for k in (20, 40)]
        assert math.log2(e[0] / e[1]) == pytest.approx(2.0, abs=0.25)


class TestClassify:
    def test_slice(self):
        s = GraphState(presets.constant(Grid.periodic(8), [1.0]), line_space())
        assert classify(s, FlowConfig()) == "slice-converged"

    def test_maximal(self):
        s = GraphState(presets.linear_wrap(Grid.periodic(16), 0.5), line_space("flat-torus", math.pi))
        assert classify(s, FlowConfig()) == "maximal-converged"

    def test_t_max_and_steps(self):
        s = sinusoid_state()
        assert classify(s, FlowConfig(t_max=1.0)) is None
        assert classify(GraphState(s.field, s.space, t=1.0), FlowConfig(t_max=1.0)) == "t_max-reached"
        assert classify(GraphState(s.field, s.space, step=5), FlowConfig(max_steps=5)) == "t_max-reached"


class TestRun:
    def test_rejects_non_spacelike_start(self):
        with pytest.raises(NotSpacelikeError):
            run(sinusoid_state(amp=1.2), FlowConfig())

    def test_sinusoid_decays_to_slice(self):
        tr = run(sinusoid_state(64, 0.05), FlowConfig(cfl=0.8, t_max=30.0, tol_H=1e-10, monitor_stride=50))
        assert tr.termination == "slice-converged"
        assert all(r.monotonicity_ok for r in tr.records)
        fit = decay_fit(tr)
        # cosh θ − 1 ≈ ½ f'² decays like e^{−2t} for the first mode
        assert fit.rate == pytest.approx(2.0, abs=0.1)
        assert tr.records[-1].t == tr.final.t

    def test_records_are_strided(self):
        tr = run(sinusoid_state(32, 0.1), FlowConfig(t_max=0.5, monitor_stride=7))
        steps = [r.step for r in tr.records]
        assert all(s % 7 == 0 for s in steps[:-1])
        assert steps[-1] == tr.final.step

    def test_deterministic(self):
        cfg = FlowConfig(t_max=0.3, monitor_stride=10)
        a = run(sinusoid_state(32, 0.2), cfg)
        b = run(sinusoid_state(32, 0.2), cfg)
        np.testing.assert_array_equal(a.final.field.values, b.final.field.values)
        rows_a = np.array([r.row() for r in a.records], dtype=float)
        rows_b = np.array([r.row() for r in b.records], dtype=float)
        np.testing.assert_array_equal(rows_a, rows_b)

    def test_resume_reproduces_uninterrupted_run(self, tmp_path):
        cfg = FlowConfig(t_max=0.4, monitor_stride=5)
        full = run(sinusoid_state(32, 0.2), cfg)
        ck = tmp_path / "ck.gfc"
        part = run(sinusoid_state(32, 0.2), FlowConfig(t_max=0.4, monitor_stride=5, max_steps=40),
                   checkpoint=(ck, 40))
        assert part.final.step == 40
        state, meta = checkpoint_load(ck, with_meta=True)
        rest = run(state, cfg, resume_meta=meta)
        assert rest.final.step == full.final.step
        np.testing.assert_allclose(rest.final.field.values, full.final.field.values, rtol=0, atol=1e-12)
        assert rest.final.t == pytest.approx(full.final.t, abs=1e-12)
        assert rest.meta["int_H2_dvol"] == pytest.approx(full.meta["int_H2_dvol"], rel=1e-12)

    def test_wrap_converges_to_totally_geodesic(self):
        s = GraphState(presets.linear_wrap(Grid.periodic(32), 0.5, 0.02), line_space("flat-torus", math.pi))
        tr = run(s, FlowConfig(cfl=0.8, t_max=60.0, monitor_stride=200))
        assert tr.termination == "maximal-converged"
        assert tr.records[-1].max_B2 < 1e-8
        assert tr.final.oscillation() > 1.0


class TestPolarFilter:
    def test_noop_off_sphere(self):
        g = Grid.periodic(8, dim=2)
        v = np.random.default_rng(0).normal(size=g.shape + (2,))
        assert polar_filter(v, g) is v

    def test_keeps_smooth_modes_and_scales_polar_noise(self):
        g = Grid.sphere(32)
        th, ph = g.coords()[..., 0], g.coords()[..., 1]
        smooth = np.stack([np.cos(th), np.sin(th) * np.cos(ph)], axis=-1)
        np.testing.assert_allclose(polar_filter(smooth, g), smooth, atol=1e-13)
        noise = np.zeros(g.shape + (1,))
        noise[:, ::2, 0] = 1.0
        noise[:, 1::2, 0] = -1.0
        out = polar_filter(noise, g)
        # the zigzag is the stiffest mode, sin(kΔφ/2) = 1: scaled by s², never removed
        s = np.minimum(1.0, np.sin(g.axis_coords(0)) * g.spacing[1] / g.spacing[0])
        np.testing.assert_allclose(out[..., 0], noise[..., 0] * (s**2)[:, None], atol=1e-12)
        assert np.all(np.abs(out[0]) > 0)

    def test_filtered_flow_leaves_no_polar_equilibrium(self):
        # truncating polar modes used to freeze a k = 2 ripple in the first row
        sp = sphere_space()
        g = Grid.sphere(16, polar_band=math.pi / 6)
        tr = run(GraphState(presets.sphere_bump(g, sp, 0.25), sp),
                 FlowConfig(cfl=0.8, t_max=20.0, monitor_stride=10**6))
        assert tr.termination == "slice-converged" and tr.final.t < 12.0


class TestNormalVelocity:
    def test_second_order_on_sphere(self):
        sp = sphere_space()
        errs, hs = [], []
        for nl in (16, 32):
            g = Grid.sphere(nl, polar_band=math.pi / 6)
            errs.append(normal_velocity_check(GraphState(presets.sphere_bump(g, sp, 0.25), sp)))
            hs.append(g.h_min)
        assert refinement_order(errs, hs).order == pytest.approx(2.0, abs=0.3)

    def test_rejects_non_spacelike(self):
        with pytest.raises(NotSpacelikeError):
            normal_velocity_check(sinusoid_state(amp=1.1))


class TestCheckpoint:
    def state(self):
        sp = sphere_space(4.0)
        g = Grid.sphere(8, polar_band=0.25)
        return GraphState(presets.sphere_bump(g, sp, 0.1), sp, t=0.123456789, step=17)

    def test_round_trip_bitwise(self, tmp_path):
        s = self.state()
        p = tmp_path / "a.gfc"
        checkpoint_save(s, p, meta={"x": 1.0 / 3.0, "inf": math.inf, "flag": True})
        r, meta = checkpoint_load(p, with_meta=True)
        np.testing.assert_array_equal(r.field.values, s.field.values)
        assert r.t == s.t and r.step == s.step
        assert r.grid == s.grid and r.space == s.space
        assert meta == {"x": 1.0 / 3.0, "inf": math.inf, "flag": True}

    def test_winding_round_trip(self, tmp_path):
        s = GraphState(presets.linear_wrap(Grid.periodic(16), 0.5), line_space("flat-torus", math.pi))
        checkpoint_save(s, tmp_path / "w.gfc")
        np.testing.assert_array_equal(checkpoint_load(tmp_path / "w.gfc").field.winding, s.field.winding)

    def test_truncated(self, tmp_path):
        p = tmp_path / "a.gfc"
        checkpoint_save(self.state(), p)
        data = p.read_bytes()
        for cut in (10, len(data) // 2, len(data) - 1):
            p.write_bytes(data[:cut])
            with pytest.raises(CheckpointFormatError):
                checkpoint_load(p)

    def test_corrupt_payload(self, tmp_path):
        p = tmp_path / "a.gfc"
        checkpoint_save(self.state(), p)
        data = bytearray(p.read_bytes())
        data[-20] ^= 0x40
        p.write_bytes(bytes(data))
        with pytest.raises(CheckpointFormatError, match="CRC"):
            checkpoint_load(p)

    def test_version_and_magic(self, tmp_path):
        p = tmp_path / "a.gfc"
        checkpoint_save(self.state(), p)
        data = bytearray(p.read_bytes())
        bad = bytearray(data)
        bad[8] = 9
        p.write_bytes(bytes(bad))
        with pytest.raises(CheckpointVersionError):
            checkpoint_load(p)
        bad = bytearray(data)
        bad[0:4] = b"NOPE"
        p.write_bytes(bytes(bad))
        with pytest.raises(CheckpointFormatError, match="magic"):
            checkpoint_load(p)


@settings(max_examples=15, deadline=None)
@given(amp=st.floats(0.05, 0.8), mode=st.integers(1, 3))
def test_one_step_keeps_maximum_principle(amp, mode):
    # max cosh θ does not grow over one admissible step
    g = Grid.periodic(48)
    s = GraphState(presets.sinusoid(g, amp / mode, mode), line_space())
    new = step(s, adaptive_dt(s, FlowConfig(t_max=1.0)))
    assert new.kinematics().min_margin >= s.kinematics().min_margin - 1e-12


def test_sinusoid_preset_is_periodic_on_any_torus():
    g = Grid.periodic(32, 1.0)
    v = presets.sinusoid(g, 0.05).values[:, 0]
    x = g.coords()[:, 0]
    np.testing.assert_allclose(v, 0.05 * np.sin(TWO_PI * x), atol=1e-16)
    sp = ProductSpace(FactorManifold("flat-torus", 1, 1.0), FactorManifold("euclidean-chart", 1))
    tr = run(GraphState(presets.sinusoid(g, 0.005), sp), FlowConfig(cfl=0.8, t_max=2.0, tol_H=1e-10,
                                                                       monitor_stride=20))
    # first mode on a unit circle: cosh θ − 1 decays at 2·(2π)²
    assert decay_fit(tr).rate == pytest.approx(2 * TWO_PI**2, rel=0.05)
