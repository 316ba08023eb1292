"""Ground motions, pressure extraction, coefficient series, peaks and comparison rows."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import tied_column
from seiswall.config import RunConfig
from seiswall.constitutive import ElasticParams, K0Profile
from seiswall.mesh import SiteConfig, stage_plan
from seiswall.pipeline import (AnalyticalParams, GroundMotion, MotionFileError, MotionUnits,
                               PressureExtent, PressureRecord, Side, ZeroResultantError,
                               application_height, back_calculate_K, comparison_table,
                               k_h_series, load_ground_motion, lowpass_filter,
                               predominant_frequency, probe_node, run_dynamic, run_static,
                               select_peaks, summarize_observations, synthesize_motion,
                               wall_pressure_profile)
from seiswall.pipeline.motion import design_lowpass
from seiswall.pipeline.postprocess import passive_trend, resultant, wall_face
from seiswall.pipeline.run import build_model
from seiswall.pressure_models import (PressureMode, SeismicCoefficients, WallSoilParams,
                                      mo_coefficient, mo_force)
from seiswall.solvers import DynamicSolveSettings, NewmarkIntegrator, run_staged_construction

REDUCED = SiteConfig(element_size_min=0.5, element_size_max=2.0)
PARAMS = AnalyticalParams(math.radians(40.0), 0.36, 19.62)


def write(tmp_path, text, name="rec.txt"):
    p = tmp_path / name
    p.write_text(text)
    return p


def fitted_amplitude(x, f, dt):
    t = np.arange(x.size) * dt
    A = np.column_stack([np.sin(2 * np.pi * f * t), np.cos(2 * np.pi * f * t)])
    return float(np.hypot(*np.linalg.lstsq(A, x, rcond=None)[0]))


# ---------------------------------------------------------------------------
# Motions
# ---------------------------------------------------------------------------

class TestLoadGroundMotion:
    def test_three_sample_file(self, tmp_path):
        m = load_ground_motion(write(tmp_path, "0,0\n0.01,1\n0.02,0\n"), units="m/s2")
        assert m.dt == pytest.approx(0.01, abs=1e-15)
        assert m.pga == pytest.approx(1 / 9.81, rel=1e-15)

    def test_jittered_time_step_rejected(self, tmp_path):
        with pytest.raises(MotionFileError):
            load_ground_motion(write(tmp_path, "0 0\n0.01 1\n0.02 0\n0.030004 1\n"), units="g")

    def test_g_passthrough(self, tmp_path):
        m = load_ground_motion(write(tmp_path, "# header\nunits=g\n0 0.1\n0.02 -0.25\n0.04 0.2\n"))
        assert m.pga == 0.25 and m.units is MotionUnits.G

    def test_single_column_with_dt_header(self, tmp_path):
        m = load_ground_motion(write(tmp_path, "dt=0.005\nunits=m/s2\n1\n2\n3\n"))
        assert m.dt == 0.005 and m.samples.size == 3
        np.testing.assert_allclose(m.accel_ms2, [1, 2, 3])

    @pytest.mark.parametrize("text, units", [
        ("", "g"),
        ("0 0\n0.01 1\n", None),
        ("units=g\n0 0\n0.01 1\n", "m/s2"),
        ("units=g\n1\n2\n", None),
        ("0 0 0\n0.01 1 2\n", "g"),
        ("0 a\n", "g"),
    ])
    def test_malformed(self, tmp_path, text, units):
        with pytest.raises(MotionFileError):
            load_ground_motion(write(tmp_path, text), units=units)

    def test_missing_file(self, tmp_path):
        with pytest.raises(MotionFileError):
            load_ground_motion(tmp_path / "nope.txt", units="g")


class TestSynthesize:
    def test_harmonic(self):
        m = synthesize_motion("harmonic", 0.2, 2.0, 10.0, dt=0.005)
        assert m.samples.size == 2000
        assert m.pga == pytest.approx(0.2, rel=1e-12)

    def test_ricker_peak(self):
        m = synthesize_motion("ricker", 0.3, 3.0, 4.0)
        assert m.pga == pytest.approx(0.3, rel=1e-12)
        assert m.times[np.argmax(m.samples)] == pytest.approx(0.5, abs=m.dt)

    def test_zero_amplitude(self):
        assert not np.any(synthesize_motion("harmonic", 0.0, 2.0, 1.0).samples)

    @pytest.mark.parametrize("f", [15.0, 20.0])
    def test_frequency_at_cutoff_rejected(self, f):
        with pytest.raises(ValueError):
            synthesize_motion("harmonic", 0.1, f, 1.0)

    def test_scaled_to_pga(self):
        m = synthesize_motion("ricker", 0.3, 3.0, 4.0).scaled_to_pga(0.05)
        assert m.pga == pytest.approx(0.05, rel=1e-12)


class TestLowpass:
    def sine(self, f, dt=0.005, n=4000):
        return GroundMotion(dt, np.sin(2 * np.pi * f * np.arange(n) * dt))

    def test_passband_kept(self):
        out = lowpass_filter(self.sine(2.0)).samples
        assert fitted_amplitude(out, 2.0, 0.005) == pytest.approx(1.0, abs=0.01)

    def test_stopband_removed(self):
        x = self.sine(30.0)
        out = lowpass_filter(x).samples
        spec_in = np.abs(np.fft.rfft(x.samples))
        spec_out = np.abs(np.fft.rfft(out))
        k = np.argmax(spec_in)
        assert spec_out[k] <= 0.01 * spec_in[k]

    def test_dc_unchanged(self):
        out = lowpass_filter(GroundMotion(0.005, np.full(500, 0.3))).samples
        np.testing.assert_allclose(out, 0.3, atol=1e-12)

    def test_attenuation_targets(self):
        from scipy import signal
        d = design_lowpass(0.005)
        f, h = signal.sosfreqz(d.sos, worN=[10.5, 15.0, 30.0], fs=200.0)
        g2 = np.abs(h) ** 2  # forward-backward gain
        assert g2[0] >= 0.99
        assert 20 * np.log10(g2[1]) <= -40.0 and 20 * np.log10(g2[2]) <= -40.0

    def test_cutoff_above_nyquist(self):
        with pytest.raises(ValueError):
            lowpass_filter(self.sine(2.0, dt=0.05), 15.0)

    def test_predominant_frequency(self):
        assert predominant_frequency(self.sine(2.0)) == pytest.approx(2.0, abs=0.05)
        with pytest.raises(ValueError):
            predominant_frequency(GroundMotion(0.01, np.zeros(100)))


# ---------------------------------------------------------------------------
# Resultant, coefficient, height
# ---------------------------------------------------------------------------

class TestArithmetic:
    def test_back_calculated_K(self):
        assert back_calculate_K(141.12, 19.6, 6.0) == pytest.approx(0.4, abs=1e-12)
        assert back_calculate_K(0.0, 19.6, 6.0) == 0.0

    @pytest.mark.parametrize("args", [(1.0, 19.6, 0.0), (1.0, 0.0, 6.0), (1.0, 19.6, 6.0, 1.0)])
    def test_back_calculated_K_rejects(self, args):
        with pytest.raises(ValueError):
            back_calculate_K(*args)

    @pytest.mark.parametrize("phi, k_h", [(30.0, 0.0), (40.0, 0.2), (35.0, 0.1)])
    def test_inverse_of_force(self, phi, k_h):
        p = WallSoilParams.from_degrees(phi, gamma=19.6, height_H=6.0)
        c = SeismicCoefficients(k_h)
        K = mo_coefficient(p, c, PressureMode.ACTIVE)
        assert back_calculate_K(mo_force(p, c, PressureMode.ACTIVE), 19.6, 6.0) == pytest.approx(K, abs=1e-12)

    @given(st.floats(-1e3, 1e3), st.floats(0.1, 30.0), st.floats(1.0, 25.0), st.floats(-0.5, 0.5))
    def test_K_matches_one_line_formula(self, P, gamma, H, k_v):
        assert abs(back_calculate_K(P, gamma, H, k_v) - 2 * P / (gamma * H ** 2 * (1 - k_v))) <= 1e-12 * max(1.0, abs(P))

    def test_two_element_height(self):
        assert application_height([10, 20], [1, 1], [0.5, 1.5]) == pytest.approx(35 / 30, abs=1e-12)

    def test_triangular_profile_third_point(self):
        H, n = 6.0, 12
        h = np.full(n, H / n)
        y = (np.arange(n) + 0.5) * h
        sigma = 19.6 * 0.36 * (H - y)
        assert application_height(sigma, h, y) / H == pytest.approx(1 / 3, rel=0.01)

    def test_trapezoidal_resultant_exact(self):
        # Element-midpoint values of a linear profile integrate it exactly.
        h = np.array([3.0, 3.0])
        y = np.array([1.5, 4.5])
        sigma = 19.6 * 0.36 * (6.0 - y)
        assert resultant(sigma, h) == pytest.approx(0.5 * 19.6 * 0.36 * 36.0, rel=1e-14)

    def test_uniform_profile_half_height(self):
        h = np.array([0.5, 1.0, 1.5, 3.0])
        y = np.cumsum(h) - h / 2
        assert application_height(np.full(4, 7.0), h, y) == pytest.approx(3.0, rel=1e-15)

    def test_zero_resultant(self):
        with pytest.raises(ZeroResultantError):
            application_height([0.0, 0.0], [1, 1], [0.5, 1.5])
        with pytest.raises(ZeroResultantError):
            application_height([5.0, -5.0], [1, 1], [0.5, 1.5])

    @given(arrays(float, 6, elements=st.floats(0.1, 100.0)), arrays(float, 6, elements=st.floats(0.1, 2.0)))
    def test_height_matches_one_line_formula(self, sigma, h):
        y = np.cumsum(h) - h / 2
        ref = float(np.sum(h * sigma * y) / np.sum(h * sigma))
        got = application_height(sigma, h, y)
        assert abs(got - ref) <= 1e-12 * max(1.0, ref)
        assert 0.0 <= got <= h.sum()


class TestSeries:
    def test_k_h_is_acceleration_over_g(self):
        np.testing.assert_array_equal(k_h_series([0.0, 9.81, -4.905]), [0.0, 1.0, -0.5])
        assert not np.any(k_h_series(np.zeros(10)))

    def test_sine_cycle_two_peaks(self):
        t = np.linspace(0.0, 1.0, 201)
        k = 0.3 * np.sin(2 * np.pi * t)
        idx = select_peaks(k)
        assert len(idx) == 2
        np.testing.assert_allclose(k[idx], [0.3, -0.3], atol=1e-12)

    def test_monotone_ramp(self):
        assert select_peaks(np.linspace(-1, 1, 50)).size == 0

    def test_short_series(self):
        assert select_peaks([0.5, 1.0]).size == 0

    @given(st.floats(0.5, 5.0), st.floats(0.5, 5.0), st.floats(0.0, 2 * math.pi),
           st.floats(0.0, 0.2))
    def test_matches_brute_force_scan(self, f1, f2, ph, floor):
        t = np.arange(400) * 0.01
        k = 0.2 * np.sin(2 * np.pi * f1 * t) + 0.1 * np.sin(2 * np.pi * f2 * t + ph)
        ref = [i for i in range(1, len(k) - 1)
               if (k[i] > k[i - 1] and k[i] > k[i + 1] and k[i] >= floor)
               or (k[i] < k[i - 1] and k[i] < k[i + 1] and k[i] <= -floor)]
        assert list(select_peaks(k, floor)) == ref

    def test_noise_floor(self):
        k = np.array([0.0, 0.005, 0.0, -0.005, 0.0, 0.02, 0.0])
        assert list(select_peaks(k)) == [5]


class TestRigidTransmission:
    def test_stiff_column_follows_the_base(self):
        stiff = ElasticParams(1e6, 0.26, 2000.0)
        model = tied_column(4, 4.0, ep=stiff)
        integ = NewmarkIntegrator(model, DynamicSolveSettings(dt=0.005, lateral_boundary="tied"))
        m = synthesize_motion("ricker", 0.2, 2.0, 2.0)
        a = m.accel_ms2
        integ.initialize(a[0])
        top = model.dof_map.eq[model.mesh.boundary_sets["Surface"][0], 0]
        total = [integ.a[top] + a[0]]
        for k in range(1, a.size):
            integ.step(m.dt, a[k])
            total.append(integ.a[top] + a[k])
        assert np.abs(k_h_series(total)).max() == pytest.approx(0.2, rel=0.01)


# ---------------------------------------------------------------------------
# Model-level extraction
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def at_rest_model():
    cfg = RunConfig(site=REDUCED)
    model = build_model(cfg)
    run_staged_construction(model, stage_plan(cfg.site, model.mesh)[:1],
                            K0Profile(0.36, cfg.soil.gamma, 15.0), soil_density=cfg.soil.rho)
    return model


class TestWallProfiles:
    def test_at_rest_resultant_retained(self, at_rest_model):
        prof = wall_pressure_profile(at_rest_model, Side.ACTIVE, PressureExtent.RETAINED)
        assert prof.H == 6.0
        assert prof.P == pytest.approx(0.5 * 0.36 * 19.6 * 36.0, rel=0.05)

    def test_at_rest_full_height(self, at_rest_model):
        prof = wall_pressure_profile(at_rest_model, Side.ACTIVE)
        K = back_calculate_K(prof.P, 19.62, prof.H)
        assert prof.H == 11.0 and K == pytest.approx(0.36, rel=0.03)
        assert application_height(prof.sigma, prof.h, prof.y) / prof.H == pytest.approx(1 / 3, rel=0.02)

    def test_zero_stress_zero_resultant(self, at_rest_model):
        face = wall_face(at_rest_model.mesh, Side.PASSIVE)
        from seiswall.pipeline.postprocess import face_stress
        zero = np.zeros_like(at_rest_model.state.stress)
        assert resultant(face_stress(at_rest_model, face, zero), face.h) == 0.0

    def test_faces_touch_the_wall(self, at_rest_model):
        mesh = at_rest_model.mesh
        for side, x in ((Side.ACTIVE, 12.5), (Side.PASSIVE, 12.0)):
            face = wall_face(mesh, side)
            xs = mesh.nodes[mesh.elements[face.elements]][..., 0]
            assert np.all(np.isclose(xs, x).any(axis=1))
            assert face.h.sum() == pytest.approx(face.H)

    def test_probes_inside_wedges(self, at_rest_model):
        nodes = at_rest_model.mesh.nodes
        a = probe_node(at_rest_model, Side.ACTIVE, math.radians(40.0))
        p = probe_node(at_rest_model, Side.PASSIVE, math.radians(40.0))
        assert nodes[a, 0] > 12.5 and nodes[p, 0] < 12.0
        assert nodes[p, 1] < 9.0 + 1e-9


class TestComparison:
    def record(self, side, t, k_h, scale):
        h = np.ones(6)
        y = np.arange(6) + 0.5
        return PressureRecord(t, side, scale * (6 - y), h, y, 6.0, 19.62, k_h)

    def test_rows_and_flags(self):
        recs = [self.record(Side.ACTIVE, 0.2, 0.2, 19.62 * 0.30),
                self.record(Side.ACTIVE, 0.1, -0.2, 19.62 * 0.25),
                self.record(Side.PASSIVE, 0.15, 0.1, 19.62 * 1.5)]
        rows = comparison_table(recs, PARAMS, "m")
        assert [r.time for r in rows] == [0.1, 0.15, 0.2]
        r = rows[0]
        assert r.K_fe == pytest.approx(0.25, rel=1e-12)
        assert r.K_mo == pytest.approx(0.3284, abs=1e-4)
        assert r.K_wood == pytest.approx(0.36 + 0.4, rel=1e-12)
        y = np.arange(6) + 0.5
        assert r.Y_over_H == pytest.approx(np.sum((6 - y) * y) / np.sum(6 - y) / 6.0, rel=1e-12)
        f = summarize_observations(rows).flags
        assert f["c"] is True and f["e"] is True and f["b"] is True

    def test_validity_marker(self):
        rows = comparison_table([self.record(Side.ACTIVE, 0.0, 0.9, 19.62)], PARAMS, "m")
        assert rows[0].K_mo is None and rows[0].deviation is None

    def test_passive_trend(self):
        assert passive_trend([1.0, 1.2, 1.2, 1.5])
        assert not passive_trend([1.0, 0.9])


# ---------------------------------------------------------------------------
# Whole runs on the reduced site
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def reduced_static():
    return run_static(RunConfig(site=REDUCED))


class TestRuns:
    def test_zero_motion_static_rows_only(self, reduced_static):
        cfg = reduced_static.config
        run = run_dynamic(cfg, GroundMotion(0.005, np.zeros(101), label="quiet"), reduced_static)
        assert [r.kind for r in run.rows] == ["static", "static"]
        act = next(r for r in run.rows if r.side is Side.ACTIVE)
        assert 0.217 <= act.K_fe <= 0.36
        assert not np.any(run.k_h[Side.ACTIVE])

    def test_static_state_not_modified(self, reduced_static):
        u = reduced_static.model.u.copy()
        run_dynamic(reduced_static.config, synthesize_motion("harmonic", 0.05, 2.0, 0.3), reduced_static)
        assert np.array_equal(reduced_static.model.u, u)

    @pytest.mark.slow
    def test_harmonic_rows(self, reduced_static):
        run = run_dynamic(reduced_static.config, synthesize_motion("harmonic", 0.05, 2.0, 2.0),
                          reduced_static)
        peaks = [r for r in run.rows if r.kind == "peak"]
        assert peaks
        assert [r.time for r in run.rows] == sorted(r.time for r in run.rows)
        for side in (Side.ACTIVE, Side.PASSIVE):
            kmax = np.abs(run.k_h[side]).max()
            assert all(abs(r.k_h) <= kmax for r in peaks if r.side is side)
        act = [r for r in peaks if r.side is Side.ACTIVE]
        assert all(r.K_fe < r.K_wood for r in act)
        assert all(0.0 <= r.Y_over_H <= 1.0 for r in act)
        assert run.observations["flags"]["c"] is True
        assert run.result.energy_error < 1e-2
