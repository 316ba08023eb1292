"""Static Newton solution, staged construction, modes, Rayleigh damping, Newmark."""

import math
from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from oracles import (TABLE_SOIL, free_vibration, harmonic_column_response,
                     shear_column_frequency, tied_column)
from seiswall.config import RunConfig
from seiswall.constitutive import K0Profile, MohrCoulombParams
from seiswall.mesh import MATERIAL_SOIL, SiteConfig, Stage, column_mesh
from seiswall.pipeline.postprocess import Side
from seiswall.pipeline.run import run_static
from seiswall.solvers import (LATERAL_BOUNDARIES, DynamicSolveError, DynamicSolveSettings, FEModel,
                              Material, NewmarkIntegrator, StageFailure, StaticSolveSettings,
                              load_checkpoint, lowest_frequency, lowest_modes,
                              newmark_dynamic_solve, newton_static_solve, rayleigh_coefficients,
                              rayleigh_ratio, run_staged_construction, save_checkpoint,
                              single_dof_frequency)
from seiswall.solvers.dynamic import advance

GAMMA = 19.62
MC = MohrCoulombParams(math.radians(40.0), 0.2, math.radians(10.0))


def soil_column(n=10, height=10.0, width=1.0, plastic=MC):
    model = FEModel(column_mesh(height, n, width), {MATERIAL_SOIL: Material(TABLE_SOIL, plastic)})
    model.set_supports(model.static_supports())
    return model


def geostatic_column(n=10, height=10.0):
    model = soil_column(n, height)
    run_staged_construction(model, [Stage("geostatic", np.zeros(0, int))],
                            K0Profile(0.36, GAMMA, height))
    return model


# ---------------------------------------------------------------------------
# Static
# ---------------------------------------------------------------------------

class TestStaticSettings:
    @pytest.mark.parametrize("kwargs", [dict(force_tolerance=0.0), dict(force_tolerance=0.1),
                                        dict(displacement_tolerance=-1.0), dict(load_substeps=0)])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            StaticSolveSettings(**kwargs)


class TestNewtonStaticSolve:
    def test_elastic_single_element_one_iteration(self):
        model = soil_column(1, 1.0, plastic=None)
        f = model.gravity_vector()
        res = newton_static_solve(model, f, StaticSolveSettings(load_substeps=1))
        assert res.iterations == [1]
        dm = model.dof_map
        r = dm.gather(f - model.internal_force())
        assert np.linalg.norm(r) <= 1e-6 * np.linalg.norm(dm.gather(f))
        assert model.u[1::2].min() < 0.0

    def test_elastic_result_independent_of_substeps(self):
        us = []
        for n in (1, 2, 7):
            model = soil_column(5, 5.0, plastic=None)
            newton_static_solve(model, model.gravity_vector(), StaticSolveSettings(load_substeps=n))
            us.append(model.u)
        assert np.allclose(us[0], us[1], atol=1e-12) and np.allclose(us[0], us[2], atol=1e-12)

    def test_failure_reports_residual_history(self):
        # Cohesionless soil with free sides cannot carry its own weight.
        model = FEModel(column_mesh(4.0, 4, 1.0),
                        {MATERIAL_SOIL: Material(TABLE_SOIL, MohrCoulombParams(math.radians(30.0), 0.0))})
        base = model.mesh.boundary_sets["Base"]
        model.set_supports([(int(n), c) for n in base for c in (0, 1)])
        with pytest.raises(StageFailure) as info:
            newton_static_solve(model, model.gravity_vector(),
                                StaticSolveSettings(max_newton_iters=10, max_substep_cuts=2), "collapse")
        assert info.value.stage == "collapse"
        assert len(info.value.residual_history) > 0

    def test_prescribed_displacement_is_reached(self):
        model = soil_column(2, 2.0, plastic=None)
        top = model.mesh.boundary_sets["Surface"]
        fixed = sorted(model.fixed | {(int(n), 1) for n in top})
        model.set_supports(fixed)
        up = np.zeros(model.n_dofs)
        up[2 * top + 1] = -1e-3
        newton_static_solve(model, np.zeros(model.n_dofs), StaticSolveSettings(), u_prescribed=up)
        assert np.allclose(model.u[2 * top + 1], -1e-3, atol=1e-15)


class TestStagedConstruction:
    def test_geostatic_is_self_equilibrated(self):
        model = soil_column(10, 10.0)
        res = run_staged_construction(model, [Stage("geostatic", np.zeros(0, int))],
                                      K0Profile(0.36, GAMMA, 10.0))
        assert res[0].max_displacement <= 1e-6
        s = model.element_mean_stress([0])[0]
        assert s[0] / s[1] == pytest.approx(0.36, rel=1e-12)

    def test_deactivation_removes_exact_gravity(self):
        model = geostatic_column(10, 10.0)
        model.deactivate([7, 8, 9])
        g = model.gravity_vector()
        assert g[1::2].sum() == pytest.approx(-9.81 * 2.0 * 7.0, rel=1e-12)
        top = model.mesh.elements[9][[2, 3, 6]]
        assert np.all(g[2 * top + 1] == 0.0)

    def test_removal_unloads_the_column(self):
        model = geostatic_column(10, 10.0)
        run_staged_construction(model, [Stage("lift", np.array([8, 9]))], K0Profile(0.36, GAMMA, 10.0))
        s = model.element_mean_stress([0])[0]
        # Vertical stress at the bottom element follows the remaining 8 m of soil.
        assert s[1] == pytest.approx(-GAMMA * 7.5, rel=1e-3)
        assert np.all(model.u[1::2] >= -1e-12)

    def test_excavation_moves_wall_toward_the_cut(self):
        st = run_static(RunConfig(site=SiteConfig(element_size_min=0.5, element_size_max=2.0)))
        mesh = st.mesh
        top = np.flatnonzero(np.isclose(mesh.nodes[:, 1], 15.0) & np.isclose(mesh.nodes[:, 0], 12.0))
        assert st.model.u[2 * top[0]] < 0.0
        rec = st.records[Side.ACTIVE]
        at_rest = 0.36 * 0.5 * GAMMA * rec.H ** 2
        assert rec.P < at_rest


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------

class TestModes:
    @pytest.mark.parametrize("k, m", [(1.0, 1.0), (400.0, 2.5), (3e5, 12.0)])
    def test_single_dof_closed_form(self, k, m):
        f = single_dof_frequency(k, m)
        assert f == math.sqrt(k / m) / (2.0 * math.pi)
        r = lowest_modes(np.array([[k]]), np.array([[m]]))
        assert r.frequencies[0] == pytest.approx(f, rel=1e-12)

    def test_single_dof_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            single_dof_frequency(0.0, 1.0)

    def test_matches_dense_generalised_eigensolver(self):
        rng = np.random.default_rng(3)
        A = rng.standard_normal((30, 30))
        K = A @ A.T + 30 * np.eye(30)
        B = rng.standard_normal((30, 30))
        M = B @ B.T + 5 * np.eye(30)
        r = lowest_modes(K, M, n_modes=4, tol=1e-10)
        ref = sla.eigh(K, M, eigvals_only=True)[:4]
        np.testing.assert_allclose(r.eigenvalues, ref, rtol=1e-9)
        assert np.all(r.residuals <= 1e-10)

    @pytest.mark.parametrize("n", [15, 30])
    def test_shear_column_fundamental_frequency(self, n):
        f_ref = shear_column_frequency(TABLE_SOIL, 15.0)
        assert f_ref == pytest.approx(3.0, abs=5e-3)
        r = lowest_frequency(tied_column(n))
        assert r.frequencies[0] == pytest.approx(f_ref, rel=0.03)
        assert r.residuals[0] <= 1e-6


# ---------------------------------------------------------------------------
# Rayleigh damping
# ---------------------------------------------------------------------------

class TestRayleigh:
    @pytest.mark.parametrize("f1, f2, a0, a1", [(4.8, 4.8, 0.30159, 3.3157e-4),
                                                (4.8, 2.0, 0.17740, 4.681e-4)])
    def test_examples(self, f1, f2, a0, a1):
        c0, c1 = rayleigh_coefficients(0.01, f1, f2)
        # Quoted values are truncated to five figures.
        assert c0 == pytest.approx(a0, abs=1e-5)
        assert c1 == pytest.approx(a1, rel=5e-4)

    @given(st.floats(1e-3, 0.2), st.floats(0.1, 50.0), st.floats(0.1, 50.0))
    def test_ratio_recovered_at_both_targets(self, zeta, f1, f2):
        a0, a1 = rayleigh_coefficients(zeta, f1, f2)
        assert abs(rayleigh_ratio(a0, a1, f1) - zeta) <= 1e-12
        assert abs(rayleigh_ratio(a0, a1, f2) - zeta) <= 1e-12

    @pytest.mark.parametrize("args", [(0.01, 0.0, 2.0), (0.01, 2.0, -1.0), (0.0, 2.0, 3.0)])
    def test_rejects(self, args):
        with pytest.raises(ValueError):
            rayleigh_coefficients(*args)


# ---------------------------------------------------------------------------
# Newmark
# ---------------------------------------------------------------------------

class TestDynamicSettings:
    @pytest.mark.parametrize("kwargs", [dict(dt=0.0), dict(newmark_gamma=0.4),
                                        dict(newmark_beta=0.2), dict(rayleigh_a0=-1.0),
                                        dict(lateral_boundary="periodic")])
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            DynamicSolveSettings(**kwargs)


class TestNewmark:
    @pytest.mark.parametrize("mode", LATERAL_BOUNDARIES)
    def test_zero_motion_keeps_static_state(self, mode):
        model = geostatic_column(6, 6.0)
        u0, s0 = model.u.copy(), model.state.stress.copy()
        motion = SimpleNamespace(dt=0.01, accel_ms2=np.zeros(51))
        newmark_dynamic_solve(model, motion, DynamicSolveSettings(dt=0.01, lateral_boundary=mode,
                                                                  rayleigh_a0=0.3, rayleigh_a1=3e-4))
        assert np.abs(model.u - u0).max() <= 1e-10
        assert np.abs(model.state.stress - s0).max() <= 1e-10

    def test_free_vibration_period(self):
        measured, T, late = free_vibration()
        assert measured == pytest.approx(T, rel=0.01)
        # No algorithmic damping: the amplitude is kept.
        assert late == pytest.approx(1.0, rel=1e-3)

    def test_harmonic_amplification_matches_shear_beam(self):
        fe, ref = harmonic_column_response()
        assert fe == pytest.approx(ref, rel=0.05)

    def test_energy_balance_linear(self):
        model = tied_column(10)
        a0, a1 = rayleigh_coefficients(0.05, 3.0, 1.5)
        t = np.arange(401) * 0.005
        motion = SimpleNamespace(dt=0.005, accel_ms2=np.sin(2 * math.pi * 2.0 * t))
        res = newmark_dynamic_solve(model, motion, DynamicSolveSettings(
            dt=0.005, lateral_boundary="tied", rayleigh_a0=a0, rayleigh_a1=a1))
        assert res.energy["kinetic"].max() > 0.0
        assert res.energy_error <= 1e-6

    def test_step_halving_then_success(self, monkeypatch):
        model = tied_column(4)
        integ = NewmarkIntegrator(model, DynamicSolveSettings(dt=0.01, lateral_boundary="tied"))
        integ.initialize(0.0)
        real = integ.step
        monkeypatch.setattr(integ, "step", lambda dt, a, e=None: None if dt > 0.003 else real(dt, a, e))
        it, n_sub = advance(integ, 0.0, 0.01, lambda t: 1.0)
        assert n_sub == 4

    def test_step_failure_at_minimum(self, monkeypatch):
        model = tied_column(4)
        integ = NewmarkIntegrator(model, DynamicSolveSettings(dt=0.01, max_halvings=2,
                                                              lateral_boundary="tied"))
        integ.initialize(0.0)
        monkeypatch.setattr(integ, "step", lambda *a: None)
        with pytest.raises(DynamicSolveError) as info:
            advance(integ, 0.0, 0.01, lambda t: 1.0)
        assert info.value.time == pytest.approx(0.0025)


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        model = geostatic_column(4, 4.0)
        model.deactivate([3])
        model.u[:] = np.linspace(0.0, 1.0, model.n_dofs)
        v = np.arange(model.n_dofs, dtype=float)
        path = tmp_path / "state.npz"
        save_checkpoint(path, model, time=1.25, velocity=v, label="after")
        other = soil_column(4, 4.0)
        meta = load_checkpoint(path, other)
        assert np.array_equal(other.u, model.u)
        assert np.array_equal(other.state.stress, model.state.stress)
        assert np.array_equal(other.active, model.active)
        assert meta["time"] == 1.25 and meta["label"] == "after"
        assert np.array_equal(meta["velocity"], v)
