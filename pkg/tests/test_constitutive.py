"""Elastic tangent, Mohr-Coulomb yield and return map, geostatic stresses."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import drained_driver
from seiswall.constitutive import (
    BRANCH_ELASTIC,
    BRANCH_MAIN,
    ElasticParams,
    GaussState,
    K0Profile,
    MohrCoulombParams,
    elastic_tangent,
    elastic_update,
    geostatic_stress,
    mc_return_map,
    mc_update,
    mc_yield,
    plastic_work,
    principal_stresses,
    return_map_stress,
)

SOIL = ElasticParams(163.13, 0.26, 2000.0)
SAND = MohrCoulombParams(math.radians(40.0), 0.2, math.radians(10.0))
SAND_C0 = MohrCoulombParams(math.radians(40.0), 0.0, 0.0)
SCALE = 1000.0


def hooke_compliance(ep, scale=SCALE):
    """Independent 3D Hooke compliance on (xx, yy, zz, engineering xy)."""
    E, nu = ep.E * scale, ep.nu
    C = np.zeros((4, 4))
    C[:3, :3] = -nu / E
    np.fill_diagonal(C[:3, :3], 1.0 / E)
    C[3, 3] = 2 * (1 + nu) / E
    return C


def principal(s):
    """Principal stresses from a 3x3 eigen-solve (descending, tension positive)."""
    T = np.array([[s[0], s[3], 0.0], [s[3], s[1], 0.0], [0.0, 0.0, s[2]]])
    return np.sort(np.linalg.eigvalsh(T))[::-1]


def mc_function(s, angle, c=0.0):
    p = principal(s)
    return 0.5 * (p[0] - p[2]) + 0.5 * (p[0] + p[2]) * math.sin(angle) - c * math.cos(angle)


def grad(fun, s, h=1e-6):
    g = np.zeros(4)
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        g[k] = (fun(s + e) - fun(s - e)) / (2 * h)
    return g


def yf(s, mp):
    return float(np.ravel(mc_yield(s, mp))[0])


def state_of(stress):
    stress = np.atleast_2d(np.asarray(stress, float))
    st_ = GaussState.zeros(len(stress))
    st_.stress[:] = stress
    return st_


class TestElasticTangent:
    def test_constrained_modulus(self):
        D = elastic_tangent(SOIL)
        assert D[0, 0] == pytest.approx(163.13 * 0.74 / (1.26 * 0.48), rel=1e-12)
        assert D[0, 0] == pytest.approx(199.6, abs=0.05)

    def test_uncoupled_limit(self):
        D = elastic_tangent(ElasticParams(100.0, 0.0, 1.0))
        np.testing.assert_allclose(D, [[100, 0, 0], [0, 100, 0], [0, 0, 0], [0, 0, 50]], atol=1e-12)

    @given(st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3), st.floats(-1e-3, 1e-3))
    def test_matches_three_dimensional_hooke(self, exx, eyy, gxy):
        D = elastic_tangent(SOIL)
        s = D @ np.array([exx, eyy, gxy])
        # Inverting the 3D compliance must give back eps_zz = 0 and the applied strains.
        eps = hooke_compliance(SOIL, 1.0) @ s
        np.testing.assert_allclose(eps, [exx, eyy, 0.0, gxy], atol=1e-15)
        assert s[2] == pytest.approx(SOIL.nu * (s[0] + s[1]), abs=1e-12)

    def test_in_plane_block_positive_definite(self):
        w = np.linalg.eigvalsh(elastic_tangent(SOIL)[[0, 1, 3]])
        assert w.min() > 0.0

    @pytest.mark.parametrize("nu", [0.5, 0.6, -0.1])
    def test_rejects_bad_poisson(self, nu):
        with pytest.raises(ValueError):
            ElasticParams(100.0, nu, 1.0)


class TestYield:
    def test_hydrostatic_compression(self):
        p = 50.0
        f = yf([-p, -p, -p, 0.0], SAND_C0)
        assert f == pytest.approx(-p * math.sin(SAND_C0.phi), abs=1e-12)

    def test_rankine_ratio_on_surface(self):
        r = math.tan(math.radians(65.0)) ** 2
        f = yf([-100.0, -100.0 * r, -150.0, 0.0], SAND_C0)
        assert abs(f) <= 1e-10

    def test_origin_with_cohesion(self):
        f = yf([0.0, 0.0, 0.0, 0.0], SAND)
        assert f == pytest.approx(-0.2 * math.cos(SAND.phi), abs=1e-15)

    def test_out_of_plane_pair_can_govern(self):
        # Equal in-plane stresses, soft out-of-plane stress: only the zz pair is critical.
        f = yf([-100.0, -100.0, -10.0, 0.0], SAND_C0)
        assert f > 0.0

    @given(st.lists(st.floats(-500, 50), min_size=4, max_size=4))
    def test_matches_independent_eigen_solve(self, s):
        assert yf(s, SAND) == pytest.approx(mc_function(np.array(s), SAND.phi, 0.2), abs=1e-9)

    def test_principal_ordering(self):
        p = principal_stresses([-10.0, -30.0, -20.0, 5.0])[0]
        assert p[0] >= p[1] >= p[2]


class TestReturnMap:
    def test_elastic_trial_is_bit_identical(self):
        trial = np.array([[-50.0, -60.0, -55.0, 3.0]])
        out, _ = mc_return_map(trial, state_of(trial), SAND, SOIL)
        assert np.array_equal(out.stress, trial)
        assert not out.yielded[0]

    def test_drained_strength_plateau(self):
        h = drained_driver(SAND_C0, SOIL)
        axial = -h[:, 1]
        assert axial[-1] == pytest.approx(100.0 * math.tan(math.radians(65.0)) ** 2, rel=0.005)
        assert axial[-1] == pytest.approx(460.0, rel=0.005)
        # Perfect plasticity: the last tenth of the path is flat.
        assert np.ptp(axial[-40:]) <= 1e-6 * axial[-1]

    def test_apex_return_for_cohesionless_soil(self):
        res = return_map_stress([[30.0, 20.0, 25.0, 0.0]], SAND_C0, SOIL)
        np.testing.assert_allclose(res.stress, 0.0, atol=1e-10)

    def test_apex_with_cohesion_is_the_cone_tip(self):
        tip = 0.2 / math.tan(SAND.phi)
        res = return_map_stress([[40.0, 40.0, 40.0, 0.0]], SAND, SOIL)
        np.testing.assert_allclose(res.stress[0, :3], tip, atol=1e-9)

    def test_random_trials_land_on_surface(self):
        rng = np.random.default_rng(11)
        trial = rng.uniform(-600.0, 60.0, size=(10_000, 4))
        trial[:, 3] = rng.uniform(-200.0, 200.0, size=10_000)
        res = return_map_stress(trial, SAND, SOIL)
        f = mc_yield(res.stress, SAND)
        p = -res.stress[:, :3].mean(axis=1)
        assert np.all(f <= 1e-8 * np.maximum(np.abs(p), 1.0))

    def test_flow_is_normal_to_the_potential(self):
        rng = np.random.default_rng(3)
        trial = rng.uniform(-400.0, -20.0, size=(400, 4))
        trial[:, 3] = rng.uniform(-150.0, 150.0, size=400)
        res = return_map_stress(trial, SAND, SOIL)
        comp = hooke_compliance(SOIL)
        checked = 0
        for k in np.flatnonzero(res.branch == BRANCH_MAIN):
            p = principal(res.stress[k])
            if min(p[0] - p[1], p[1] - p[2]) < 5.0:
                continue
            d_plastic = comp @ (trial[k] - res.stress[k])
            g = grad(lambda s: mc_function(s, SAND.psi), res.stress[k])
            cos = d_plastic @ g / (np.linalg.norm(d_plastic) * np.linalg.norm(g))
            assert cos == pytest.approx(1.0, abs=1e-6)
            checked += 1
        assert checked > 20

    def test_tangent_matches_finite_difference(self):
        rng = np.random.default_rng(5)
        D43 = elastic_tangent(SOIL) * SCALE
        base = np.array([-60.0, -200.0, -110.0, 10.0])
        done = 0
        for _ in range(60):
            de = rng.normal(scale=4e-4, size=3)
            res = return_map_stress(base + D43 @ de, SAND, SOIL)
            p = principal(res.stress[0])
            if res.branch[0] != BRANCH_MAIN or min(p[0] - p[1], p[1] - p[2]) < 5.0:
                continue
            fd = np.zeros((4, 3))
            h = 1e-8
            for j in range(3):
                e = np.zeros(3)
                e[j] = h
                sp_ = return_map_stress(base + D43 @ (de + e), SAND, SOIL).stress[0]
                sm_ = return_map_stress(base + D43 @ (de - e), SAND, SOIL).stress[0]
                fd[:, j] = (sp_ - sm_) / (2 * h)
            scale = np.abs(fd).max()
            assert np.abs(res.tangent[0] - fd).max() <= 1e-5 * scale
            done += 1
        assert done >= 5

    def test_plastic_work_is_non_negative(self):
        rng = np.random.default_rng(9)
        old = state_of(np.tile([-80.0, -120.0, -90.0, 0.0], (500, 1)))
        de = rng.normal(scale=2e-3, size=(500, 4))
        de[:, 2] = 0.0
        new, _ = mc_update(old, de, SAND, SOIL, SCALE)
        w = plastic_work(new.stress, new.plastic_strain - old.plastic_strain)
        assert np.all(w >= -1e-9)
        assert w.max() > 0.0


def strain_cycle(amplitude, n=200):
    path = np.concatenate([np.linspace(0, amplitude, n), np.linspace(amplitude, -amplitude, 2 * n),
                           np.linspace(-amplitude, 0, n)])
    return np.diff(path)


def cycle_work(d_gamma, mp=SAND):
    state = state_of([-40.0, -100.0, -40.0, 0.0])
    work = 0.0
    for dg in d_gamma:
        de = np.array([[0.0, 0.0, 0.0, dg]])
        if mp is None:
            new, _ = elastic_update(state, de, SOIL, SCALE)
        else:
            new, _ = mc_update(state, de, mp, SOIL, SCALE)
        work += 0.5 * (state.stress[0, 3] + new.stress[0, 3]) * dg
        state = new
    return work, state


class TestHysteresis:
    def test_yielding_cycle_dissipates(self):
        work, state = cycle_work(strain_cycle(5e-3))
        assert state.yielded[0]
        assert work > 0.0

    def test_elastic_cycle_dissipates_nothing(self):
        work, state = cycle_work(strain_cycle(1e-6))
        assert not state.yielded[0]
        assert abs(work) <= 1e-12


def explicit_simple_shear(stress0, gamma_total, mp, ep, substeps=1000):
    """Forward-Euler elasto-plastic integration with numerical gradients and drift correction."""
    D4 = np.linalg.inv(hooke_compliance(ep))
    s = np.asarray(stress0, float).copy()
    de = np.array([0.0, 0.0, 0.0, gamma_total / substeps])

    def f(x):
        return mc_function(x, mp.phi, mp.cohesion_c)

    def g(x):
        return mc_function(x, mp.psi)

    for _ in range(substeps):
        trial = s + D4 @ de
        if f(trial) <= 0.0:
            s = trial
            continue
        # Elastic fraction of the substep, then plastic corrector on the rest.
        f0 = f(s)
        alpha = 0.0 if f0 >= -1e-12 else f0 / (f0 - f(trial))
        s = s + alpha * (D4 @ de)
        rest = (1.0 - alpha) * de
        a, b = grad(f, s), grad(g, s)
        dlam = a @ D4 @ rest / (a @ D4 @ b)
        s = s + D4 @ (rest - dlam * b)
        for _ in range(5):
            fv = f(s)
            if abs(fv) < 1e-10:
                break
            a, b = grad(f, s), grad(g, s)
            s = s - fv / (a @ D4 @ b) * (D4 @ b)
    return s


class TestSubsteppingOracle:
    @pytest.mark.parametrize("gamma", [2e-3, 1e-2])
    def test_simple_shear_matches_explicit_integrator(self, gamma):
        s0 = np.array([-40.0, -100.0, -40.0, 0.0])
        ref = explicit_simple_shear(s0, gamma, SAND, SOIL)
        state = state_of(s0)
        n = 50
        for _ in range(n):
            state, _ = mc_update(state, np.array([[0.0, 0.0, 0.0, gamma / n]]), SAND, SOIL, SCALE)
        err = np.linalg.norm(state.stress[0] - ref) / np.linalg.norm(ref)
        assert err <= 0.005


class TestGeostatic:
    def test_six_metres(self):
        s = geostatic_stress([9.0], K0Profile(0.36, 19.6, 15.0))[0]
        assert s[1] == pytest.approx(-117.6, abs=1e-9)
        assert s[0] == pytest.approx(-42.336, abs=1e-9)
        assert s[2] == pytest.approx(s[0], abs=1e-12)
        assert s[3] == 0.0

    def test_surface_is_stress_free(self):
        np.testing.assert_array_equal(geostatic_stress([15.0], K0Profile(0.36, 19.6, 15.0)), 0.0)

    @pytest.mark.parametrize("k0", [0.0, 1.0, 1.5])
    def test_rejects_out_of_range_k0(self, k0):
        with pytest.raises(ValueError):
            K0Profile(k0, 19.6, 15.0)

    def test_elastic_branch_code(self):
        res = return_map_stress(geostatic_stress([5.0], K0Profile(0.36, 19.6, 15.0)), SAND, SOIL)
        assert res.branch[0] == BRANCH_ELASTIC
