"""Implicit Newmark integration under rigid-base horizontal excitation.

The unknowns are displacements relative to the base, so the base
acceleration enters as the effective load ``-M 1 a_g``. Lateral boundaries
are either rigid (static rollers kept), tied (equal motion at equal
elevation) or free-field: viscous dashpots driven by separately integrated
one-dimensional soil columns whose stress changes are applied as tractions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..constitutive import GaussState
from ..fem.assembly import DofMap, LinearSolver, SingularSystemError
from ..fem.elements import EDGE_NODES, edge_load_weights
from ..mesh import MATERIAL_SOIL, Mesh, shear_wave_velocity
from .model import FEModel

LATERAL_BOUNDARIES = ("free_field", "tied", "rigid")


class DynamicSolveError(RuntimeError):
    def __init__(self, time: float, message: str):
        self.time = time
        super().__init__(message)


def rayleigh_coefficients(zeta: float, f1: float, f2: float) -> tuple[float, float]:
    """Mass and stiffness factors giving damping ratio ``zeta`` at f1 and f2 (Hz)."""
    if f1 <= 0.0 or f2 <= 0.0:
        raise ValueError("target frequencies must be positive")
    if zeta <= 0.0:
        raise ValueError("damping ratio must be positive")
    w1, w2 = 2.0 * math.pi * f1, 2.0 * math.pi * f2
    return 2.0 * zeta * w1 * w2 / (w1 + w2), 2.0 * zeta / (w1 + w2)


def rayleigh_ratio(a0: float, a1: float, f) -> np.ndarray:
    """Damping ratio of ``C = a0 M + a1 K`` at frequency ``f`` (Hz)."""
    w = 2.0 * np.pi * np.asarray(f, float)
    return a0 / (2.0 * w) + a1 * w / 2.0


@dataclass(frozen=True)
class DynamicSolveSettings:
    dt: float = 0.005
    newmark_beta: float = 0.25
    newmark_gamma: float = 0.5
    rayleigh_a0: float = 0.0
    rayleigh_a1: float = 0.0
    max_newton_iters: int = 25
    force_tolerance: float = 1e-6
    max_halvings: int = 6
    lateral_boundary: str = "free_field"
    lumped_mass: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.newmark_gamma < 0.5:
            raise ValueError("newmark_gamma must be >= 0.5")
        if self.newmark_beta < 0.25 * (self.newmark_gamma + 0.5) ** 2 - 1e-12:
            raise ValueError("newmark_beta below the unconditional-stability limit")
        if self.rayleigh_a0 < 0.0 or self.rayleigh_a1 < 0.0:
            raise ValueError("Rayleigh coefficients must be non-negative")
        if self.lateral_boundary not in LATERAL_BOUNDARIES:
            raise ValueError(f"lateral_boundary must be one of {LATERAL_BOUNDARIES}")
        if not 0.0 < self.force_tolerance <= 1e-2:
            raise ValueError("force_tolerance must lie in (0, 1e-2]")

    @property
    def dt_min(self) -> float:
        return self.dt / 2 ** self.max_halvings


@dataclass
class StepInfo:
    time: float
    iterations: int
    substeps: int


@dataclass
class DynamicResult:
    times: np.ndarray
    base_acceleration: np.ndarray
    steps: list = field(default_factory=list)
    energy: dict = field(default_factory=dict)

    @property
    def energy_error(self) -> float:
        """Largest relative discrepancy of the discrete energy balance."""
        e = self.energy
        if not e:
            return 0.0
        res = e["external"] - e["kinetic"] - e["internal"] - e["damping"]
        scale = max(np.abs(e["external"]).max(), np.abs(e["kinetic"]).max(),
                    np.abs(e["internal"]).max(), 1e-300)
        return float(np.abs(res).max() / scale)


# ---------------------------------------------------------------------------
# Time integrator for one model
# ---------------------------------------------------------------------------

class NewmarkIntegrator:
    """Newmark stepping for a model whose supports are already set.

    Parameters
    ----------
    model : FEModel
        Committed state is the initial condition (zero velocity).
    settings : DynamicSolveSettings
    extra_damping : sparse matrix, optional
        Added to the Rayleigh matrix (boundary dashpots).
    """

    def __init__(self, model: FEModel, settings: DynamicSolveSettings,
                 extra_damping=None, static_load=None):
        self.model = model
        self.s = settings
        dm = model.dof_map
        self.dm = dm
        self.M = model.mass_matrix(lumped=settings.lumped_mass, dof_map=dm)
        soil = model.mesh.material_id == MATERIAL_SOIL
        C = sp.csr_matrix((dm.n_eq, dm.n_eq))
        if settings.rayleigh_a0 > 0.0:
            C = C + settings.rayleigh_a0 * model.mass_matrix(soil, settings.lumped_mass, dm)
        if settings.rayleigh_a1 > 0.0:
            C = C + settings.rayleigh_a1 * model.elastic_stiffness(soil, dm)
        if extra_damping is not None:
            C = C + extra_damping
        self.C = sp.csr_matrix(C)
        self.K_el = model.elastic_stiffness(dof_map=dm)
        iota = np.zeros(model.n_dofs)
        iota[0::2] = 1.0
        self.iota = np.zeros(dm.n_eq)
        m = dm.flat >= 0
        self.iota[dm.flat[m & (iota > 0)]] = 1.0
        self.M_iota = self.M @ self.iota
        self.f_int = dm.gather(model.internal_force())
        self.F_static = self.f_int.copy() if static_load is None else np.asarray(static_load)
        self.v = np.zeros(dm.n_eq)
        self.a = np.zeros(dm.n_eq)
        self._lu_cache = {}
        self.energy = {"external": 0.0, "kinetic": 0.0, "internal": 0.0, "damping": 0.0}
        self._f_dyn_prev = None

    def load(self, a_g: float, extra) -> np.ndarray:
        """Dynamic part of the load at one instant (equation space)."""
        f = -self.M_iota * a_g
        if extra is not None:
            f = f + extra
        return f

    def initialize(self, a_g0: float, extra0=None, velocity=None):
        """Set the initial velocity and the acceleration that balances the loads."""
        if velocity is not None:
            self.v = np.asarray(velocity, float).copy()
        f0 = self.load(a_g0, extra0)
        rhs = self.F_static + f0 - self.f_int - self.C @ self.v
        if np.any(rhs):
            self.a = LinearSolver(self.M).solve(rhs)
        self._f_dyn_prev = f0

    def _effective_solver(self, dt, K_t):
        b, g = self.s.newmark_beta, self.s.newmark_gamma
        K_eff = K_t + self.M * (1.0 / (b * dt * dt)) + self.C * (g / (b * dt))
        return LinearSolver(K_eff)

    def _elastic_solver(self, dt):
        key = round(dt / self.s.dt_min)
        if key not in self._lu_cache:
            self._lu_cache[key] = self._effective_solver(dt, self.K_el)
        return self._lu_cache[key]

    def step(self, dt: float, a_g: float, extra=None):
        """Advance one step; returns iteration count or ``None`` if Newton failed."""
        model, dm = self.model, self.dm
        b, g = self.s.newmark_beta, self.s.newmark_gamma
        f_dyn = self.load(a_g, extra)
        target = self.F_static + f_dyn
        u_n = model.u
        v_n, a_n = self.v, self.a
        du_pred = dt * v_n + dt * dt * (0.5 - b) * a_n
        x = du_pred.copy()  # relative displacement increment in equation space
        ref = (np.linalg.norm(self.F_static) + np.linalg.norm(f_dyn)
               + np.linalg.norm(self.M @ a_n) + 1e-12)
        tol = self.s.force_tolerance * ref
        for it in range(self.s.max_newton_iters + 1):
            u = u_n + dm.scatter(x)
            f_full, state, C_t = model.evaluate(u)
            f_int = dm.gather(f_full)
            a = (x - dt * v_n) / (b * dt * dt) - (0.5 / b - 1.0) * a_n
            v = v_n + dt * ((1.0 - g) * a_n + g * a)
            r = target - self.M @ a - self.C @ v - f_int
            rn = float(np.linalg.norm(r))
            if not np.isfinite(rn):
                return None
            if rn <= tol:
                self._commit(u, state, x, v, a, f_int, f_dyn)
                return it
            if it == self.s.max_newton_iters:
                return None
            try:
                if _all_elastic_tangent(model, C_t):
                    solver = self._elastic_solver(dt)
                else:
                    solver = self._effective_solver(dt, model.tangent_matrix(C_t, dm))
                x = x + solver.solve(r)
            except SingularSystemError:
                return None
        return None

    def _commit(self, u, state, du, v, a, f_int, f_dyn):
        v_n = self.v
        # Trapezoidal work terms (exact energy identity for average acceleration).
        self.energy["external"] += du @ (self.F_static + 0.5 * (self._f_dyn_prev + f_dyn))
        self.energy["internal"] += du @ (0.5 * (self.f_int + f_int))
        self.energy["damping"] += du @ (self.C @ (0.5 * (v_n + v)))
        self.energy["kinetic"] = 0.5 * v @ (self.M @ v)
        self.model.commit(u, state)
        self.v, self.a, self.f_int, self._f_dyn_prev = v, a, f_int, f_dyn

    def snapshot(self):
        m = self.model
        return (m.u.copy(), m.state.copy(), self.v.copy(), self.a.copy(), self.f_int.copy(),
                dict(self.energy), None if self._f_dyn_prev is None else self._f_dyn_prev.copy())

    def restore(self, snap):
        u, state, v, a, f_int, energy, f_prev = snap
        self.model.commit(u, state)
        self.v, self.a, self.f_int, self.energy, self._f_dyn_prev = v, a, f_int, energy, f_prev


def _all_elastic_tangent(model: FEModel, C_t) -> bool:
    """True if every active point currently uses its elastic tangent."""
    elems = model.active_elements()
    ref = model.elastic_tangent_field(elems)
    return bool(np.array_equal(C_t, ref))


def advance(integ: NewmarkIntegrator, t0: float, dt: float, a_g: Callable,
            extra: Callable | None = None, depth: int = 0) -> tuple[int, int]:
    """Advance over ``[t0, t0 + dt]``, halving the step on Newton failure.

    ``a_g(t)`` gives the base acceleration and ``extra(t)`` the additional
    equation-space load. Returns ``(iterations, substeps)``.
    """
    snap = integ.snapshot()
    it = integ.step(dt, a_g(t0 + dt), None if extra is None else extra(t0 + dt))
    if it is not None:
        return it, 1
    integ.restore(snap)
    if depth >= integ.s.max_halvings:
        raise DynamicSolveError(t0 + dt, f"step at t={t0 + dt:.6g} s failed at dt_min="
                                         f"{integ.s.dt_min:.3g} s")
    i1, n1 = advance(integ, t0, 0.5 * dt, a_g, extra, depth + 1)
    i2, n2 = advance(integ, t0 + 0.5 * dt, 0.5 * dt, a_g, extra, depth + 1)
    return i1 + i2, n1 + n2


# ---------------------------------------------------------------------------
# Free-field columns
# ---------------------------------------------------------------------------

@dataclass
class FreeFieldColumn:
    """One-dimensional soil column copied from a lateral boundary of the grid."""

    side: str
    model: FEModel
    main_elements: np.ndarray  # boundary elements of the main grid, bottom to top
    node_map: dict  # main node id -> column node id
    times: np.ndarray | None = None
    velocity: np.ndarray | None = None  # (n_times, n_col_nodes, 2)
    stress_change: np.ndarray | None = None  # (n_times, n_col_elements, 4)

    def interp(self, t: float):
        """Linear interpolation of stored velocity and stress change at time ``t``."""
        ts = self.times
        j = int(np.clip(np.searchsorted(ts, t) - 1, 0, len(ts) - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        w = min(max(w, 0.0), 1.0)
        v = (1 - w) * self.velocity[j] + w * self.velocity[j + 1]
        s = (1 - w) * self.stress_change[j] + w * self.stress_change[j + 1]
        return v, s


def extract_column(model: FEModel, side: str) -> FreeFieldColumn:
    """Copy the outermost active element column on ``side`` ('left'/'right')."""
    mesh = model.mesh
    ix_all = mesh.grid_index[:, 0]
    ix = 0 if side == "left" else ix_all.max()
    ids = np.flatnonzero((ix_all == ix) & model.active)
    ids = ids[np.argsort(mesh.grid_index[ids, 1])]
    used = np.unique(mesh.elements[ids])
    remap = {int(n): i for i, n in enumerate(used)}
    conn = np.vectorize(remap.get)(mesh.elements[ids])
    nodes = mesh.nodes[used]
    base = np.flatnonzero(np.abs(nodes[:, 1] - nodes[:, 1].min()) < 1e-9)
    x_lo, x_hi = nodes[:, 0].min(), nodes[:, 0].max()
    col_mesh = Mesh(nodes, conn, mesh.region[ids], mesh.material_id[ids], {"Base": base},
                    np.array([x_lo, x_hi]), mesh.y_lines, np.column_stack(
                        [np.zeros(len(ids), int), mesh.grid_index[ids, 1]]))
    col = FEModel(col_mesh, model.materials, model.gravity, model.rule)
    gps = model.gp_index(ids)
    col.state = GaussState(model.state.stress[gps].copy(), np.zeros((len(gps), 4)),
                           np.zeros((len(gps), 4)), model.state.yielded[gps].copy())
    left = np.flatnonzero(np.abs(nodes[:, 0] - x_lo) < 1e-9)
    right = np.flatnonzero(np.abs(nodes[:, 0] - x_hi) < 1e-9)
    left = left[np.argsort(nodes[left, 1])]
    right = right[np.argsort(nodes[right, 1])]
    ties = [(int(a), int(b), c) for a, b in zip(left, right) for c in (0, 1)]
    col.set_supports([(int(n), c) for n in base for c in (0, 1)], ties)
    return FreeFieldColumn(side, col, ids, remap)


def run_free_field(column: FreeFieldColumn, settings: DynamicSolveSettings,
                   times: np.ndarray, a_g: Callable) -> FreeFieldColumn:
    """Integrate the column over ``times`` and store its response."""
    integ = NewmarkIntegrator(column.model, settings)
    integ.initialize(a_g(times[0]))
    m = column.model
    ne = m.mesh.n_elements
    s0 = m.element_mean_stress(np.arange(ne))
    vel = np.zeros((len(times), m.mesh.n_nodes, 2))
    dsig = np.zeros((len(times), ne, 4))
    vel[0] = integ.dm.scatter(integ.v).reshape(-1, 2)
    for k in range(1, len(times)):
        advance(integ, times[k - 1], times[k] - times[k - 1], a_g)
        vel[k] = integ.dm.scatter(integ.v).reshape(-1, 2)
        dsig[k] = m.element_mean_stress(np.arange(ne)) - s0
    column.times, column.velocity, column.stress_change = times, vel, dsig
    return column


class FreeFieldBoundary:
    """Dashpots and traction increments on the lateral faces of the main grid."""

    def __init__(self, model: FEModel, dm: DofMap, columns: list[FreeFieldColumn]):
        self.model, self.dm, self.columns = model, dm, columns
        mesh = model.mesh
        w = edge_load_weights()
        rows, vals = [], []
        self._terms = []  # (column, col element index, main nodes, weights*L, normal sign)
        for col in columns:
            edge = EDGE_NODES[3] if col.side == "left" else EDGE_NODES[1]
            sign = -1.0 if col.side == "left" else 1.0
            for k, e in enumerate(col.main_elements):
                nodes = mesh.elements[e, edge]
                L = abs(mesh.nodes[nodes[0], 1] - mesh.nodes[nodes[2], 1])
                trib = w * L
                mat = model.materials[int(mesh.material_id[e])].elastic
                rho = mat.rho / 1000.0
                vs = shear_wave_velocity(mat)
                vp = vs * math.sqrt(2.0 * (1.0 - mat.nu) / (1.0 - 2.0 * mat.nu))
                for n, tw in zip(nodes, trib):
                    for comp, c in ((0, rho * vp), (1, rho * vs)):
                        eq = dm.eq[n, comp]
                        if eq >= 0:
                            rows.append(eq)
                            vals.append(c * tw)
                self._terms.append((col, k, nodes, trib, sign))
        self.C = sp.csr_matrix((vals, (rows, rows)), shape=(dm.n_eq, dm.n_eq))

    def load(self, t: float) -> np.ndarray:
        """Dashpot drive ``C_b v_ff`` plus free-field traction increments."""
        f = np.zeros(2 * self.model.mesh.n_nodes)
        v_full = np.zeros(2 * self.model.mesh.n_nodes)
        cache = {}
        for col, k, nodes, trib, sign in self._terms:
            if id(col) not in cache:
                cache[id(col)] = col.interp(t)
            v, ds = cache[id(col)]
            sxx, sxy = ds[k, 0], ds[k, 3]
            for n, tw in zip(nodes, trib):
                f[2 * n] += sign * sxx * tw
                f[2 * n + 1] += sign * sxy * tw
                cn = col.node_map[int(n)]
                v_full[2 * n:2 * n + 2] = v[cn]
        # Velocities are nodal values, not sums: scatter them through the map directly.
        m = self.dm.flat >= 0
        v_eq = np.zeros(self.dm.n_eq)
        v_eq[self.dm.flat[m]] = v_full[m]
        return self.dm.gather(f) + self.C @ v_eq


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

def dynamic_supports(model: FEModel, mode: str):
    """Supports and ties for the dynamic phase."""
    b = model.mesh.boundary_sets
    base = [(int(n), c) for n in b["Base"] for c in (0, 1)]
    if mode == "rigid":
        return model.static_supports(), []
    if mode == "free_field":
        return base, []
    act = model.active_nodes()
    nodes = model.mesh.nodes
    left = [n for n in b["LeftSide"] if act[n]]
    right = {round(nodes[n, 1], 9): n for n in b["RightSide"] if act[n]}
    ties = []
    for n in left:
        r = right.get(round(nodes[n, 1], 9))
        if r is not None and nodes[n, 1] > 0.0:
            ties += [(int(n), int(r), 0), (int(n), int(r), 1)]
    return base, ties


def newmark_dynamic_solve(model: FEModel, motion, settings: DynamicSolveSettings,
                          recorder: Callable | None = None,
                          duration: float | None = None) -> DynamicResult:
    """Integrate the model from its committed (static) state under ``motion``.

    ``motion`` needs ``dt`` (s) and ``accel_ms2`` (array, m/s^2). The base
    acceleration is interpolated linearly to the solver step. ``recorder(t,
    integrator)`` is called at the initial instant and after every step.
    """
    acc = np.asarray(motion.accel_ms2, float)
    t_motion = np.arange(len(acc)) * motion.dt
    T = t_motion[-1] if duration is None else duration
    n_steps = int(round(T / settings.dt))
    times = np.arange(n_steps + 1) * settings.dt

    def a_g(t):
        return float(np.interp(t, t_motion, acc, right=0.0))

    fixed, ties = dynamic_supports(model, settings.lateral_boundary)
    boundary = None
    if settings.lateral_boundary == "free_field":
        columns = [run_free_field(extract_column(model, side), settings, times, a_g)
                   for side in ("left", "right")]
        model.set_supports(fixed, ties)
        boundary = FreeFieldBoundary(model, model.dof_map, columns)
    else:
        model.set_supports(fixed, ties)
    integ = NewmarkIntegrator(model, settings,
                              extra_damping=None if boundary is None else boundary.C)
    extra = None if boundary is None else boundary.load
    integ.initialize(a_g(0.0), None if extra is None else extra(0.0))
    result = DynamicResult(times, np.array([a_g(t) for t in times]))
    energy = {k: [0.0] for k in integ.energy}
    if recorder is not None:
        recorder(0.0, integ)
    for k in range(1, n_steps + 1):
        it, nsub = advance(integ, times[k - 1], settings.dt, a_g, extra)
        result.steps.append(StepInfo(times[k], it, nsub))
        for key in energy:
            energy[key].append(integ.energy[key])
        if recorder is not None:
            recorder(times[k], integ)
    result.energy = {k: np.array(v) for k, v in energy.items()}
    return result


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, model: FEModel, time: float = 0.0, velocity=None,
                    acceleration=None, label: str = "") -> None:
    """Write the model state as a compressed ``.npz`` archive.

    Arrays: ``u`` (2 n_nodes), ``stress``/``strain``/``plastic_strain``
    (n_points, 4), ``yielded`` (n_points), ``active`` (n_elements),
    ``velocity``/``acceleration`` (full layout, zero if absent) and scalars
    ``time`` and ``label``.
    """
    n = model.n_dofs
    np.savez_compressed(
        path, u=model.u, stress=model.state.stress, strain=model.state.strain,
        plastic_strain=model.state.plastic_strain, yielded=model.state.yielded,
        active=model.active, time=np.float64(time), label=np.str_(label),
        velocity=np.zeros(n) if velocity is None else velocity,
        acceleration=np.zeros(n) if acceleration is None else acceleration)


def load_checkpoint(path, model: FEModel) -> dict:
    """Restore a checkpoint into ``model``; returns the remaining fields."""
    with np.load(path) as z:
        model.u = z["u"].copy()
        model.state = GaussState(z["stress"].copy(), z["strain"].copy(),
                                 z["plastic_strain"].copy(), z["yielded"].copy())
        model.active = z["active"].copy()
        model.invalidate()
        return {"time": float(z["time"]), "label": str(z["label"]),
                "velocity": z["velocity"].copy(), "acceleration": z["acceleration"].copy()}
