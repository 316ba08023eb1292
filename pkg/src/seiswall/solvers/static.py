"""Load-controlled Newton solution and staged construction."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..constitutive import K0Profile
from ..fem.assembly import LinearSolver, SingularSystemError
from ..mesh import MATERIAL_WALL, Stage
from .model import FEModel, geostatic_initialize


@dataclass(frozen=True)
class StaticSolveSettings:
    max_newton_iters: int = 30
    force_tolerance: float = 1e-6
    displacement_tolerance: float = 1e-6
    load_substeps: int = 5
    max_substep_cuts: int = 8

    def __post_init__(self):
        for name in ("force_tolerance", "displacement_tolerance"):
            v = getattr(self, name)
            if not 0.0 < v <= 1e-2:
                raise ValueError(f"{name} must lie in (0, 1e-2]")
        if self.load_substeps < 1:
            raise ValueError("load_substeps must be >= 1")
        if self.max_newton_iters < 1:
            raise ValueError("max_newton_iters must be >= 1")


class StageFailure(RuntimeError):
    """Newton iteration did not converge; ``residual_history`` holds relative norms."""

    def __init__(self, stage: str, residual_history, message: str = ""):
        self.stage = stage
        self.residual_history = list(residual_history)
        super().__init__(message or f"stage '{stage}' failed to converge")


@dataclass
class StageResult:
    name: str
    substeps: int = 0
    iterations: list = field(default_factory=list)
    residual_history: list = field(default_factory=list)
    max_displacement: float = 0.0
    notes: dict = field(default_factory=dict)

    @property
    def total_iterations(self) -> int:
        return int(sum(self.iterations))


def _newton(model: FEModel, target, u_init, ref, settings, history):
    """Newton loop at fixed load; returns ``(converged, u, state, n_solves)``."""
    dm = model.dof_map
    u = u_init.copy()
    u_begin = model.u
    tol = settings.force_tolerance * ref
    last_step = np.inf
    for it in range(settings.max_newton_iters + 1):
        f_int, state, C = model.evaluate(u)
        r = target - dm.gather(f_int)
        rn = float(np.linalg.norm(r))
        history.append(rn / ref)
        if not np.isfinite(rn):
            return False, u, state, it
        stalled = last_step <= settings.displacement_tolerance * max(
            float(np.linalg.norm(u - u_begin)), 1e-12)
        if rn <= tol or (stalled and rn <= 10.0 * tol):
            return True, u, state, it
        if it == settings.max_newton_iters:
            break
        try:
            du = LinearSolver(model.tangent_matrix(C, dm)).solve(r)
        except SingularSystemError:
            return False, u, state, it
        u, rn_next, step = _line_search(model, target, u, dm.scatter(du), rn)
        last_step = step * float(np.linalg.norm(du))
    return False, u, state, settings.max_newton_iters


def _line_search(model, target, u, du_full, rn, max_halvings=4):
    """Backtrack along ``du_full`` until the residual norm decreases.

    Breaks the branch-switching cycles Newton can fall into near yield
    surface corners. Returns the full step if no reduction is found.
    """
    dm = model.dof_map
    step = 1.0
    best = None
    for _ in range(max_halvings + 1):
        trial = u + step * du_full
        f_int = model.evaluate(trial)[0]
        rt = float(np.linalg.norm(target - dm.gather(f_int)))
        if np.isfinite(rt) and rt < rn:
            return trial, rt, step
        if best is None:
            best = (trial, rt, step)
        step *= 0.5
    return best


def newton_static_solve(model: FEModel, f_ext: np.ndarray,
                        settings: StaticSolveSettings = StaticSolveSettings(),
                        stage: str = "stage", u_prescribed: np.ndarray | None = None,
                        f_start: np.ndarray | None = None) -> StageResult:
    """Bring the model to equilibrium with ``f_ext`` (full-length vector).

    The out-of-balance force between the committed internal force (or
    ``f_start``) and ``f_ext`` is applied in ``settings.load_substeps``
    equal increments; prescribed values at constrained dofs
    (``u_prescribed``, full length) are ramped alongside. A substep that
    fails is bisected up to ``max_substep_cuts`` times.
    """
    dm = model.dof_map
    F1 = dm.gather(f_ext)
    F0 = dm.gather(model.internal_force() if f_start is None else f_start)
    fixed = dm.fixed_mask.ravel()
    u0 = model.u.copy()
    up = u0 if u_prescribed is None else np.asarray(u_prescribed, float)
    ref = max(float(np.linalg.norm(F1)), float(np.linalg.norm(F1 - F0)), 1e-12)
    if ref == 1e-12 and u_prescribed is not None and np.any(up[fixed] != u0[fixed]):
        # Purely displacement-driven: scale by the force the full increment provokes.
        u_full = u0.copy()
        u_full[fixed] = up[fixed]
        ref = max(ref, float(np.linalg.norm(dm.gather(model.evaluate(u_full)[0]) - F0)))
    result = StageResult(stage)
    lam, dlam, cuts = 0.0, 1.0 / settings.load_substeps, 0
    while lam < 1.0 - 1e-12:
        lam_n = min(1.0, lam + dlam)
        u_try = model.u.copy()
        u_try[fixed] = u0[fixed] + lam_n * (up[fixed] - u0[fixed])
        hist = []
        ok, u, state, n = _newton(model, F0 + lam_n * (F1 - F0), u_try, ref, settings, hist)
        result.residual_history.extend(hist)
        if ok:
            model.commit(u, state)
            result.iterations.append(n)
            result.substeps += 1
            lam = lam_n
        else:
            cuts += 1
            if cuts > settings.max_substep_cuts:
                raise StageFailure(stage, result.residual_history,
                                   f"stage '{stage}' did not converge at load factor {lam_n:.4g}")
            dlam *= 0.5
    result.max_displacement = float(np.abs(model.u - u0).max(initial=0.0))
    return result


def run_staged_construction(model: FEModel, stages: list[Stage], profile: K0Profile,
                            settings: StaticSolveSettings = StaticSolveSettings(),
                            soil_density: float | None = None) -> list[StageResult]:
    """Geostatic initialisation followed by excavation stages.

    In the geostatic stage the wall is first wished in place with the soil
    density so the at-rest field is self-equilibrated; the extra wall
    weight is then added and displacements are reset to zero. Each later
    stage deactivates its elements and releases their load over
    ``settings.load_substeps`` substeps.
    """
    model.set_supports(model.static_supports())
    results = []
    for st in stages:
        if st.name == "geostatic":
            results.append(_geostatic_stage(model, profile, settings, soil_density))
            continue
        model.deactivate(st.deactivate)
        res = newton_static_solve(model, model.gravity_vector(), settings, st.name)
        results.append(res)
    return results


def _geostatic_stage(model, profile, settings, soil_density):
    true_density = model.density.copy()
    rho_s = profile.gamma / model.gravity * 1000.0 if soil_density is None else soil_density
    wished = true_density.copy()
    wished[model.mesh.material_id == MATERIAL_WALL] = rho_s
    geostatic_initialize(model, profile)
    res = newton_static_solve(model, model.gravity_vector(wished), settings, "geostatic")
    res.notes["self_equilibrium_max_displacement"] = res.max_displacement
    if np.any(wished != true_density):
        wall = newton_static_solve(model, model.gravity_vector(true_density), settings,
                                   "geostatic_wall_weight")
        res.iterations += wall.iterations
        res.substeps += wall.substeps
        res.residual_history += wall.residual_history
        res.notes["wall_weight_max_displacement"] = wall.max_displacement
    model.reset_displacements()
    return res
