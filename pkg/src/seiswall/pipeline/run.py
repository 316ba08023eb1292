"""Staged-static then dynamic analysis of the wall site, with report files."""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..config import RunConfig, dump_config
from ..constitutive import K0Profile
from ..mesh import Mesh, build_site_mesh, stage_plan, wave_resolution_check
from ..solvers.dynamic import (DynamicResult, DynamicSolveSettings, newmark_dynamic_solve,
                               rayleigh_coefficients, save_checkpoint)
from ..solvers.modal import lowest_frequency
from ..solvers.model import FEModel
from ..solvers.static import StageResult, run_staged_construction
from .motion import GroundMotion, design_lowpass, lowpass_filter, predominant_frequency
from .postprocess import (AnalyticalParams, ComparisonRow, PressureRecord, Side,
                          comparison_table, face_stress, k_h_series, probe_node, select_peaks,
                          summarize_observations, wall_face)

SIDES = (Side.ACTIVE, Side.PASSIVE)
COMPARISON_COLUMNS = ("time", "side", "k_h", "K_fe", "K_mo", "K_wood", "Y", "Y_over_H",
                      "motion", "k_h_base", "row")
VALIDITY_MARKER = "invalid"


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.10g}"
    return str(v)


# ---------------------------------------------------------------------------
# Static stage
# ---------------------------------------------------------------------------

@dataclass
class StaticRun:
    config: RunConfig
    mesh: Mesh
    model: FEModel
    stages: list[StageResult]
    faces: dict
    records: dict

    def analytical(self) -> AnalyticalParams:
        return analytical_params(self.config)


def analytical_params(cfg: RunConfig) -> AnalyticalParams:
    s = cfg.soil
    return AnalyticalParams(math.radians(s.phi_deg), s.K0, s.gamma,
                            math.radians(s.delta_deg), cfg.analysis.wood_fp)


def build_model(cfg: RunConfig) -> FEModel:
    return FEModel(build_site_mesh(cfg.site), cfg.materials())


def static_records(model: FEModel, faces: dict, gamma: float, time: float = 0.0,
                   stress=None, k_h=None) -> dict:
    k_h = k_h or {}
    return {side: PressureRecord(time, side, face_stress(model, face, stress), face.h, face.y,
                                 face.H, gamma, float(k_h.get(side, 0.0)))
            for side, face in faces.items()}


def run_static(cfg: RunConfig) -> StaticRun:
    """Geostatic initialisation and excavation; raises ``StageFailure`` on divergence."""
    model = build_model(cfg)
    mesh = model.mesh
    profile = K0Profile(cfg.soil.K0, cfg.soil.gamma, cfg.site.surface_y)
    stages = run_staged_construction(model, stage_plan(cfg.site, mesh), profile, cfg.static,
                                     soil_density=cfg.soil.rho)
    faces = {side: wall_face(mesh, side, cfg.analysis.pressure_extent) for side in SIDES}
    return StaticRun(cfg, mesh, model, stages, faces,
                     static_records(model, faces, cfg.soil.gamma))


# ---------------------------------------------------------------------------
# Dynamic stage
# ---------------------------------------------------------------------------

@dataclass
class RunHistory:
    """Per-step probe accelerations and wall-face stresses."""

    times: list = field(default_factory=list)
    base_accel: list = field(default_factory=list)
    probe_accel: dict = field(default_factory=lambda: {s: [] for s in SIDES})
    face_sigma: dict = field(default_factory=lambda: {s: [] for s in SIDES})

    def arrays(self):
        return (np.array(self.times), np.array(self.base_accel),
                {s: np.array(v) for s, v in self.probe_accel.items()},
                {s: np.array(v) for s, v in self.face_sigma.items()})


@dataclass
class DynamicRun:
    motion: GroundMotion
    static: StaticRun
    f1: float
    f2: float
    rayleigh: tuple
    probes: dict
    result: DynamicResult
    times: np.ndarray
    base_accel: np.ndarray
    k_h: dict
    face_sigma: dict
    records: list
    rows: list[ComparisonRow]
    observations: dict
    filter_order: int | None = None

    def peak_rows(self, side: Side) -> list[ComparisonRow]:
        return [r for r in self.rows if r.side is side and r.kind == "peak"]

    def static_rows(self) -> list[ComparisonRow]:
        return [r for r in self.rows if r.kind == "static"]


def prepare_motion(cfg: RunConfig, motion: GroundMotion) -> tuple[GroundMotion, int | None]:
    if not cfg.dynamic.filter_motion:
        return motion, None
    order = design_lowpass(motion.dt, cfg.dynamic.f_cutoff).order
    return lowpass_filter(motion, cfg.dynamic.f_cutoff), order


def damping_frequencies(cfg: RunConfig, model: FEModel, motion: GroundMotion,
                        seed: int = 0) -> tuple[float, float]:
    """First-mode and excitation frequencies for the Rayleigh fit.

    ``f1`` comes from the elastic modes of the excavated model on its static
    supports. A motion with no spectral content falls back to ``f2 = f1``.
    """
    d = cfg.damping
    f1 = lowest_frequency(model, seed=seed).frequencies[0] if d.f1 == "auto" else float(d.f1)
    if d.f2 == "predominant":
        try:
            f2 = predominant_frequency(motion, cfg.dynamic.f_cutoff)
        except ValueError:
            f2 = f1
    else:
        f2 = float(d.f2)
    return float(f1), float(f2)


def run_dynamic(cfg: RunConfig, motion: GroundMotion, static: StaticRun | None = None,
                out_dir=None, seed: int = 0) -> DynamicRun:
    """Shake the excavated model and tabulate coefficients at k_h peaks.

    ``static`` is copied, not modified, so one construction analysis can
    feed several motions. ``seed`` fixes the modal start vectors.
    """
    static = run_static(cfg) if static is None else static
    model = copy.deepcopy(static.model)
    motion, order = prepare_motion(cfg, motion)
    f1, f2 = damping_frequencies(cfg, model, motion, seed)
    a0, a1 = rayleigh_coefficients(cfg.damping.zeta, f1, f2)
    dc = cfg.dynamic
    settings = DynamicSolveSettings(
        dt=dc.dt, newmark_beta=dc.newmark_beta, newmark_gamma=dc.newmark_gamma,
        rayleigh_a0=a0, rayleigh_a1=a1, max_newton_iters=dc.max_newton_iters,
        force_tolerance=dc.force_tolerance, max_halvings=dc.max_halvings,
        lateral_boundary=dc.lateral_boundary, lumped_mass=dc.lumped_mass)
    phi = math.radians(cfg.soil.phi_deg)
    delta = math.radians(cfg.soil.delta_deg)
    probes = {side: probe_node(model, side, phi, cfg.analysis.pressure_extent, delta)
              for side in SIDES}
    acc = motion.accel_ms2
    t_motion = np.arange(acc.size) * motion.dt
    history = RunHistory()

    def recorder(t, integ):
        a_g = float(np.interp(t, t_motion, acc, right=0.0))
        history.times.append(t)
        history.base_accel.append(a_g)
        for side in SIDES:
            eq = integ.dm.eq[probes[side], 0]
            a_rel = integ.a[eq] if eq >= 0 else 0.0
            history.probe_accel[side].append(a_rel + a_g)
            history.face_sigma[side].append(face_stress(model, static.faces[side]))

    result = newmark_dynamic_solve(model, motion, settings, recorder)
    times, base, probe_acc, sigma = history.arrays()
    gamma = cfg.soil.gamma
    k_h = {side: k_h_series(probe_acc[side], model.gravity) for side in SIDES}
    k_base = k_h_series(base, model.gravity)
    records, kinds, kb = [], [], []
    for side in SIDES:
        records.append(static.records[side])
        kinds.append("static")
        kb.append(0.0)
        face = static.faces[side]
        for i in select_peaks(k_h[side], cfg.analysis.noise_floor):
            records.append(PressureRecord(float(times[i]), side, sigma[side][i], face.h,
                                          face.y, face.H, gamma, float(k_h[side][i])))
            kinds.append("peak")
            kb.append(float(k_base[i]))
    rows = comparison_table(records, static.analytical(), motion.label, kb, kinds)
    obs = summarize_observations(rows).as_dict()
    run = DynamicRun(motion, static, f1, f2, (a0, a1), probes, result, times, base, k_h,
                     sigma, records, rows, obs, order)
    if out_dir is not None:
        write_outputs(run, out_dir, final_model=model)
    return run


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def comparison_rows_as_text(rows: list[ComparisonRow]) -> list[list[str]]:
    out = []
    for r in rows:
        out.append([_fmt(r.time), r.side.value, _fmt(r.k_h), _fmt(r.K_fe),
                    VALIDITY_MARKER if r.K_mo is None else _fmt(r.K_mo), _fmt(r.K_wood),
                    _fmt(r.Y), _fmt(r.Y_over_H), r.motion, _fmt(r.k_h_base), r.kind])
    return out


def write_comparison_csv(rows: list[ComparisonRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COMPARISON_COLUMNS)
        w.writerows(comparison_rows_as_text(rows))


def write_profiles_csv(records: list[PressureRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "side", "element", "y_i", "h_i", "sigma_i"))
        for r in sorted(records, key=lambda r: (r.time, r.side.value)):
            for k, (y, h, s) in enumerate(zip(r.y, r.h, r.sigma)):
                w.writerow((_fmt(r.time), r.side.value, k, _fmt(float(y)), _fmt(float(h)),
                            _fmt(float(s))))


def write_kh_csv(run: DynamicRun, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("time", "k_h_base", "k_h_active", "k_h_passive"))
        g = run.static.model.gravity
        for i, t in enumerate(run.times):
            w.writerow((_fmt(float(t)), _fmt(float(run.base_accel[i] / g)),
                        _fmt(float(run.k_h[Side.ACTIVE][i])),
                        _fmt(float(run.k_h[Side.PASSIVE][i]))))


def static_report(static: StaticRun) -> list[dict]:
    """Resultant, coefficient and height ratio on both sides after construction."""
    out = []
    for side in SIDES:
        r = static.records[side]
        out.append({"side": side.value, "H": r.H, "P": r.P, "K": r.K_back,
                    "Y": r.Y, "Y_over_H": r.Y_over_H})
    return out


def run_meta_text(run: DynamicRun) -> str:
    cfg = run.static.config
    st = run.static
    model = st.model
    wr = wave_resolution_check(model.mesh, {k: m.elastic for k, m in cfg.materials().items()},
                               cfg.dynamic.f_cutoff)
    lines = [
        f"motion_label: {run.motion.label}",
        f"motion_dt: {run.motion.dt:.10g}",
        f"motion_samples: {run.motion.samples.size}",
        f"motion_pga_g: {run.motion.pga:.10g}",
        f"solver_dt: {cfg.dynamic.dt:.10g}",
        f"filter: {'butterworth zero-phase' if cfg.dynamic.filter_motion else 'none'}"
        f" cutoff {cfg.dynamic.f_cutoff:g} Hz"
        + (f" order {run.filter_order}" if run.filter_order is not None else ""),
        f"f1_estimate_hz: {run.f1:.10g}",
        f"f2_excitation_hz: {run.f2:.10g}",
        f"rayleigh_a0: {run.rayleigh[0]:.10g}",
        f"rayleigh_a1: {run.rayleigh[1]:.10g}",
        f"element_count: {model.mesh.n_elements}",
        f"active_element_count: {int(model.active.sum())}",
        f"node_count: {model.mesh.n_nodes}",
        f"wave_resolution_passed: {wr.all_passed}",
        f"probe_nodes: active={run.probes[Side.ACTIVE]} passive={run.probes[Side.PASSIVE]}",
        f"newton_iterations_total: {sum(s.iterations for s in run.result.steps)}",
        f"energy_balance_error: {run.result.energy_error:.3e}",
        "unused_inputs: wall.steel_yield, wall.steel_E (elastic concrete wall)",
        "config:",
    ]
    lines += ["  " + ln for ln in dump_config(cfg).splitlines()]
    return "\n".join(lines) + "\n"


def write_outputs(run: DynamicRun, out_dir, final_model: FEModel | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(run.rows, out / "comparison.csv")
    write_profiles_csv(run.records, out / "pressure_profiles.csv")
    write_kh_csv(run, out / "kh_series.csv")
    (out / "run_meta.txt").write_text(run_meta_text(run))
    (out / "observations.json").write_text(json.dumps(run.observations, indent=2, sort_keys=True)
                                           + "\n")
    save_checkpoint(out / "static_state.npz", run.static.model, 0.0, label="end_of_construction")
    if final_model is not None:
        save_checkpoint(out / "final_state.npz", final_model, float(run.times[-1]),
                        label="end_of_motion")
    return out

