"""Command-line front end.

Exit codes: 0 success, 1 mesh check failed, 2 invalid parameters or
config, 3 solver failure, 4 motion-file error. Tables go to stdout and
diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, MotionSpec, RunConfig, load_config
from .mesh import MeshGradingError, build_site_mesh, wave_resolution_check, wave_size_limit
from .pipeline.motion import MotionFileError, load_ground_motion, synthesize_motion
from .pressure_models import (PressureMode, SeismicCoefficients, ValidityDomainError,
                              WallSoilParams, mo_coefficient, wood_rigid_increment)
from .solvers.dynamic import DynamicSolveError
from .solvers.modal import ModalConvergenceError
from .solvers.static import StageFailure

EXIT_OK = 0
EXIT_MESH_CHECK = 1
EXIT_INVALID = 2
EXIT_SOLVER = 3
EXIT_MOTION = 4

VALIDITY_MARKER = "invalid"


def _err(msg: str) -> None:
    print(f"seiswall: {msg}", file=sys.stderr)


def parse_grid(text: str) -> np.ndarray:
    """``start:step:stop`` (inclusive) or a comma list; empty text gives no points."""
    text = text.strip()
    if not text:
        return np.zeros(0)
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) != 3 or parts[1] <= 0.0:
            raise ValueError("grid must be start:step:stop with a positive step")
        start, step, stop = parts
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(max(n, 0))
    return np.array([float(v) for v in text.split(",") if v.strip()])


def _load_config(path) -> RunConfig:
    return RunConfig() if path is None else load_config(path)


# ---------------------------------------------------------------------------
# mo-table
# ---------------------------------------------------------------------------

def mo_table_rows(p: WallSoilParams, grid, k_v: float = 0.0, f_p: float = 1.0) -> list[list[str]]:
    rows = []
    for k_h in grid:
        c = SeismicCoefficients(float(k_h), k_v)
        cells = [f"{k_h:.6g}"]
        for mode in (PressureMode.ACTIVE, PressureMode.PASSIVE):
            try:
                cells.append(f"{mo_coefficient(p, c, mode):.6f}")
            except ValidityDomainError:
                cells.append(VALIDITY_MARKER)
        cells.append(f"{wood_rigid_increment(p, abs(float(k_h)), f_p)[1]:.6f}")
        rows.append(cells)
    return rows


def cmd_mo_table(args) -> int:
    try:
        cfg = _load_config(args.config)
        s = cfg.soil
        p = WallSoilParams.from_degrees(args.phi if args.phi is not None else s.phi_deg,
                                        args.delta if args.delta is not None else s.delta_deg,
                                        args.beta, args.slope, s.gamma)
        grid = parse_grid(args.kh)
        if args.kv >= 1.0:
            raise ValueError("k_v must be < 1")
        rows = mo_table_rows(p, grid, args.kv, cfg.analysis.wood_fp)
    except (ValueError, ConfigError) as exc:
        _err(f"invalid parameters: {exc}")
        return EXIT_INVALID
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("k_h", "K_ae", "K_pe", "dK_wood"))
    w.writerows(rows)
    return EXIT_OK


# ---------------------------------------------------------------------------
# static
# ---------------------------------------------------------------------------

def cmd_static(args) -> int:
    from .pipeline.run import run_static, static_report
    from .solvers.dynamic import save_checkpoint
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    try:
        st = run_static(cfg)
    except StageFailure as exc:
        last = exc.residual_history[-1] if exc.residual_history else float("nan")
        _err(f"stage '{exc.stage}' failed: {exc} (last relative residual {last:.3e})")
        return EXIT_SOLVER
    except (ValueError, MeshGradingError) as exc:
        _err(f"invalid model: {exc}")
        return EXIT_INVALID
    for r in st.stages:
        print(f"# stage {r.name}: substeps={r.substeps} newton_iterations={r.total_iterations} "
              f"max_displacement={r.max_displacement:.4e} m", file=sys.stderr)
    report = static_report(st)
    w = csv.writer(sys.stdout, lineterminator="\n")
    cols = ("side", "H", "P", "K", "Y", "Y_over_H")
    w.writerow(cols)
    for row in report:
        w.writerow([row["side"]] + [f"{row[c]:.6g}" for c in cols[1:]])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "static_report.csv", "w", newline="") as fh:
            fw = csv.writer(fh, lineterminator="\n")
            fw.writerow(cols)
            for row in report:
                fw.writerow([row["side"]] + [f"{row[c]:.10g}" for c in cols[1:]])
        save_checkpoint(out / "static_state.npz", st.model, 0.0, label="end_of_construction")
    return EXIT_OK


# ---------------------------------------------------------------------------
# dynamic
# ---------------------------------------------------------------------------

def motion_from_spec(spec: MotionSpec, base_dir: Path | None = None):
    if spec.path is not None:
        path = Path(spec.path)
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        return load_ground_motion(path, spec.units, spec.label)
    return synthesize_motion(spec.kind, spec.amplitude_g, spec.frequency, spec.duration,
                             spec.dt, label=spec.label)


def _unique_labels(motions):
    seen = {}
    out = []
    for m in motions:
        n = seen.get(m.label, 0)
        seen[m.label] = n + 1
        out.append(m.label if n == 0 else f"{m.label}_{n + 1}")
    return out


def _dynamic_job(cfg, static, motion, out_dir, seed):
    from .pipeline.run import run_dynamic
    run = run_dynamic(cfg, motion, static, out_dir, seed)
    return len(run.rows), run.observations


def cmd_dynamic(args) -> int:
    from .pipeline.run import run_static
    try:
        cfg = _load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_INVALID
    base_dir = Path(args.config).parent if args.config else None
    try:
        motions = [load_ground_motion(p, args.units) for p in args.motion or []]
        motions += [motion_from_spec(s, base_dir) for s in cfg.motions]
    except (MotionFileError, ValueError) as exc:
        _err(f"motion error: {exc}")
        return EXIT_MOTION
    if not motions:
        _err("motion error: no motion given (use --motion or the config 'motions' list)")
        return EXIT_MOTION
    out_root = Path(args.out or cfg.output_dir)
    try:
        static = run_static(cfg)
        labels = _unique_labels(motions)
        jobs = [(cfg, static, m, out_root / lab, args.seed) for m, lab in zip(motions, labels)]
        if args.jobs > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                results = list(pool.map(_dynamic_job, *zip(*jobs)))
        else:
            results = [_dynamic_job(*j) for j in jobs]
    except StageFailure as exc:
        _err(f"stage '{exc.stage}' failed: {exc}")
        return EXIT_SOLVER
    except (DynamicSolveError, ModalConvergenceError) as exc:
        _err(f"solver failure: {exc}")
        return EXIT_SOLVER
    except ValueError as exc:
        _err(f"motion error: {exc}")
        return EXIT_MOTION
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(("motion", "rows", "obs_a", "obs_b", "obs_c", "obs_d", "obs_e", "obs_g", "output"))
    for lab, (n, obs) in zip(labels, results):
        f = obs["flags"]
        w.writerow([lab, n] + [f.get(k) for k in "abcdeg"] + [str(out_root / lab)])
    return EXIT_OK


# ---------------------------------------------------------------------------
# check-mesh
# ---------------------------------------------------------------------------

def cmd_check_mesh(args) -> int:
    try:
        cfg = _load_config(args.config)
        mesh = build_site_mesh(cfg.site)
    except (ConfigError, MeshGradingError, ValueError) as exc:
        _err(str(exc))
        return EXIT_INVALID
    mats = {k: m.elastic for k, m in cfg.materials().items()}
    fc = cfg.dynamic.f_cutoff
    rep = wave_resolution_check(mesh, mats, fc)
    print(f"elements: {mesh.n_elements}")
    print(f"cutoff_hz: {fc:g}")
    for k, ep in sorted(mats.items()):
        print(f"material {k}: size_limit_m={wave_size_limit(ep, fc):.4f}")
    print(f"max_edge_m: {rep.max_edge.max():.4f}")
    print(f"passed: {rep.all_passed}")
    for f in rep.failures()[:20]:
        print(f"  element {f['element']}: edge {f['max_edge']:.4f} > {f['required_size']:.4f}")
    return EXIT_OK if rep.all_passed else EXIT_MESH_CHECK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seiswall", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized start vectors")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mo-table", parents=[common], help="pseudo-static coefficient table")
    p.add_argument("--kh", default="0:0.05:0.4", help="k_h grid, start:step:stop or a,b,c")
    p.add_argument("--kv", type=float, default=0.0)
    p.add_argument("--phi", type=float, help="friction angle (deg)")
    p.add_argument("--delta", type=float, help="wall friction angle (deg)")
    p.add_argument("--beta", type=float, default=0.0, help="wall back inclination (deg)")
    p.add_argument("--slope", type=float, default=0.0, help="backfill slope (deg)")
    p.set_defaults(func=cmd_mo_table)

    p = sub.add_parser("static", parents=[common], help="staged construction analysis")
    p.set_defaults(func=cmd_static)

    p = sub.add_parser("dynamic", parents=[common], help="staged construction then shaking")
    p.add_argument("--motion", action="append", help="motion file (repeatable)")
    p.add_argument("--units", help="acceleration units of --motion files (g or m/s2)")
    p.add_argument("--jobs", type=int, default=1, help="parallel workers across motions")
    p.set_defaults(func=cmd_dynamic)

    p = sub.add_parser("check-mesh", parents=[common], help="element size vs wavelength report")
    p.set_defaults(func=cmd_check_mesh)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
