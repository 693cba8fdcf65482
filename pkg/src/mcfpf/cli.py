"""Command line: ``mcfpf {run,sweep,geodesics,verify,profile}``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from . import diagnostics as dg
from . import field as fld
from . import geodesic as geo
from . import potential as pt
from . import sharp_interface as si
from . import solver as sv
from .config import ConfigError, ExperimentConfig, from_dict, load_config

AGGREGATE_COLUMNS = (
    "epsilon", "n", "dt", "status", "final_time", "energy_eps", "energy_sharp", "gap", "integrated_gap",
    "radius", "lambda_mean", "lambda_max_abs", "lambda_sq_integral", "run_dir",
)


def _write_json(path: Path, data) -> None:
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def execute(cfg: ExperimentConfig, out: Path, log=print) -> dict:
    """Run one configured experiment and write its outputs; returns the final-time summary."""
    out.mkdir(parents=True, exist_ok=True)
    manifest_path = out / "manifest.json"
    manifest = {
        "config": cfg.raw,
        "version": __version__,
        "status": "running",
        "files": [],
        "wall_clock_seconds": None,
    }
    _write_json(manifest_path, manifest)
    start = time.perf_counter()
    pot, grid = cfg.potential, cfg.grid
    files = manifest["files"]
    summary = {"status": "failed"}
    try:
        u0 = sv.prepare_initial_data(cfg.geometry, pot, grid, cfg.epsilon)
        want_mesh = cfg.mesh and grid.dim <= 2
        sigma = geo.cached_surface_tensions(pot) if want_mesh else None
        window = dg.bump(grid, **cfg.window) if cfg.window else None
        tilt = None
        if cfg.tilt:
            tilt = (cfg.tilt["phase"], np.asarray(cfg.tilt["direction"], dtype=float),
                    dg.bump(grid, **cfg.tilt["window"]))
        forcing = cfg.dynamics.forcing
        reports, mon_t, mon_e, meshes = [], [], [], []
        prev = [None]
        nsteps = int(math.ceil((cfg.t_end - u0.time) / cfg.stepper.dt - 1e-9)) if cfg.t_end > u0.time else 0

        def observe(o):
            reports.append(dg.report(o, prev[0], pot, window, forcing, tilt))
            prev[0] = o
            final = o.step == nsteps
            snap = o.step == 0 or final or (cfg.snapshot_stride and o.step % cfg.snapshot_stride == 0)
            if snap:
                name = f"snapshot_{o.step:08d}.mcfpf"
                fld.save_snapshot(o.state, out / name)
                files.append(name)
            if want_mesh:
                mesh = si.interface_mesh(o.state, pot)
                mon_t.append(o.time)
                mon_e.append(o.energy)
                meshes.append(mesh)
                if snap:
                    name = f"mesh_{o.step:08d}.csv"
                    mesh.to_csv(out / name)
                    files.append(name)

        traj = sv.run(u0, cfg.dynamics, cfg.stepper, cfg.t_end, observers=[observe], stride=cfg.stride,
                      keep_states=False)
        dg.reports_to_csv(reports, out / "diagnostics.csv")
        files.append("diagnostics.csv")
        summary = {"status": "completed", "final_time": traj.final.time, "energy_eps": traj.observations[-1].energy}
        if want_mesh:
            mon = si.convergence_monitor(mon_t, mon_e, meshes, sigma)
            mon.to_csv(out / "monitor.csv")
            files.append("monitor.csv")
            summary.update(energy_sharp=float(mon.energy_sharp[-1]), gap=float(mon.gap[-1]),
                           integrated_gap=mon.integrated_gap)
        if grid.dim == 2:
            part = si.extract_partition(traj.final, pot)
            inside = getattr(cfg.geometry, "inside", None)
            if inside is not None and np.any(part.labels == inside):
                summary["radius"] = si.radius_estimate(part, inside)
        if traj.lambdas:
            lam = np.array([l[1] for l in traj.lambdas])
            summary.update(lambda_mean=float(lam.mean()), lambda_max_abs=float(np.max(np.abs(lam))),
                           lambda_sq_integral=float(np.sum(lam**2) * cfg.stepper.dt))
        manifest["status"] = "completed"
        log(f"completed {traj.steps} steps to t = {traj.final.time:.6g}; outputs in {out}")
    except sv.SolverError as exc:
        manifest["status"] = "failed"
        manifest["error"] = str(exc)
        log(f"solver error: {exc}", file=sys.stderr)
    finally:
        manifest["wall_clock_seconds"] = time.perf_counter() - start
        _write_json(manifest_path, manifest)
    return summary


def _quiet(*args, **kwargs):
    pass


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = from_dict({**cfg.raw, "seed": args.seed})
    return cfg


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg.output)
    summary = execute(cfg, out, _quiet if args.quiet else print)
    return 0 if summary["status"] == "completed" else 1


def _sweep_worker(job):
    raw, point, out, threads = job
    fld.set_threads(threads)
    cfg = from_dict(raw).with_point(point)
    try:
        summary = execute(cfg, Path(out), _quiet)
    except Exception as exc:  # recorded in the aggregate, the sweep continues
        summary = {"status": f"failed: {exc}"}
    return point, out, summary


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if not cfg.sweep:
        raise ConfigError("sweep", "no sweep axes given")
    out = Path(args.out or cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    points = cfg.sweep_points()
    jobs = [(cfg.raw, p, str(out / f"run_{k:03d}"), 1) for k, p in enumerate(points)]
    workers = max(1, min(args.threads or 1, len(jobs)))
    if workers == 1:
        results = [_sweep_worker(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_worker, jobs))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(AGGREGATE_COLUMNS)
    failed = 0
    for point, run_dir, summary in results:
        failed += summary["status"] != "completed"
        row = {**point, **summary, "run_dir": os.path.relpath(run_dir, out)}
        w.writerow([_fmt(row.get(c)) for c in AGGREGATE_COLUMNS])
    (out / "aggregate.csv").write_text(buf.getvalue())
    if not args.quiet:
        print(f"{len(results) - failed}/{len(results)} runs completed; aggregate in {out / 'aggregate.csv'}")
    return 1 if failed else 0


def _resolve_potential(args) -> pt.Potential:
    if args.config:
        return load_config(args.config).potential
    return pt.builtin(args.potential)


def cmd_geodesics(args) -> int:
    pot = _resolve_potential(args)
    wells = pot.wells
    p = len(wells)
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    sigma = np.zeros((p, p))
    status = 0
    for i in range(p):
        for j in range(p):
            if i == j:
                continue
            try:
                curve = geo.geodesic_distance(pot, wells[i], wells[j], args.nodes, args.tol)
            except geo.GeodesicError as exc:
                print(f"geodesic {i}->{j}: {exc}", file=sys.stderr)
                curve, status = exc.curve, 1
            sigma[i, j] = curve.length
            if out:
                with open(out / f"curve_{i}_{j}.csv", "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow([f"u{k}" for k in range(pot.dim_state)])
                    for node in curve.nodes:
                        w.writerow([repr(float(v)) for v in node])
    sigma = 0.5 * (sigma + sigma.T)
    w = csv.writer(sys.stdout, lineterminator="\n")
    for row in sigma:
        w.writerow([repr(float(v)) for v in row])
    return status


def cmd_profile(args) -> int:
    pot = _resolve_potential(args)
    i, j = args.pair
    prof = geo.optimal_profile(pot, i, j)
    s = np.linspace(-args.half_width, args.half_width, args.samples)
    q = prof(s)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["s"] + [f"q{k}" for k in range(pot.dim_state)])
    for k in range(len(s)):
        w.writerow([repr(float(s[k]))] + [repr(float(v)) for v in q[:, k]])
    return 0


def cmd_verify(args) -> int:
    from .recipes import SUITES, format_report

    results = SUITES[args.suite]()
    sys.stdout.write(format_report(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    from .recipes import SUITES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment file")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--threads", type=int, help="FFT threads / sweep workers (default: MCFPF_THREADS or 1)")
    common.add_argument("--seed", type=int, help="random seed (overrides the config)")
    common.add_argument("--quiet", action="store_true", help="suppress progress messages")

    parser = argparse.ArgumentParser(prog="mcfpf", description="Multi-phase Allen-Cahn simulator and checks")
    parser.add_argument("--version", action="version", version=f"mcfpf {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", parents=[common], help="run one experiment")
    p.set_defaults(func=cmd_run, needs_config=True)
    p = sub.add_parser("sweep", parents=[common], help="run the cartesian product of the sweep axes")
    p.set_defaults(func=cmd_sweep, needs_config=True)
    p = sub.add_parser("geodesics", parents=[common], help="print the surface-tension matrix as CSV")
    p.add_argument("--potential", default="double_well", choices=sorted(pt.BUILTINS))
    p.add_argument("--nodes", type=int, default=65)
    p.add_argument("--tol", type=float, default=1e-10)
    p.set_defaults(func=cmd_geodesics, needs_config=False)
    p = sub.add_parser("profile", parents=[common], help="print an optimal transition profile as CSV")
    p.add_argument("--potential", default="double_well", choices=sorted(pt.BUILTINS))
    p.add_argument("--pair", type=int, nargs=2, default=(0, 1), metavar=("I", "J"))
    p.add_argument("--half-width", type=float, default=5.0)
    p.add_argument("--samples", type=int, default=101)
    p.set_defaults(func=cmd_profile, needs_config=False)
    p = sub.add_parser("verify", parents=[common], help="run an acceptance recipe")
    p.add_argument("suite", choices=sorted(SUITES))
    p.set_defaults(func=cmd_verify, needs_config=False)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        fld.set_threads(args.threads)
    if args.needs_config and not args.config:
        parser.error(f"{args.command} needs --config")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
