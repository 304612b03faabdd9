"""Command line front end: ``collbreak simulate|convergence|stability``.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from pathlib import Path

from . import __version__
from .analysis import (ConvergenceReport, ConvergenceRow, convergence_study, moment,
                       moment_series, resolve_study_dt)
from .config import ExperimentConfig, load_config
from .errors import CollBreakError, ConfigError, MeshError, StabilityError
from .kernels import AtomicBreakage, precompute_tables
from .mesh import cell_average_projection
from .solver import (FALLBACK_DT, SolverConfig, StabilityParams, max_stable_dt,
                     simulate, stability_constant)

log = logging.getLogger("collbreak")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


# ---------------------------------------------------------------------------
# output helpers


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g6(v) -> str:
    return "" if v is None else f"{v:.6g}"


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def convergence_csv(report: ConvergenceReport) -> str:
    rows = [[r.cells, _g6(r.total_number), _g6(r.error),
             "" if r.eoc is None else f"{r.eoc:.4f}"] for r in report.rows]
    return _csv(["cells", "total_number", "error", "eoc"], rows)


def report_to_json(report: ConvergenceReport, config: dict) -> str:
    payload = {
        "version": __version__,
        "config": config,
        "metadata": report.metadata,
        "rows": [{"cells": r.cells, "total_number": r.total_number, "error": r.error,
                  "eoc": r.eoc} for r in report.rows],
    }
    return json.dumps(payload, indent=2)


def report_from_json(text: str) -> ConvergenceReport:
    payload = json.loads(text)
    rows = [ConvergenceRow(int(r["cells"]), float(r["total_number"]), r["error"], r["eoc"])
            for r in payload["rows"]]
    return ConvergenceReport(rows, payload.get("metadata", {}))


# ---------------------------------------------------------------------------
# commands


def _stability_params(cfg: ExperimentConfig, ic, *, allow_inf=False) -> StabilityParams | None:
    case = cfg.case
    ov = cfg.stability_overrides
    b_sup = ov.get("b_sup", case.breakage.sup(case.xmin, case.xmax))
    if math.isinf(b_sup) and not allow_inf:
        return None
    return StabilityParams(
        lam=ov.get("lambda", case.kernel.stability_lambda(case.xmax)),
        R=ov.get("R", case.xmax),
        T=ov.get("T", cfg.t_end),
        b_sup=b_sup,
        c_in_l1=ov.get("c_in_l1", moment(ic, 0)),
        m1_in=ov.get("m1_in", moment(ic, 1)),
        theta=cfg.theta,
    )


def run_simulate(cfg: ExperimentConfig) -> int:
    mesh = cfg.make_mesh()
    ic = cell_average_projection(cfg.case.initial, mesh)
    tables = precompute_tables(mesh, cfg.case.kernel, cfg.case.breakage)
    params = _stability_params(cfg, ic)
    if cfg.dt == "auto" and params is None:
        log.warning("breakage distribution has no finite supremum; using dt=%g", FALLBACK_DT)
        dt = FALLBACK_DT
    else:
        dt = cfg.dt
    scfg = SolverConfig(dt=dt, t_end=cfg.t_end, check_invariants=cfg.check_invariants)
    traj = simulate(ic, tables, scfg, params)
    used_dt = traj[1].time - traj[0].time if len(traj) > 1 else (0.0 if dt == "auto" else dt)
    series = moment_series(traj, (0, 1, 2))
    final = traj[-1]

    out = cfg.out_dir
    atomic_write(out / "density.csv", _csv(
        ["x_center", "width", "c"],
        [[_g6(x), _g6(w), _g6(c)] for x, w, c in zip(mesh.centers, mesh.widths, final.density)]))
    atomic_write(out / "moments.csv", _csv(
        ["t", "M0", "M1", "M2"],
        [[_g6(t), *(_g6(v) for v in row)] for t, row in zip(series.times, series.values)]))
    report = {
        "version": __version__,
        "config": cfg.resolved(),
        "dt": used_dt,
        "steps": len(traj) - 1,
        "final_time": final.time,
        "mesh_edges": mesh.edges.tolist(),
        "final_density": final.density.tolist(),
        "moments": {"t": series.times.tolist(),
                    **{f"M{j}": series[j].tolist() for j in series.orders}},
    }
    atomic_write(out / "simulate.json", json.dumps(report, indent=2))
    print(f"simulated {cfg.case.name} on {mesh.cells} cells to t={final.time:g} "
          f"(dt={used_dt:g}); M0 {series[0][0]:.6g} -> {series[0][-1]:.6g}")
    return EXIT_OK


def run_convergence(cfg: ExperimentConfig) -> int:
    if cfg.mesh_kind != "uniform":
        raise ConfigError("convergence studies use uniform meshes", field="mesh.kind")
    dt = cfg.dt
    if dt == "auto":
        dt = resolve_study_dt(cfg.case, "auto", cfg.cells[-1], cfg.theta)
    report = convergence_study(cfg.case, cfg.cells, dt, dt_policy=cfg.dt_policy,
                               theta=cfg.theta, check_invariants=cfg.check_invariants,
                               max_workers=cfg.workers)
    resolved = cfg.resolved()
    atomic_write(cfg.out_dir / "convergence.csv", convergence_csv(report))
    atomic_write(cfg.out_dir / "convergence.json", report_to_json(report, resolved))
    sys.stdout.write(convergence_csv(report))
    return EXIT_OK


def run_stability(cfg: ExperimentConfig) -> int:
    mesh = cfg.make_mesh()
    ic = cell_average_projection(cfg.case.initial, mesh)
    result = {"config": cfg.resolved()}
    if isinstance(cfg.case.breakage, AtomicBreakage) and "b_sup" not in cfg.stability_overrides:
        log.warning("atomic breakage has no finite supremum; stability constant unavailable")
        print("C(R,T) = unavailable (atomic breakage distribution)")
        chosen = FALLBACK_DT if cfg.dt == "auto" else cfg.dt
        print(f"chosen dt = {chosen:.6g}")
        result.update({"C": None, "max_dt": None, "dt": chosen})
    else:
        params = _stability_params(cfg, ic, allow_inf=True)
        try:
            C = stability_constant(params)
        except StabilityError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_NUMERIC
        dt_max = max_stable_dt(C, params.theta)
        if cfg.dt == "auto":
            n = math.ceil(cfg.t_end * C / params.theta) if cfg.t_end > 0 else 1
            chosen = cfg.t_end / n if cfg.t_end > 0 else dt_max
        else:
            chosen = cfg.dt
            if chosen > dt_max:
                log.warning("configured dt=%g exceeds the stability bound %g", chosen, dt_max)
        print(f"C(R,T) = {C:.6g}")
        print(f"max dt = {dt_max:.6g}")
        print(f"chosen dt = {chosen:.6g}")
        result.update({"C": C, "max_dt": dt_max, "dt": chosen,
                       "params": {"lambda": params.lam, "R": params.R, "T": params.T,
                                  "b_sup": params.b_sup, "c_in_l1": params.c_in_l1,
                                  "m1_in": params.m1_in, "theta": params.theta}})
    atomic_write(cfg.out_dir / "stability.json", json.dumps(result, indent=2))
    return EXIT_OK


COMMANDS = {"simulate": run_simulate, "convergence": run_convergence,
            "stability": run_stability}


def _dt_arg(text):
    if text == "auto":
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or 'auto', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="collbreak", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML experiment file")
        p.add_argument("--cells", help="cell count, or comma separated list")
        p.add_argument("--t-end", type=float)
        p.add_argument("--dt", type=_dt_arg, help="time step or 'auto'")
        p.add_argument("--theta", type=float)
        p.add_argument("--out", help="output directory")
        p.add_argument("--check-invariants", action=argparse.BooleanOptionalAction,
                       default=None)
        p.add_argument("--workers", type=int, help="parallel runs in convergence studies")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0) and EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    overrides = {"cells": args.cells, "t_end": args.t_end, "dt": args.dt,
                 "theta": args.theta, "out": args.out,
                 "check_invariants": args.check_invariants, "workers": args.workers}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, MeshError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (CollBreakError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
