"""Command line entry point: ``perfhom <cell|micro|macro|correct|check> -c cfg``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from pathlib import Path

import numpy as np

from . import checks
from .cell import solve_all
from .config import MODES, RunConfig, echo, parse_config
from .corrector import convergence_study
from .errors import NumericalFailure, ParseError, PerfhomError, ValidationError
from .geometry import PerforatedDomain, build_perforated_mesh, build_unit_square_mesh
from .macro import run_macro
from .micro import run_micro
from .svg import loglog_chart

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2

USAGE = ("perfhom <cell|micro|macro|correct|check> -c <config> [-o outdir] [--svg <file>] "
         "[--threads k] [--deterministic]")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="perfhom", usage=USAGE, add_help=True,
                description="Homogenization toolkit for thermo-diffusion in perforated domains.")
    p.add_argument("mode", help="one of " + ", ".join(MODES))
    p.add_argument("-c", "--config", help="TOML run configuration (defaults if omitted)")
    p.add_argument("-o", "--outdir", help="output directory (overrides run.output)")
    p.add_argument("--svg", help="write a log-log rate chart to this file (correct mode)")
    p.add_argument("--threads", type=int, help="worker processes for independent runs")
    p.add_argument("--deterministic", action="store_true",
                   help="omit timings so repeated runs give byte-identical files")
    return p


# -- file helpers ---------------------------------------------------------------

def write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")


def _plain(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if hasattr(obj, "__dict__"):
        return vars(obj)
    return str(obj)


def write_csv(path: Path, header, columns) -> None:
    data = np.column_stack([np.asarray(c, dtype=float) for c in columns]) if columns else np.zeros((0, 0))
    np.savetxt(path, data, fmt="%.17g", delimiter=",", header=",".join(header), comments="")


def _snapshot_files(outdir: Path, prefix: str, res, mesh, surface: bool):
    written = []
    N = res.final.N
    for k, st in enumerate(res.snapshots):
        x = mesh.coords
        name = outdir / f"{prefix}_{k:03d}.csv"
        write_csv(name, ["x", "y", "theta"] + [f"u{i + 1}" for i in range(N)],
                  [x[:, 0], x[:, 1], st.theta, *st.u])
        written.append(name.name)
        if surface:
            xs = mesh.coords[mesh.surface_nodes]
            sname = outdir / f"{prefix}_surface_{k:03d}.csv"
        else:
            xs = x
            sname = outdir / f"{prefix}_deposit_{k:03d}.csv"
        write_csv(sname, ["x", "y"] + [f"v{i + 1}" for i in range(N)], [xs[:, 0], xs[:, 1], *st.v])
        written.append(sname.name)
    times = outdir / f"{prefix}_times.csv"
    write_csv(times, ["index", "t"], [np.arange(len(res.snapshots)), [s.t for s in res.snapshots]])
    written.append(times.name)
    return written


# -- subcommands ------------------------------------------------------------------

def _cell_n(cfg: RunConfig) -> int:
    g = cfg.section("geometry")
    return g["cell_n"] or g["n_per_cell"]


def cmd_cell(cfg: RunConfig, outdir: Path, args) -> dict:
    cells = solve_all(cfg.params, cfg.cell, _cell_n(cfg), cfg.section("physics")["index_convention"],
                      cfg.section("time")["tol"])
    write_json(outdir / "effective.json", cells.effective.to_dict())
    return {"outputs": ["effective.json"], "K": cells.effective.K.tolist()}


def cmd_micro(cfg: RunConfig, outdir: Path, args) -> dict:
    g, t = cfg.section("geometry"), cfg.section("time")
    mesh = build_perforated_mesh(PerforatedDomain(g["epsilon"], cfg.cell), g["n_per_cell"])
    res = run_micro(mesh, cfg.params, cfg.initial, t["t_end"], t["dt"], t["snapshots"], t["tol"])
    files = _snapshot_files(outdir, "micro", res, mesh, surface=True)
    diag = res.diagnostics.to_dict()
    diag.update(epsilon=g["epsilon"], h=mesh.h, dt=res.grid.dt, n_steps=res.grid.n_steps)
    write_json(outdir / "micro_diagnostics.json", diag)
    return {"outputs": files + ["micro_diagnostics.json"], "positive": res.positive,
            "min_value": res.diagnostics.min_value}


def cmd_macro(cfg: RunConfig, outdir: Path, args) -> dict:
    g, t, ph = cfg.section("geometry"), cfg.section("time"), cfg.section("physics")
    cells = solve_all(cfg.params, cfg.cell, _cell_n(cfg), ph["index_convention"], t["tol"])
    nx = round(g["n_per_cell"] / g["epsilon"])
    mesh = build_unit_square_mesh(nx, g["epsilon"])
    res = run_macro(mesh, cells.effective, cfg.params, cfg.initial, t["t_end"], t["dt"], t["snapshots"],
                    ph["v_rates"], t["tol"])
    files = _snapshot_files(outdir, "macro", res, mesh, surface=False)
    diag = res.diagnostics.to_dict()
    diag.update(h=mesh.h, dt=res.grid.dt, n_steps=res.grid.n_steps)
    write_json(outdir / "macro_diagnostics.json", diag)
    write_json(outdir / "effective.json", cells.effective.to_dict())
    return {"outputs": files + ["macro_diagnostics.json", "effective.json"], "positive": res.positive,
            "min_value": res.diagnostics.min_value}


def cmd_correct(cfg: RunConfig, outdir: Path, args) -> dict:
    g, ini, run = cfg.section("geometry"), cfg.section("initial"), cfg.section("run")
    threads = args.threads or int(os.environ.get("PERFHOM_THREADS", run["threads"]))
    report = convergence_study(cfg.study_config(), g["eps_list"], ini["well_prepared"], threads=threads)
    doc = report.to_dict()
    if args.deterministic or run["deterministic"]:
        for r in doc["records"]:
            r.pop("seconds", None)
    write_json(outdir / "report.json", doc)
    recs = report.records
    write_csv(outdir / "rates.csv", ["epsilon", "w1_sq", "w2_int", "surf_sq", "w0"],
              [[r.epsilon for r in recs], [r.w1_sq for r in recs], [r.w2_int for r in recs],
               [r.surf_sq for r in recs], [r.w0 for r in recs]])
    outputs = ["report.json", "rates.csv"]
    svg_path = args.svg or ("rates.svg" if run["svg"] else None)
    if svg_path:
        series = {q: [(r.epsilon, getattr(r, q)) for r in recs] for q in ("w1_sq", "w2_int", "surf_sq")}
        if any(r.w0 > 0 for r in recs):
            series["w0"] = [(r.epsilon, r.w0) for r in recs]
        target = Path(svg_path)
        if not target.is_absolute() and target.parent == Path("."):
            target = outdir / target
        target.write_text(loglog_chart(series, title="corrector norms vs epsilon"))
        outputs.append(str(target))
    return {"outputs": outputs, "slopes": report.slopes}


def cmd_check(cfg: RunConfig, outdir: Path, args) -> dict:
    results = checks.run_all()
    write_json(outdir / "check.json", results)
    return {"outputs": ["check.json"], "all_passed": all(r["passed"] for r in results),
            "failed": [r["name"] for r in results if not r["passed"]]}


COMMANDS = {"cell": cmd_cell, "micro": cmd_micro, "macro": cmd_macro, "correct": cmd_correct,
            "check": cmd_check}


def _usage_status(argv, message) -> None:
    """Best-effort status.json for command lines that did not parse."""
    outdir = None
    for flag in ("-o", "--outdir"):
        if flag in argv and argv.index(flag) + 1 < len(argv):
            outdir = Path(argv[argv.index(flag) + 1])
    if outdir is None:
        return
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        write_json(outdir / "status.json", {"status": "usage_error", "exit_code": EXIT_VALIDATION,
                                            "message": message, "usage": USAGE})
    except OSError:
        pass


# -- main -----------------------------------------------------------------------------

def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _parser().parse_args(argv)
        if args.mode not in MODES:
            raise UsageError(f"unknown subcommand {args.mode!r}")
    except UsageError as exc:
        print(f"perfhom: {exc}\nusage: {USAGE}", file=sys.stderr)
        _usage_status(argv, str(exc))
        return EXIT_VALIDATION

    outdir = Path(args.outdir or "perfhom-out")
    status = {"mode": args.mode, "config": args.config}
    cfg = None
    try:
        if args.config:
            cfg = parse_config(args.config)
        else:
            from .config import build_config
            cfg = build_config({})
        cfg.raw["run"]["mode"] = args.mode
        if args.outdir is None:
            outdir = Path(cfg.section("run")["output"])
        if args.threads is not None and args.threads < 1:
            raise ValidationError("threads", "must be a positive integer")
        if args.deterministic:
            cfg.raw["run"]["deterministic"] = True
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / "effective_config.toml").write_text(echo(cfg))
        status.update(COMMANDS[args.mode](cfg, outdir, args))
        status.update(status="ok", exit_code=EXIT_OK)
    except (ParseError, ValidationError) as exc:
        status.update(status="validation_error", exit_code=EXIT_VALIDATION, error=type(exc).__name__,
                      message=str(exc), line=getattr(exc, "line", None), field=getattr(exc, "field", None))
    except NumericalFailure as exc:
        status.update(status="numerical_failure", exit_code=EXIT_NUMERICAL, error=type(exc).__name__,
                      message=str(exc))
    except PerfhomError as exc:
        status.update(status="validation_error", exit_code=EXIT_VALIDATION, error=type(exc).__name__,
                      message=str(exc))
    except Exception as exc:  # unexpected: still leave a status file behind
        status.update(status="internal_error", exit_code=EXIT_NUMERICAL, error=type(exc).__name__,
                      message=str(exc), traceback=traceback.format_exc())
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        if cfg is None:
            (outdir / "effective_config.toml").write_text("# configuration could not be loaded\n")
        write_json(outdir / "status.json", status)
    except OSError as exc:
        print(f"perfhom: cannot write status.json: {exc}", file=sys.stderr)
    if status["exit_code"] != EXIT_OK:
        print(f"perfhom: {status.get('message', status['status'])}", file=sys.stderr)
    return status["exit_code"]


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
