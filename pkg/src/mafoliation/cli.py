"""Command line entry point: ``mafoliation <subcommand> ...``.

Scenario commands print a schema-1 JSON report on stdout and exit with 0 when
every rule passes, 1 when some rule or stage fails and 2 on configuration
errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .cr import catalog_entry, ht_frame, levi_nondegenerate, load_catalog, reeb, sample_points
from .errors import ConfigError, MafoliationError
from .flow import continue_flow, taylor_orbit
from .scenario import SCHEMA, Report, _clean, load_scenario, run_pipeline, scenario_names, write_artifacts

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _dump(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n"


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="scenario JSON file (instead of a built-in name)")
    p.add_argument("--out", help="directory for the report and CSV/gnuplot artifacts")
    p.add_argument("--jobs", type=int, default=None, help="worker processes for grid stages (default: CPU count)")
    p.add_argument("--tol-scale", type=float, default=None, help="multiply every tolerance by this factor")
    p.add_argument("--taylor-order", type=int, default=None, help="override the Taylor order of the flow")
    p.add_argument("--mode", choices=("holomorphic", "time-series"), default=None, help="complex-time continuation mode")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mafoliation", description="Monge-Ampere foliations of CR hypersurfaces.")
    sub = ap.add_subparsers(dest="command", required=True)

    cat = sub.add_parser("catalog", help="list or show built-in surfaces")
    cat.add_argument("action", choices=("list", "show"))
    cat.add_argument("name", nargs="?")

    rb = sub.add_parser("reeb", help="Levi form and Reeb field at sample points")
    rb.add_argument("surface")
    rb.add_argument("--grid", type=int, default=20, help="number of sample points")

    fl = sub.add_parser("flow", help="complex-time flow of the surface's Reeb field")
    fl.add_argument("surface")
    fl.add_argument("--seed", required=True, help="comma-separated real coordinates of the start point")
    fl.add_argument("--time", required=True, help="complex time, e.g. 0.3+0.2j")
    fl.add_argument("--taylor-order", type=int, default=20)
    fl.add_argument("--mode", choices=("auto", "holomorphic", "time-series"), default="auto")

    for name, text in (("build", "build the calibrated foliation"),
                       ("verify", "full Monge-Ampere verification pipeline"),
                       ("locus", "contact residual and saturation scans"),
                       ("vekua", "generalized-analytic system on leaves"),
                       ("report", "run everything and write artifacts")):
        p = sub.add_parser(name, help=text)
        p.add_argument("scenario", nargs="?", help=f"built-in scenario ({', '.join(scenario_names())}) or path")
        _common(p)
    return ap


def _catalog(args, out) -> int:
    cat = load_catalog()
    if args.action == "list":
        for label in sorted(cat):
            out.write(f"{label:12s} n={cat[label].n}  {cat[label].description}\n")
        return EXIT_PASS
    if not args.name:
        raise ConfigError("catalog show needs a surface name")
    h = catalog_entry(args.name)
    out.write(_dump(h.to_dict()))
    return EXIT_PASS


def _reeb(args, out) -> int:
    h = catalog_entry(args.surface)
    if args.grid < 1:
        raise ConfigError("--grid must be positive")
    P = sample_points(h, args.grid, seed=0)
    rows, ok = [], True
    for p in P:
        f = ht_frame(h, p)
        lv = levi_nondegenerate(f)
        row = {"point": p.tolist(), "levi_det": lv.det, "levi_condition": lv.condition,
               "nondegenerate": lv.nondegenerate}
        if lv.nondegenerate:
            xi = reeb(h, p, f)
            row["reeb"] = xi.tolist()
            if h.xi0 is not None:
                row["closed_form_deviation"] = float(np.abs(xi - h.xi0(p)).max())
        else:
            ok = False
        rows.append(row)
    out.write(_dump({"schema": SCHEMA, "command": "reeb", "surface": h.label, "points": rows,
                     "verdict": "pass" if ok else "fail"}))
    return EXIT_PASS if ok else EXIT_FAIL


def _flow(args, out) -> int:
    h = catalog_entry(args.surface)
    if h.xi0 is None:
        raise ConfigError(f"surface {h.label!r} has no Reeb field to flow")
    try:
        p = np.array([float(x) for x in args.seed.split(",")])
        w = complex(args.time.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise ConfigError(f"cannot parse --seed/--time: {exc}") from exc
    if p.shape != (h.nreal,):
        raise ConfigError(f"--seed needs {h.nreal} coordinates")
    orbit = taylor_orbit(h.xi0, p, args.taylor_order)
    q = continue_flow(h.xi0, p, w, None, args.mode, args.taylor_order)
    out.write(_dump({"schema": SCHEMA, "command": "flow", "surface": h.label, "seed": p.tolist(),
                     "time": [w.real, w.imag], "point": q.tolist(), "radius": orbit.radius}))
    return EXIT_PASS


def _scenario(args, out, err) -> int:
    if args.scenario is None and args.config is None:
        raise ConfigError("give a scenario name/path or --config")
    if args.command == "report" and not args.out:
        raise ConfigError("report needs --out")
    sc = load_scenario(args.scenario, args.config, {
        "order": args.taylor_order, "mode": args.mode, "tol_scale": args.tol_scale,
    })
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    artifacts = {}
    rep: Report = run_pipeline(args.command, sc, max(1, jobs), artifacts)
    if rep.error:
        err.write(f"error [{rep.error['stage']}]: {rep.error['type']}: {rep.error['message']}\n")
    if args.out:
        if args.command == "report":
            write_artifacts(rep, sc, artifacts, args.out)
        else:
            os.makedirs(args.out, exist_ok=True)
            with open(os.path.join(args.out, "report.json"), "w") as fh:
                fh.write(rep.to_json())
    out.write(rep.to_json())
    return EXIT_PASS if rep.verdict == "pass" else EXIT_FAIL


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    try:
        if args.command == "catalog":
            return _catalog(args, out)
        if args.command == "reeb":
            return _reeb(args, out)
        if args.command == "flow":
            return _flow(args, out)
        return _scenario(args, out, err)
    except ConfigError as exc:
        err.write(f"error [config]: {exc}\n")
        return EXIT_CONFIG
    except MafoliationError as exc:
        err.write(f"error [{args.command}]: {type(exc).__name__}: {exc}\n")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
