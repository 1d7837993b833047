"""Scenario files and the end-to-end pipelines behind the command line.

A scenario is a JSON document naming a catalog surface, a seed field, flow
parameters, the collar thickness, grid sizes and tolerance overrides.  Each
pipeline stage returns a plain summary dict; ``Report`` collects them together
with a list of threshold rules, and the verdict is computed from the recorded
numbers alone.
"""

from __future__ import annotations

import copy
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import monge_ampere as ma
from . import vekua
from .cr import Hypersurface, ht_frame, levi_nondegenerate, load_catalog, reeb, sample_points, symmetry_residual
from .errors import ConfigError, MafoliationError
from .expr import parse, parse_vector
from .flow import continue_flow, taylor_orbit, write_orbit_csv
from .foliation import FlowConfig, build, calibration_residuals, collar_samples, leaf_chart, uniqueness_check, write_leaf_csv

SCHEMA = 1

DEFAULT_TOLERANCES = {
    "reeb": 1e-9,
    "flow_group": 1e-9,
    "flow_cr": 1e-7,
    "calibration": 1e-7,
    "oracle": 1e-6,
    "ma": ma.MA_TOL,
    "nondegeneracy_floor": 1e-3,
    "contact": ma.CONTACT_TOL,
    "lemma": 1e-8,
    "xi_u": 1e-7,
    "uniqueness": 1e-9,
    "vekua": 1e-4,
    "zero_set": 1e-7,
}

DEFAULT_GRIDS = {
    "base_points": 100,
    "offsets": 10,
    "offset": 0.1,
    "calibration_points": 200,
    "reeb_points": 100,
    "flow_points": 10,
    "leaves": 3,
    "leaf_grid": [41, 41],
    "leaf_half_width": [0.2, 0.2],
    "uniqueness_orders": [12, 24],
}

SEED_KINDS = ("reeb", "expression", "scaled-reeb")
MODES = ("auto", "holomorphic", "time-series")


@dataclass
class Scenario:
    label: str
    surface: Hypersurface
    seed: dict
    flow: FlowConfig
    s_max: float
    grids: dict
    tolerances: dict
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def contact(self) -> bool:
        """Whether the seed is the Reeb field of the surface."""
        return self.seed["kind"] == "reeb"

    def seed_field(self):
        h = self.surface
        kind = self.seed["kind"]
        if kind == "expression":
            return parse_vector(self.seed["field"], h.dim)
        if h.xi0 is None:
            raise ConfigError(f"surface {h.label!r} has no closed-form Reeb extension")
        if kind == "reeb":
            return h.xi0
        return h.xi0.scaled(parse(self.seed["factor"], h.dim))

    def echo(self) -> dict:
        return {
            "label": self.label,
            "surface": self.surface.label,
            "seed": dict(self.seed),
            "flow": {"order": self.flow.order, "trust": self.flow.trust,
                     "substeps": self.flow.substeps, "mode": self.flow.mode},
            "s_max": self.s_max,
            "grids": self.grids,
            "tolerances": self.tolerances,
        }


def scenario_names() -> list:
    d = resources.files("mafoliation") / "data" / "scenarios"
    return sorted(p.name[:-5] for p in d.iterdir() if p.name.endswith(".json"))


def _read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"cannot read scenario file {path}: {exc.strerror}") from exc


def load_scenario(name_or_path=None, config: str | None = None, overrides: dict | None = None) -> Scenario:
    """Load a scenario by built-in name or file path and validate it.

    ``overrides`` may contain ``order``, ``mode`` and ``tol_scale``.
    """
    if config is not None:
        raw = _read_json(config)
    elif name_or_path is None:
        raise ConfigError("no scenario given")
    elif os.path.exists(str(name_or_path)):
        raw = _read_json(name_or_path)
    else:
        name = str(name_or_path)
        if name not in scenario_names():
            raise ConfigError(f"unknown scenario {name!r}; built-ins: {', '.join(scenario_names())}")
        raw = json.loads((resources.files("mafoliation") / "data" / "scenarios" / f"{name}.json").read_text())
    return scenario_from_dict(raw, overrides)


def scenario_from_dict(raw: dict, overrides: dict | None = None) -> Scenario:
    if not isinstance(raw, dict):
        raise ConfigError("scenario must be a JSON object")
    raw = copy.deepcopy(raw)
    overrides = overrides or {}
    for key in ("label", "surface", "seed"):
        if key not in raw:
            raise ConfigError(f"scenario is missing {key!r}")
    catalog = load_catalog()
    if raw["surface"] not in catalog:
        raise ConfigError(f"surface {raw['surface']!r} is not in the catalog")
    h = catalog[raw["surface"]]
    seed = raw["seed"]
    if not isinstance(seed, dict) or seed.get("kind") not in SEED_KINDS:
        raise ConfigError(f"seed kind must be one of {SEED_KINDS}")
    if seed["kind"] == "expression" and "field" not in seed:
        raise ConfigError("expression seed needs a 'field'")
    if seed["kind"] == "scaled-reeb" and "factor" not in seed:
        raise ConfigError("scaled-reeb seed needs a 'factor'")

    fl = dict(raw.get("flow", {}))
    if "order" in overrides and overrides["order"] is not None:
        fl["order"] = overrides["order"]
    if "mode" in overrides and overrides["mode"] is not None:
        fl["mode"] = overrides["mode"]
    flow = FlowConfig(order=int(fl.get("order", 20)), trust=float(fl.get("trust", 0.5)),
                      mode=fl.get("mode", "auto"), substeps=fl.get("substeps"))
    if flow.mode not in MODES:
        raise ConfigError(f"flow mode must be one of {MODES}")
    if flow.order < 2 or not 0 < flow.trust < 1:
        raise ConfigError("flow order must be >= 2 and trust in (0, 1)")

    s_max = float(raw.get("collar", {}).get("s_max", 0.15))
    if s_max <= 0:
        raise ConfigError("collar s_max must be positive")
    grids = dict(DEFAULT_GRIDS)
    grids.update(raw.get("grids", {}))
    tols = dict(DEFAULT_TOLERANCES)
    unknown = set(raw.get("tolerances", {})) - set(tols)
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    tols.update(raw.get("tolerances", {}))
    scale = float(overrides.get("tol_scale") or 1.0)
    if scale <= 0:
        raise ConfigError("tolerance scale must be positive")
    for k, v in tols.items():
        if not (isinstance(v, (int, float)) and v > 0):
            raise ConfigError(f"tolerance {k!r} must be positive")
        if k != "nondegeneracy_floor":
            tols[k] = float(v) * scale
    sc = Scenario(str(raw["label"]), h, seed, flow, s_max, grids, tols, raw)
    try:
        sc.seed_field()
    except MafoliationError as exc:
        raise ConfigError(f"seed field: {exc}") from exc
    return sc


# ------------------------------------------------------------------ report

@dataclass
class Rule:
    name: str
    value: float
    threshold: float
    op: str  # "le" or "ge"
    reason: str

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        return self.value <= self.threshold if self.op == "le" else self.value >= self.threshold

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "threshold": self.threshold,
                "op": self.op, "pass": self.passed}


@dataclass
class Report:
    command: str
    scenario: dict
    stages: dict = field(default_factory=dict)
    rules: list = field(default_factory=list)
    error: dict | None = None

    def rule(self, name, value, threshold, op, reason):
        self.rules.append(Rule(name, float(value), float(threshold), op, reason))

    @property
    def reasons(self) -> list:
        out = [r.reason for r in self.rules if not r.passed]
        if self.error:
            out.append(f"stage {self.error['stage']} failed")
        return out

    @property
    def verdict(self) -> str:
        return "fail" if self.reasons else "pass"

    def to_dict(self) -> dict:
        d = {
            "schema": SCHEMA,
            "command": self.command,
            "scenario": self.scenario,
            "stages": self.stages,
            "rules": [r.to_dict() for r in self.rules],
            "verdict": self.verdict,
            "reasons": self.reasons,
        }
        if self.error:
            d["error"] = self.error
        return d

    def to_json(self) -> str:
        return json.dumps(_clean(self.to_dict()), indent=2, sort_keys=True) + "\n"


def _clean(obj):
    """Make a nested structure JSON-safe (numpy scalars, non-finite floats)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


# ------------------------------------------------------------------ grids

def verify_grid(sc: Scenario) -> np.ndarray:
    """Collar grid ``p + delta * nu(p)``: base points times normal offsets, shape ``(m, N)``."""
    g = sc.grids
    P = sample_points(sc.surface, int(g["base_points"]), seed=1).T
    nu = sc.surface.rho.jet(P, 1).gradient()
    nu = nu / np.linalg.norm(nu, axis=0)
    deltas = np.linspace(-g["offset"], g["offset"], int(g["offsets"]))
    Q = P[:, :, None] + nu[:, :, None] * deltas[None, None, :]
    return Q.reshape(P.shape[0], -1)


def _chunk_local(args):
    model, Q = args
    return ma.ma_report(model, Q).records


def _records(model, Q, jobs: int) -> list:
    """Pointwise MA records, split across a process pool when ``jobs > 1``."""
    if jobs <= 1 or Q.shape[1] < 2 * jobs:
        return ma.ma_report(model, Q).records
    chunks = np.array_split(np.arange(Q.shape[1]), jobs)
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_chunk_local, [(model, Q[:, c]) for c in chunks]))
    return [r for part in parts for r in part]


def _stats(v) -> dict:
    v = np.asarray(v, dtype=float)
    return {"max": float(v.max()), "mean": float(v.mean()), "min": float(v.min())}


def _leaf_seeds(sc: Scenario) -> np.ndarray:
    return sample_points(sc.surface, int(sc.grids["leaves"]), seed=3)


def _leaf_axes(sc: Scenario, model):
    nt, ns = sc.grids["leaf_grid"]
    ht, hs = sc.grids["leaf_half_width"]
    hs = min(hs, model.s_max)
    return np.linspace(-ht, ht, int(nt)), np.linspace(-hs, hs, int(ns))


# ------------------------------------------------------------------ stages

class StageFailure(MafoliationError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"[{stage}] {type(exc).__name__}: {exc}")
        self.stage = stage
        self.original = exc


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except MafoliationError as exc:
        raise StageFailure(name, exc) from exc


def stage_reeb(sc: Scenario, rep: Report) -> dict:
    h = sc.surface
    P = sample_points(h, int(sc.grids["reeb_points"]), seed=2)
    frames = [ht_frame(h, p) for p in P]
    levi = [levi_nondegenerate(f) for f in frames]
    out = {
        "points": len(P),
        "gradient_norm_min": float(min(np.linalg.norm(f.drho) for f in frames)),
        "levi_nondegenerate": bool(all(l.nondegenerate for l in levi)),
        "levi_det_abs_min": float(min(abs(l.det) for l in levi)),
        "levi_condition_max": float(max(l.condition for l in levi)),
    }
    xi = sc.seed_field()
    out["seed_symmetry_residual_max"] = float(max(symmetry_residual(h, xi, p) for p in P))
    if h.xi0 is not None and out["levi_nondegenerate"]:
        R = np.array([reeb(h, p, f) for p, f in zip(P, frames)])
        dev = np.abs(R - h.xi0(P.T).T).max()
        out["closed_form_deviation_max"] = float(dev)
        rep.rule("reeb", dev, sc.tolerances["reeb"], "le", "Reeb field mismatch")
    rep.stages["reeb"] = out
    return out


def stage_flow(sc: Scenario, rep: Report, xi) -> dict:
    cfg = sc.flow
    P = sample_points(sc.surface, int(sc.grids["flow_points"]), seed=4)
    t, s = 0.3, 0.6 * sc.s_max
    gaps, radii = [], []
    for p in P:
        a = continue_flow(xi, p, t, None, cfg.mode, cfg.order, cfg.trust)
        b = continue_flow(xi, a, 1j * s, None, cfg.mode, cfg.order, cfg.trust)
        c = continue_flow(xi, p, complex(t, s), None, cfg.mode, cfg.order, cfg.trust)
        gaps.append(np.abs(b - c).max())
        radii.append(taylor_orbit(xi, p, cfg.order).radius)
    out = {"points": len(P), "group_gap_max": float(max(gaps)),
           "radius_min": float(min(radii)), "time": [t, s]}
    rep.stages["flow"] = out
    rep.rule("flow_group", out["group_gap_max"], sc.tolerances["flow_group"], "le", "flow group property violated")
    return out


def stage_build(sc: Scenario, rep: Report, xi, order=None):
    cfg = sc.flow if order is None else FlowConfig(order, sc.flow.trust, sc.flow.mode, sc.flow.substeps)
    model = build(sc.surface, xi, sc.s_max, cfg, label=sc.label)
    if order is None:
        rep.stages["build"] = dict(model.diagnostics)
    return model


def stage_cr(sc: Scenario, rep: Report, model) -> dict:
    seeds = _leaf_seeds(sc)
    res = [leaf_chart(model, p).cr_residual(0.1, 0.5 * model.s_max) for p in seeds]
    out = {"leaves": len(seeds), "cr_residual_max": float(max(res))}
    rep.stages["flow"]["cr_residual_max"] = out["cr_residual_max"]
    rep.rule("flow_cr", out["cr_residual_max"], sc.tolerances["flow_cr"], "le", "complex-time Cauchy-Riemann residual exceeded")
    return out


def stage_calibration(sc: Scenario, rep: Report, model) -> dict:
    Q, _, _ = collar_samples(model, int(sc.grids["calibration_points"]), seed=5)
    res = calibration_residuals(model, Q)
    out = {k: _stats(v) for k, v in res.items()}
    out["points"] = Q.shape[1]
    rep.stages["calibration"] = out
    worst = max(float(v.max()) for v in res.values())
    rep.rule("calibration", worst, sc.tolerances["calibration"], "le", "calibration residual exceeded")
    return out


def stage_monge_ampere(sc: Scenario, rep: Report, model, jobs: int = 1):
    Q = verify_grid(sc)
    records = _records(model, Q, jobs)
    u = np.array([r["u"] for r in records])
    out = {
        "points": len(records),
        "u_abs_max": float(np.abs(u).max()),
        "ma_residual": _stats([r["ma_residual"] for r in records]),
        "nondegeneracy_abs_min": float(min(abs(r["nondegeneracy"]) for r in records)),
        "contact_residual": _stats([r["contact_residual"] for r in records]),
        "lemma_gap": _stats([r["lemma_gap"] for r in records]),
    }
    oracle = sc.surface.oracle
    if sc.contact and oracle is not None:
        err = np.abs(u - oracle(Q))
        out["oracle_error_max"] = float(err.max())
        rep.rule("oracle", err.max(), sc.tolerances["oracle"], "le", "oracle mismatch")
    rep.stages["monge_ampere"] = out
    t = sc.tolerances
    rep.rule("ma", out["ma_residual"]["max"], t["ma"], "le", "MA residual exceeded")
    rep.rule("nondegeneracy", out["nondegeneracy_abs_min"], t["nondegeneracy_floor"], "ge", "nondegeneracy below floor")
    rep.rule("contact", out["contact_residual"]["max"], t["contact"], "le", "contact residual exceeded")
    # the Lie-derivative identity holds for every calibrated foliation
    rep.rule("lemma", out["lemma_gap"]["max"], t["lemma"], "le", "Lie-derivative identity gap exceeded")
    return Q, records


def stage_recovery(sc: Scenario, rep: Report, model, xi) -> dict:
    """Reeb field of ``u`` against the seed on ``V`` (contact seeds only)."""
    P = sample_points(sc.surface, int(sc.grids["reeb_points"]), seed=6).T
    data = model.local(P, order=2)
    dev = []
    for j in range(P.shape[1]):
        v = ma.xi_u(data.u.taken(j)).vector
        dev.append(np.abs(v - xi(P[:, j])).max())
    out = {"points": P.shape[1], "deviation_max": float(max(dev))}
    rep.stages["recovery"] = out
    rep.rule("xi_u", out["deviation_max"], sc.tolerances["xi_u"], "le", "Reeb recovery mismatch")
    return out


def stage_uniqueness(sc: Scenario, rep: Report, xi, Q) -> dict:
    o1, o2 = sc.grids["uniqueness_orders"]
    m1 = stage_build(sc, rep, xi, int(o1))
    m2 = stage_build(sc, rep, xi, int(o2))
    sub = Q[:, :: max(1, Q.shape[1] // 200)]
    gap = uniqueness_check(m1, m2, sub)
    out = {"orders": [int(o1), int(o2)], "points": sub.shape[1], "u_gap_max": gap}
    rep.stages["uniqueness"] = out
    rep.rule("uniqueness", gap, sc.tolerances["uniqueness"], "le", "order dependence exceeded")
    return out


def stage_locus(sc: Scenario, rep: Report, model) -> dict:
    ts, ss = _leaf_axes(sc, model)
    leaves = []
    for p in _leaf_seeds(sc):
        chart = leaf_chart(model, p)
        leaves.append(ma.saturation_scan(model, chart, ts, ss, sc.tolerances["contact"]).summary())
    out = {"leaves": leaves, "grid": [len(ts), len(ss)]}
    rep.stages["locus"] = out
    return out


def stage_vekua(sc: Scenario, rep: Report, model, keep: list | None = None) -> dict:
    ts, ss = _leaf_axes(sc, model)
    leaves = []
    for p in _leaf_seeds(sc):
        system = vekua.leaf_system(model, leaf_chart(model, p), ts, ss)
        label, count = vekua.classify_zero_set(system.w, sc.tolerances["zero_set"])
        leaves.append({
            "system_residual": vekua.system_residual(system),
            "w_abs_max": float(np.abs(system.w).max()),
            "classification": label,
            "zero_count": int(count),
        })
        if keep is not None:
            keep.append(system)
    worst = max(l["system_residual"] for l in leaves)
    out = {"leaves": leaves, "grid": [len(ts), len(ss)], "system_residual_max": worst}
    rep.stages["vekua"] = out
    rep.rule("vekua", worst, sc.tolerances["vekua"], "le", "Vekua system residual exceeded")
    if sc.contact:
        zero = sum(l["classification"] == "identically_zero" for l in leaves)
        rep.rule("zero_set", zero, len(leaves), "ge", "contact leaf not identically zero")
    return out


# ------------------------------------------------------------------ pipelines

def run_pipeline(command: str, sc: Scenario, jobs: int = 1, artifacts: dict | None = None) -> Report:
    """Run ``build``, ``verify``, ``locus``, ``vekua`` or ``report`` on a scenario.

    Stage errors are caught and recorded with their stage tag; the report
    then fails.  ``artifacts`` (if given) receives the model and grids.
    """
    rep = Report(command, sc.echo())
    current = "seed"
    try:
        xi = sc.seed_field()
        if command in ("verify", "report"):
            current = "reeb"
            stage_reeb(sc, rep)
            current = "flow"
            stage_flow(sc, rep, xi)
        current = "build"
        model = stage_build(sc, rep, xi)
        if artifacts is not None:
            artifacts["model"] = model
        if command in ("build", "verify", "report"):
            current = "calibration"
            stage_calibration(sc, rep, model)
        if command in ("verify", "report"):
            current = "flow"
            stage_cr(sc, rep, model)
            current = "monge_ampere"
            Q, records = stage_monge_ampere(sc, rep, model, jobs)
            if artifacts is not None:
                artifacts["grid"], artifacts["records"] = Q, records
            if sc.contact:
                current = "recovery"
                stage_recovery(sc, rep, model, xi)
            current = "uniqueness"
            stage_uniqueness(sc, rep, xi, Q)
        if command in ("locus", "report"):
            current = "locus"
            if command == "locus":
                Q, records = stage_monge_ampere(sc, rep, model, jobs)
            stage_locus(sc, rep, model)
        if command in ("vekua", "report"):
            current = "vekua"
            keep = artifacts.setdefault("systems", []) if artifacts is not None else None
            stage_vekua(sc, rep, model, keep)
    except MafoliationError as exc:
        rep.error = {"stage": current, "type": type(exc).__name__, "message": str(exc)}
    return rep


def write_artifacts(rep: Report, sc: Scenario, artifacts: dict, out: Path) -> list:
    """JSON report, CSV grids and gnuplot scripts for leaf traces."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / "report.json"
    path.write_text(rep.to_json())
    written.append(path)
    model = artifacts.get("model")
    if "records" in artifacts:
        path = out / "collar_grid.csv"
        _write_records_csv(artifacts["grid"], artifacts["records"], sc, path)
        written.append(path)
    if model is None:
        return written
    ts, ss = _leaf_axes(sc, model)
    for k, p in enumerate(_leaf_seeds(sc)):
        chart = leaf_chart(model, p)
        pts = chart.grid(ts, ss)
        flat = pts.reshape(pts.shape[0], -1)
        u = model.u(flat, check_collar=False).reshape(len(ts), len(ss))
        res = ma.contact_residual(model, flat).residual.reshape(len(ts), len(ss))
        path = out / f"leaf_{k}.csv"
        write_leaf_csv(chart, ts, ss, path, u, res)
        gp = out / f"leaf_{k}.gp"
        gp.write_text(_gnuplot(path.name, pts.shape[0]))
        written += [path, gp]
        path = out / f"orbit_{k}.csv"
        write_orbit_csv(taylor_orbit(model.xi0, chart.seed, model.config.order), path)
        written.append(path)
    for k, system in enumerate(artifacts.get("systems", [])):
        path = out / f"vekua_{k}.csv"
        vekua.write_system_csv(system, path)
        written.append(path)
    return written


def _write_records_csv(Q, records, sc: Scenario, path):
    import csv

    oracle = sc.surface.oracle
    ov = oracle(Q) if oracle is not None else None
    m = Q.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i + 1}" for i in range(m)]
                   + ["u", "oracle", "ma_residual", "nondegeneracy", "contact_residual", "lemma_gap"])
        for j, r in enumerate(records):
            o = "" if ov is None else repr(float(ov[j]))
            w.writerow([repr(float(x)) for x in Q[:, j]]
                       + [repr(r["u"]), o, repr(r["ma_residual"]), repr(r["nondegeneracy"]),
                          repr(r["contact_residual"]), repr(r["lemma_gap"])])


def _gnuplot(csv_name: str, m: int) -> str:
    """Leaf trace in the (x1, x2, u) view plus a residual heat map."""
    ucol = m + 3
    rcol = m + 4
    return (
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        f"set title '{csv_name}'\n"
        "set xlabel 't'\nset ylabel 's'\n"
        f"splot '{csv_name}' using 1:2:{ucol} with points pt 7 ps 0.3 title 'u'\n"
        "pause -1\n"
        "set view map\n"
        f"splot '{csv_name}' using 1:2:(log10(${rcol} + 1e-300)) with points pt 5 palette title 'log10 contact residual'\n"
        "pause -1\n"
    )
