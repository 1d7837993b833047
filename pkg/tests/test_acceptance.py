"""Acceptance criteria 1-12.

Each test prints one ``PASS``/``FAIL`` line with the measured numbers so that
``pytest -v`` output doubles as an acceptance summary.
"""

import io
import json
import time

import numpy as np
import pytest

from mafoliation.cli import main
from mafoliation.expr import parse
from mafoliation.forms import apply_J, d_jets, ddc, exterior_derivative, lie_bracket_jets, lie_derivative_cartan_jets, pair
from mafoliation.jet import Jet

SCENARIOS = ["sphere-reeb", "heisenberg-reeb", "ellipsoid-reeb", "sphere3-reeb", "sphere-perturbed"]
CONTACT = [s for s in SCENARIOS if s != "sphere-perturbed"]


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    t0 = time.perf_counter()
    code = main(list(argv) + ["--jobs", "1"], out, err)
    return code, out.getvalue(), time.perf_counter() - t0


def rules(rep) -> dict:
    return {r["name"]: r for r in rep["rules"]}


def announce(capsys, k: int, ok: bool, detail: str):
    with capsys.disabled():
        print(f"\n[acceptance {k:2d}] {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="module")
def verify():
    out = {}
    for name in SCENARIOS:
        code, text, dt = run("verify", name)
        out[name] = {"code": code, "text": text, "time": dt, "report": json.loads(text)}
    return out


@pytest.fixture(scope="module")
def vekua_runs():
    return {name: json.loads(run("vekua", name)[1]) for name in SCENARIOS}


def test_01_sphere_oracle(verify, capsys):
    v = verify["sphere-reeb"]
    ma = v["report"]["stages"]["monge_ampere"]
    err = ma["oracle_error_max"]
    ok = ma["points"] >= 1000 and err <= 1e-6 and v["time"] <= 60 and v["code"] == 0
    announce(capsys, 1, ok, f"sphere |u - log|z|^2| max {err:.2e} over {ma['points']} points, {v['time']:.1f} s")
    assert ok


def test_02_heisenberg_oracle(verify, capsys):
    v = verify["heisenberg-reeb"]
    ma = v["report"]["stages"]["monge_ampere"]
    err = ma["oracle_error_max"]
    ok = ma["points"] >= 1000 and err <= 1e-9 and v["time"] <= 10 and v["code"] == 0
    announce(capsys, 2, ok, f"heisenberg |u - rho| max {err:.2e} over {ma['points']} points, {v['time']:.1f} s")
    assert ok


def test_03_monge_ampere(verify, capsys):
    parts, ok = [], True
    for name in ("sphere-reeb", "heisenberg-reeb"):
        ma = verify[name]["report"]["stages"]["monge_ampere"]
        ok &= ma["ma_residual"]["max"] <= 1e-6 and ma["nondegeneracy_abs_min"] >= 1e-3
        parts.append(f"{name}: MA {ma['ma_residual']['max']:.1e}, nondeg {ma['nondegeneracy_abs_min']:.2f}")
    announce(capsys, 3, ok, "; ".join(parts))
    assert ok


def test_04_negative_control(verify, capsys):
    v = verify["sphere-perturbed"]
    r = rules(v["report"])
    cal = r["calibration"]["value"]
    contact = v["report"]["stages"]["monge_ampere"]["contact_residual"]["max"]
    mares = v["report"]["stages"]["monge_ampere"]["ma_residual"]["max"]
    ok = (cal <= 1e-7 and contact >= 1e-3 and mares >= 1e-2 and v["code"] == 1
          and v["report"]["reasons"][0] == "MA residual exceeded")
    announce(capsys, 4, ok, f"calibration {cal:.1e}, contact {contact:.3f}, MA {mares:.3f}, verdict fail")
    assert ok


def test_05_calibration(verify, capsys):
    worst = {}
    for name in SCENARIOS:
        c = verify[name]["report"]["stages"]["calibration"]
        assert c["points"] == 200
        worst[name] = max(c[k]["max"] for k in ("du_xi", "dcu_xi_minus_1", "bracket"))
    ok = max(worst.values()) <= 1e-7
    announce(capsys, 5, ok, "max calibration residual " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_06_lemma_identity(verify, capsys):
    gaps = {name: rules(verify[name]["report"])["lemma"]["value"] for name in SCENARIOS}
    ok = max(gaps.values()) <= 1e-8
    announce(capsys, 6, ok, "contraction vs Lie derivative " + ", ".join(f"{k} {v:.1e}" for k, v in gaps.items()))
    assert ok


# ------------------------------------------------------------------ criterion 7

TERMS = ["x1", "x2*x3", "x4^2", "x1*x2*x4", "exp(x3/2)", "sin(x1+x2)", "cos(x2*x4)", "x3^3", "x1^2*x3"]


def _function(c, p, order):
    return parse(" + ".join(f"({float(a)!r})*{t}" for a, t in zip(c, TERMS)), 2).jet(p, order)


def _field(rng, p, order):
    return [_function(rng.uniform(-1, 1, len(TERMS)), p, order) for _ in range(4)]


def _pin(X, form, Z, const):
    # X + (const - form(X)) / form(Z) Z has form(.) == const identically
    fx = sum(a * b for a, b in zip(form, X))
    fz = sum(a * b for a, b in zip(form, Z))
    k = (fx * -1.0 + const) * fz.reciprocal()
    return [x + k * z for x, z in zip(X, Z)]


def _vals(jets):
    return np.array([j.value for j in jets])


def _lemma_i(rng):
    p = rng.uniform(-1, 1, 4)
    M = ddc(_function(rng.uniform(-2, 2, len(TERMS)), p, 2))
    X, Y = rng.uniform(-1, 1, 4), rng.uniform(-1, 1, 4)
    return abs(pair(M, apply_J(X), apply_J(Y)) - pair(M, X, Y)) / max(1.0, np.abs(M).max())


def _lemma_ii(rng):
    p = rng.uniform(-1, 1, 4)
    order = 3
    theta = _field(rng, p, order)
    theta[0] = theta[0] + 4.0
    Z = [Jet.constant(1.0, 4, order)] + [Jet.constant(0.0, 4, order)] * 3
    c1, c2 = rng.uniform(-2, 2, 2)
    X = _pin(_field(rng, p, order), theta, Z, c1)
    Y = _pin(_field(rng, p, order), theta, Z, c2)
    X2, Y2 = [x.truncate(2) for x in X], [y.truncate(2) for y in Y]
    dtheta = exterior_derivative([t.truncate(2) for t in theta])
    xv, yv, tv = _vals(X), _vals(Y), _vals(theta)
    lhs = xv @ dtheta @ yv
    lie = _vals(lie_derivative_cartan_jets(X2, [t.truncate(2) for t in theta])) @ yv
    rhs = -tv @ _vals(lie_bracket_jets(X2, Y2))
    scale = 1.0 + np.abs(dtheta).max() * np.abs(xv).max() * np.abs(yv).max()
    return max(abs(lhs - rhs), abs(lie - rhs)) / scale


def _lemma_iii(rng):
    p = rng.uniform(-1, 1, 4)
    order = 3
    f = _function(rng.uniform(-1, 1, len(TERMS)), p, order + 1) + parse("4*x1", 2).jet(p, order + 1)
    grad = d_jets(f)
    Z = [Jet.constant(1.0, 4, order)] + [Jet.constant(0.0, 4, order)] * 3
    c1, c2 = rng.uniform(-2, 2, 2)
    X = _pin(_field(rng, p, order), grad, Z, c1)
    Y = _pin(_field(rng, p, order), grad, Z, c2)
    br = _vals(lie_bracket_jets([x.truncate(2) for x in X], [y.truncate(2) for y in Y]))
    gv = _vals(grad)
    return abs(gv @ br) / (1.0 + np.abs(br).max() * np.abs(gv).max())


def test_07_derivative_identities(capsys):
    rng = np.random.default_rng(2024)
    worst = [max(fn(rng) for _ in range(50)) for fn in (_lemma_i, _lemma_ii, _lemma_iii)]
    ok = max(worst) <= 1e-8
    announce(capsys, 7, ok, "50 random cases each: (i) {:.1e}, (ii) {:.1e}, (iii) {:.1e}".format(*worst))
    assert ok


def test_08_flow_laws(verify, capsys):
    group = {s: rules(verify[s]["report"])["flow_group"]["value"] for s in SCENARIOS}
    cr = {s: rules(verify[s]["report"])["flow_cr"]["value"] for s in SCENARIOS}
    surfaces = {verify[s]["report"]["scenario"]["surface"] for s in SCENARIOS}
    ok = max(group.values()) <= 1e-9 and max(cr.values()) <= 1e-7 and surfaces >= {
        "sphere", "heisenberg", "ellipsoid", "sphere3"}
    announce(capsys, 8, ok, f"group gap max {max(group.values()):.1e}, CR residual max {max(cr.values()):.1e} "
             f"over {sorted(surfaces)}")
    assert ok


def test_09_vekua(vekua_runs, capsys):
    pert = vekua_runs["sphere-perturbed"]["stages"]["vekua"]
    ok = pert["grid"] == [41, 41] and pert["system_residual_max"] <= 1e-4
    labels = {s: [leaf["classification"] for leaf in vekua_runs[s]["stages"]["vekua"]["leaves"]] for s in CONTACT}
    ok &= all(lab and all(x == "identically_zero" for x in lab) for lab in labels.values())
    announce(capsys, 9, ok, f"perturbed residual {pert['system_residual_max']:.1e} on 41x41; contact leaves "
             + ", ".join(f"{s} {len(v)}x identically_zero" for s, v in labels.items()))
    assert ok


def test_10_reeb_recovery(verify, capsys):
    dev = {}
    for s in CONTACT:
        rec = verify[s]["report"]["stages"]["recovery"]
        assert rec["points"] == 100
        dev[s] = rec["deviation_max"]
    ok = max(dev.values()) <= 1e-7
    announce(capsys, 10, ok, "xi_u vs seed " + ", ".join(f"{k} {v:.1e}" for k, v in dev.items()))
    assert ok


def test_11_uniqueness(verify, capsys):
    gaps = {s: verify[s]["report"]["stages"]["uniqueness"] for s in SCENARIOS}
    ok = all(g["orders"] == [12, 24] for g in gaps.values()) and max(g["u_gap_max"] for g in gaps.values()) <= 1e-9
    announce(capsys, 11, ok, "orders 12 vs 24 " + ", ".join(f"{k} {g['u_gap_max']:.1e}" for k, g in gaps.items()))
    assert ok


def test_12_determinism(verify, capsys):
    same = {s: run("verify", s)[1] == verify[s]["text"] for s in ("sphere-reeb", "sphere-perturbed")}
    ok = all(same.values())
    announce(capsys, 12, ok, "byte-identical repeat: " + ", ".join(f"{k} {v}" for k, v in same.items()))
    assert ok
