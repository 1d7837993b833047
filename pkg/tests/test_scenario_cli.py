import csv
import io
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mafoliation.cli import main
from mafoliation.errors import ConfigError
from mafoliation.scenario import DEFAULT_TOLERANCES, Report, load_scenario, scenario_from_dict, scenario_names


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


# ------------------------------------------------------------------ scenarios


def test_builtin_scenarios_load():
    names = scenario_names()
    for name in ("sphere-reeb", "sphere-perturbed", "heisenberg-reeb", "ellipsoid-reeb", "sphere3-reeb"):
        assert name in names
        sc = load_scenario(name)
        assert sc.label == name
        assert all(v > 0 for v in sc.tolerances.values())
    assert load_scenario("sphere-reeb").contact and not load_scenario("sphere-perturbed").contact


def test_overrides():
    sc = load_scenario("sphere-reeb", overrides={"order": 14, "mode": "time-series", "tol_scale": 10.0})
    assert sc.flow.order == 14 and sc.flow.mode == "time-series"
    assert sc.tolerances["ma"] == pytest.approx(10 * DEFAULT_TOLERANCES["ma"])
    # the nondegeneracy floor is a lower bound, not a tolerance
    assert sc.tolerances["nondegeneracy_floor"] == DEFAULT_TOLERANCES["nondegeneracy_floor"]


@pytest.mark.parametrize("raw", [
    {"surface": "sphere"},
    {"label": "x", "surface": "torus", "seed": {"kind": "reeb"}},
    {"label": "x", "surface": "sphere", "seed": {"kind": "magic"}},
    {"label": "x", "surface": "sphere", "seed": {"kind": "reeb"}, "tolerances": {"ma": -1}},
    {"label": "x", "surface": "sphere", "seed": {"kind": "reeb"}, "collar": {"s_max": 0}},
    {"label": "x", "surface": "sphere", "seed": {"kind": "expression", "field": "[x1, "}},
])
def test_invalid_scenarios(raw):
    with pytest.raises(ConfigError):
        scenario_from_dict(raw)


def test_config_errors_exit_2(tmp_path):
    code, _, err = run("verify", "no-such-scenario")
    assert code == 2 and err.startswith("error [config]")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, err = run("verify", "--config", str(bad))
    assert code == 2 and "invalid JSON" in err
    assert run("report", "sphere-reeb")[0] == 2  # --out is required
    assert run("verify")[0] == 2
    assert run("catalog", "show", "torus")[0] == 2
    assert run("flow", "sphere", "--seed", "1,0", "--time", "0.1")[0] == 2
    assert run("flow", "sphere", "--seed", "1,0,0,0", "--time", "abc")[0] == 2


# ------------------------------------------------------------------ simple subcommands


def test_catalog():
    code, out, _ = run("catalog", "list")
    assert code == 0
    for name in ("sphere", "heisenberg", "ellipsoid", "sphere3", "levi-flat"):
        assert name in out
    code, out, _ = run("catalog", "show", "heisenberg")
    d = json.loads(out)
    assert code == 0 and d["n"] == 1 and "rho" in d and "xi0" in d
    assert "im(z2)" in d["rho"]


def test_reeb_subcommand():
    code, out, _ = run("reeb", "sphere", "--grid", "5")
    d = json.loads(out)
    assert code == 0 and d["verdict"] == "pass" and len(d["points"]) == 5
    assert max(p["closed_form_deviation"] for p in d["points"]) <= 1e-9
    code, out, _ = run("reeb", "levi-flat", "--grid", "3")
    assert code == 1 and json.loads(out)["verdict"] == "fail"


def test_flow_subcommand():
    code, out, _ = run("flow", "sphere", "--seed", "1,0,0,0", "--time", "0+3.141592653589793j")
    d = json.loads(out)
    # e^{i w / 2} z at w = i pi scales by e^{-pi/2}
    assert code == 0
    assert d["point"][0] == pytest.approx(np.exp(-np.pi / 2), abs=1e-9)
    code, out, _ = run("flow", "heisenberg", "--seed", "0,0,0,0", "--time", "0.5")
    d = json.loads(out)
    # the heisenberg Reeb field is -d/d(Re w): real time is a translation
    assert np.allclose(d["point"], [0, 0, -0.5, 0], atol=1e-12)


# ------------------------------------------------------------------ pipelines


@pytest.fixture(scope="module")
def heis_run():
    return run("verify", "heisenberg-reeb", "--jobs", "1")


def test_verify_heisenberg(heis_run):
    code, out, _ = heis_run
    d = json.loads(out)
    assert code == 0 and d["verdict"] == "pass" and d["schema"] == 1
    assert d["stages"]["monge_ampere"]["oracle_error_max"] <= 1e-9
    assert d["scenario"]["label"] == "heisenberg-reeb"


def test_determinism(heis_run):
    again = run("verify", "heisenberg-reeb", "--jobs", "1")
    assert again[1] == heis_run[1]


def test_jobs_do_not_change_output(heis_run):
    assert run("verify", "heisenberg-reeb", "--jobs", "2")[1] == heis_run[1]


def test_verify_perturbed_fails():
    code, out, _ = run("verify", "sphere-perturbed", "--jobs", "1")
    d = json.loads(out)
    assert code == 1 and d["verdict"] == "fail"
    assert d["reasons"][0] == "MA residual exceeded"
    rules = {r["name"]: r for r in d["rules"]}
    assert rules["calibration"]["pass"]


def test_tol_scale_flips_verdict(tmp_path):
    raw = json.loads(json.dumps(load_scenario("heisenberg-reeb").raw))
    raw["tolerances"] = {"oracle": 1e-30}
    path = tmp_path / "strict.json"
    path.write_text(json.dumps(raw))
    code, out, _ = run("verify", "--config", str(path), "--jobs", "1")
    rules = {r["name"]: r for r in json.loads(out)["rules"]}
    assert rules["oracle"]["value"] > 1e-30  # rounding noise of the exact flow
    assert code == 1 and not rules["oracle"]["pass"]
    code, out, _ = run("verify", "--config", str(path), "--jobs", "1", "--tol-scale", "1e20")
    assert code == 0 and json.loads(out)["scenario"]["tolerances"]["oracle"] == pytest.approx(1e-10)


def test_stage_failure_is_tagged(tmp_path):
    raw = json.loads(json.dumps(load_scenario("heisenberg-reeb").raw))
    raw["collar"] = {"s_max": 0.01}
    path = tmp_path / "thin.json"
    path.write_text(json.dumps(raw))
    code, out, err = run("verify", "--config", str(path), "--jobs", "1")
    d = json.loads(out)
    assert code == 1 and d["verdict"] == "fail"
    assert err.startswith("error [") and "CollarError" in err
    assert any(r.startswith("stage ") for r in d["reasons"])


def test_report_artifacts(tmp_path):
    out_dir = tmp_path / "art"
    code, out, _ = run("report", "heisenberg-reeb", "--out", str(out_dir), "--jobs", "1")
    assert code == 0
    files = {p.name for p in out_dir.iterdir()}
    assert {"report.json", "collar_grid.csv", "leaf_1.csv", "leaf_1.gp", "orbit_1.csv", "vekua_1.csv"} <= files
    assert json.loads((out_dir / "report.json").read_text()) == json.loads(out)
    rows = list(csv.reader(open(out_dir / "collar_grid.csv")))
    assert rows[0][:2] == ["x1", "x2"] and "ma_residual" in rows[0]
    assert len(rows) == 1 + 100 * 10
    assert "leaf_1.csv" in (out_dir / "leaf_1.gp").read_text()


# ------------------------------------------------------------------ report semantics


rules_st = st.lists(
    st.tuples(st.floats(0, 10), st.floats(0.001, 10), st.sampled_from(["le", "ge"])), max_size=6)


@settings(max_examples=50)
@given(rules_st)
def test_verdict_is_a_function_of_rules(rules):
    rep = Report("verify", {"label": "x"})
    for k, (v, thr, op) in enumerate(rules):
        rep.rule(f"r{k}", v, thr, op, f"rule {k} failed")
    expect = all((v <= t) if op == "le" else (v >= t) for v, t, op in rules)
    assert (rep.verdict == "pass") == expect
    back = json.loads(rep.to_json())
    assert back["verdict"] == rep.verdict
    assert len(back["reasons"]) == sum(not r["pass"] for r in back["rules"])


def test_non_finite_values_fail():
    rep = Report("verify", {"label": "x"})
    rep.rule("a", float("nan"), 1.0, "le", "nan")
    rep.rule("b", float("inf"), 1.0, "ge", "inf")
    assert rep.verdict == "fail" and rep.reasons == ["nan", "inf"]
    assert json.loads(rep.to_json())["rules"][1]["value"] == "inf"
