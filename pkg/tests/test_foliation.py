import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mafoliation.cr import catalog_entry, sample_points
from mafoliation.errors import CollarError, TangencyError, TransversalityError
from mafoliation.expr import parse, parse_vector
from mafoliation.foliation import (
    FlowConfig, build, calibration_residuals, collar_samples, fd_check, leaf_chart, u_eval,
    uniqueness_check, write_leaf_csv,
)
from mafoliation.forms import complexify, realify

SPHERE = catalog_entry("sphere")
HEIS = catalog_entry("heisenberg")


@pytest.fixture(scope="module")
def sphere():
    return build(SPHERE, s_max=0.25)


@pytest.fixture(scope="module")
def heis():
    return build(HEIS)


@pytest.fixture(scope="module")
def perturbed():
    return build(SPHERE, SPHERE.xi0.scaled(parse("1 + 0.3*re(z1)", 2)), s_max=0.25)


def test_sphere_matches_log(sphere):
    P = sample_points(SPHERE, 40, seed=9).T
    for r in (0.9, 0.95, 1.0, 1.05, 1.1):
        Q = r * P
        assert np.abs(sphere.u(Q) - np.log(r * r)).max() <= 1e-6


def test_heisenberg_exact(heis):
    Q, _, _ = collar_samples(heis, 100, seed=1)
    assert np.abs(heis.u(Q) - HEIS.oracle(Q)).max() <= 1e-9


def test_transversality_and_tangency_errors():
    in_ht = parse_vector("[-conj(z2), conj(z1)]", 2)
    with pytest.raises(TransversalityError):
        build(SPHERE, in_ht)
    with pytest.raises(TangencyError):
        build(SPHERE, parse_vector("[1, 0]", 2))


def test_u_eval_examples(sphere, heis):
    u, jet = u_eval(sphere, np.array([np.exp(-0.05), 0, 0, 0]))
    assert u == pytest.approx(-0.1, abs=1e-12)
    assert jet.order == 2
    q = np.array([0.3, 0.0, 0.2, 0.09 + 0.05])
    u, _ = u_eval(heis, q)
    assert u == pytest.approx(0.05, abs=1e-12)


def test_on_V_gradient_is_positive_multiple_of_drho(sphere):
    for p in sample_points(SPHERE, 10, seed=2):
        u, jet = u_eval(sphere, p)
        assert abs(u) <= 1e-10
        g = jet.gradient()
        dr = SPHERE.rho.jet(p, 1).gradient()
        kappa = g @ dr / (dr @ dr)
        assert kappa > 0
        assert np.allclose(g, kappa * dr, atol=1e-10)


def test_collar_exit(sphere):
    with pytest.raises(CollarError):
        sphere.u(np.array([0.7, 0, 0, 0]))


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.floats(-1, 1))
def test_u_of_vertical_flow_is_minus_s(seed, frac):
    m = _sphere_model()
    p = sample_points(SPHERE, 1, seed=seed).T
    s = frac * m.s_max
    q = m.flow_point(p, np.array([s]))
    assert m.u(q)[0] == pytest.approx(-s, abs=1e-8)


_CACHE = {}


def _sphere_model():
    if "m" not in _CACHE:
        _CACHE["m"] = build(SPHERE, s_max=0.25)
    return _CACHE["m"]


def test_u_monotone_along_vertical_lines(perturbed):
    P = sample_points(SPHERE, 5, seed=4).T
    ss = np.linspace(-0.2, 0.2, 9)
    for j in range(P.shape[1]):
        Q = perturbed.flow_point(np.repeat(P[:, j : j + 1], len(ss), axis=1), ss)
        assert np.all(np.diff(perturbed.u(Q)) < 0)


def test_calibration_residuals(sphere, heis, perturbed):
    for model, tol in ((sphere, 1e-8), (heis, 1e-10), (perturbed, 1e-8)):
        Q, _, _ = collar_samples(model, 200, seed=3)
        res = calibration_residuals(model, Q)
        for v in res.values():
            assert v.max() <= tol
    # on V: d^c u (xi0) = 1 is theta(xi0) = 1
    P = sample_points(SPHERE, 20, seed=5).T
    assert calibration_residuals(sphere, P)["dcu_xi_minus_1"].max() <= 1e-8


def test_built_field_restricts_to_seed_on_V(perturbed):
    P = sample_points(SPHERE, 20, seed=6).T
    assert np.allclose(perturbed.xi(P), perturbed.xi0(P), atol=1e-12)


def test_fd_consistency(perturbed):
    Q, _, _ = collar_samples(perturbed, 100, seed=8, s_fraction=0.8)
    worst = {"grad": 0.0, "hess": 0.0}
    for q in Q.T:
        r = fd_check(perturbed, q)
        for k in worst:
            worst[k] = max(worst[k], r[k])
    assert worst["grad"] <= 1e-5 and worst["hess"] <= 1e-5


def test_uniqueness(sphere):
    assert uniqueness_check(sphere, sphere, np.zeros((4, 1))) == 0.0
    lo = build(SPHERE, s_max=0.25, config=FlowConfig(order=12))
    hi = build(SPHERE, s_max=0.25, config=FlowConfig(order=24))
    Q, _, _ = collar_samples(sphere, 200, seed=10)
    assert uniqueness_check(lo, hi, Q) <= 1e-9
    # against the closed form
    assert np.abs(sphere.u(Q) - SPHERE.oracle(Q)).max() <= 1e-6
    with pytest.raises(CollarError):
        uniqueness_check(lo, hi, 0.5 * Q)
    # the check is sensitive: a short series leaves a visible truncation gap
    crude = build(SPHERE, s_max=0.25, config=FlowConfig(order=4))
    assert uniqueness_check(crude, hi, Q) > 1e-8


def test_collar_shrinks_to_trust_region():
    h = catalog_entry("sphere")
    # a seed with a finite radius of convergence; the requested collar is too thick
    xi = h.xi0.scaled(parse("1/(1.2 - re(z1))", 2))
    m = build(h, xi, s_max=5.0)
    assert m.diagnostics["collar_shrunk"]
    assert m.s_max < 5.0


def test_leaf_chart_sphere(sphere):
    p = np.array([1.0, 0, 0, 0])
    chart = leaf_chart(sphere, p)
    assert np.allclose(chart(0.0, 0.0), p)
    for t, s in ((0.3, 0.1), (-0.5, -0.2), (1.0, 0.05)):
        want = realify(np.exp((1j * t - s) / 2) * complexify(p))
        assert np.allclose(chart(t, s), want, atol=1e-12)
    assert chart.cr_residual(0.2, 0.1) <= 1e-7


def test_u_along_leaf_is_harmonic(perturbed):
    p = sample_points(SPHERE, 1, seed=11)[0]
    chart = leaf_chart(perturbed, p)
    ts = np.linspace(-0.2, 0.2, 21)
    ss = np.linspace(-0.2, 0.2, 21)
    pts = chart.grid(ts, ss)
    u = perturbed.u(pts.reshape(4, -1)).reshape(len(ts), len(ss))
    assert np.abs(u + ss[None, :]).max() <= 1e-8
    h = ts[1] - ts[0]
    lap = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4 * u[1:-1, 1:-1]) / h**2
    assert np.abs(lap).max() <= 1e-6


def test_leaf_grid_matches_pointwise(perturbed):
    p = sample_points(SPHERE, 1, seed=12)[0]
    chart = leaf_chart(perturbed, p)
    ts, ss = np.array([-0.1, 0.2]), np.array([-0.15, 0.0, 0.1])
    pts = chart.grid(ts, ss)
    for a, t in enumerate(ts):
        for b, s in enumerate(ss):
            assert np.allclose(pts[:, a, b], chart(t, s), atol=1e-11)


def test_leaf_csv(tmp_path, sphere):
    chart = leaf_chart(sphere, np.array([1.0, 0, 0, 0]))
    path = tmp_path / "leaf.csv"
    write_leaf_csv(chart, [0.0, 0.1], [0.0, 0.1], path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["t", "s", "x1", "x2", "x3", "x4", "u", "residual"]
    assert len(rows) == 5
