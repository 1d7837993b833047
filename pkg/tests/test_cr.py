import numpy as np
import pytest

from mafoliation.cr import (
    Hypersurface, catalog_entry, choose_pivot, frame_fields, ht_frame, levi_nondegenerate,
    load_catalog, project_to_V, reeb, sample_points, symmetry_residual,
)
from mafoliation.errors import ConfigError, FrameError, SingularSystemError, TangencyError
from mafoliation.expr import parse, parse_vector
from mafoliation.forms import apply_J, complexify, ddc, realify

SPHERE = catalog_entry("sphere")
HEIS = catalog_entry("heisenberg")
FLAT = catalog_entry("levi-flat")


def test_catalog_contents():
    cat = load_catalog()
    assert {"sphere", "heisenberg", "ellipsoid", "sphere3", "levi-flat"} <= set(cat)
    assert cat["sphere3"].n == 2
    with pytest.raises(ConfigError):
        catalog_entry("torus")


def test_catalog_file_errors(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text("{nope")
    with pytest.raises(ConfigError):
        load_catalog(bad)
    bad.write_text('[{"label": "x"}]')
    with pytest.raises(ConfigError):
        load_catalog(bad)


def test_project_examples():
    assert np.allclose(project_to_V(SPHERE, np.array([1.1, 0, 0, 0])), [1, 0, 0, 0], atol=1e-12)
    q = np.array([0.3, 0.2, 0.7, -0.4])
    got = project_to_V(HEIS, q)
    assert np.allclose(got, [0.3, 0.2, 0.7, 0.13], atol=1e-12)
    p = got
    assert np.array_equal(project_to_V(HEIS, p), p)


def test_sample_points_on_V():
    for label in ("sphere", "heisenberg", "ellipsoid", "sphere3"):
        h = catalog_entry(label)
        P = sample_points(h, 30, seed=1)
        assert np.abs(h.rho(P.T)).max() <= 1e-12


def test_frame_sphere_and_heisenberg():
    f = ht_frame(SPHERE, np.array([1.0, 0, 0, 0]))
    span = np.array([f.X[0], f.JX[0]])
    assert np.allclose(np.abs(span[:, :2]), 0)
    assert np.allclose(np.abs(span @ span.T), np.eye(2))
    f = ht_frame(HEIS, np.zeros(4))
    assert np.allclose(f.X[0][2:], 0) and np.allclose(f.JX[0][2:], 0)


def test_frame_invariants(rng):
    for label in ("sphere", "ellipsoid", "sphere3", "heisenberg"):
        h = catalog_entry(label)
        for p in sample_points(h, 20, seed=2):
            f = ht_frame(h, p)
            E = f.basis()
            assert np.abs(E @ f.drho).max() <= 1e-10
            assert np.abs(E @ f.theta).max() <= 1e-10
            assert np.linalg.svd(E, compute_uv=False).min() > 0.5
            # J-invariance of the span
            JE = np.array([apply_J(e) for e in E])
            coef, *_ = np.linalg.lstsq(E.T, JE.T, rcond=None)
            assert np.abs(E.T @ coef - JE.T).max() <= 1e-10


def test_frame_fields_on_jets(rng):
    p = rng.normal(size=6)
    g = [j for j in parse("abs2(z1) + 2*abs2(z2) + x5*x6", 3).jet(p, 2).gradient()]
    gj = [parse("abs2(z1) + 2*abs2(z2) + x5*x6", 3).jet(p, 3).deriv(k) for k in range(6)]
    Xv = frame_fields(g)
    Xj = frame_fields(gj, choose_pivot(g))
    for a, b in zip(Xv, Xj):
        assert np.allclose(a, [c.value for c in b])


def test_frame_error_at_critical_point():
    h = Hypersurface.from_strings("abs2(z1) + abs2(z2)", 1, "cone")
    with pytest.raises(FrameError):
        ht_frame(h, np.zeros(4))


def test_levi():
    assert levi_nondegenerate(ht_frame(SPHERE, np.array([0.6, 0, 0, 0.8]))).nondegenerate
    assert levi_nondegenerate(ht_frame(HEIS, np.zeros(4))).nondegenerate
    assert not levi_nondegenerate(ht_frame(FLAT, np.array([0.2, 0.1, 0.5, 0]))).nondegenerate


def test_reeb_closed_forms(rng):
    for p in sample_points(SPHERE, 100, seed=3):
        xi = reeb(SPHERE, p)
        assert np.allclose(xi, realify(0.5j * complexify(p)), atol=1e-12)
        f = ht_frame(SPHERE, p)
        assert f.theta @ xi == pytest.approx(1.0, abs=1e-10)
        assert np.abs(f.basis() @ f.dtheta.T @ xi).max() <= 1e-10
    for p in sample_points(HEIS, 10, seed=3):
        assert np.allclose(reeb(HEIS, p), [0, 0, -1, 0], atol=1e-12)
    with pytest.raises(SingularSystemError):
        reeb(FLAT, np.array([0.2, 0.1, 0.5, 0]))


def test_reeb_frame_independent(rng):
    h = catalog_entry("sphere3")
    for p in sample_points(h, 10, seed=4):
        f = ht_frame(h, p)
        xi = reeb(h, p, f)
        # remix the frame by a random unitary on HT
        Z = complexify(f.X.T).T  # complex frame vectors as rows
        Q, _ = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
        Zm = Q @ Z
        X = realify(Zm.T).T
        g = f._replace(X=X, JX=np.array([apply_J(x) for x in X]))
        assert np.abs(reeb(h, p, g) - xi).max() <= 1e-9


def test_symmetry_residual():
    p_all = sample_points(SPHERE, 40, seed=5)
    assert max(symmetry_residual(SPHERE, SPHERE.xi0, p) for p in p_all) <= 1e-9
    pert = SPHERE.xi0.scaled(parse("1 + 0.3*re(z1)", 2))
    assert max(symmetry_residual(SPHERE, pert, p) for p in p_all) >= 0.05
    with pytest.raises(TangencyError):
        symmetry_residual(SPHERE, parse_vector("[1, 0]", 2), np.array([1.0, 0, 0, 0]))


def test_symmetry_residual_of_an_HT_field_is_the_levi_form():
    # X = d/dx1 + 2i conj(z1) d/dw is tangent and lies in HT; [X, J X] leaves HT, and
    # theta([X, Y]) = -dd^c rho(X, Y) for fields with theta(X) = theta(Y) = 0
    x1 = parse_vector("[1, 2*i*conj(z1)]", 2)
    M = ddc(HEIS.rho.jet(np.zeros(4), 2))
    levi = abs(M[0, 1])
    assert levi == pytest.approx(4.0)
    assert symmetry_residual(HEIS, x1, np.zeros(4)) == pytest.approx(levi, rel=1e-12)
