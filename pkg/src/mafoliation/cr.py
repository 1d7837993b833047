"""CR data of a real hypersurface ``V = {rho = 0}`` in C^{n+1}.

The contact form is ``theta = d^c rho`` restricted to ``TV``, so its
differential is ``dd^c rho``.  Holomorphic tangent frames come from the
complex gradient ``c = rho_x + i rho_y``: ``HT_p V`` is the Hermitian
orthogonal complement of ``c`` and is spanned by the vectors
``conj(c_p) e_b - conj(c_b) e_p`` (``p`` the pivot index), which are then
orthogonalised.  The same polynomial construction works on jets, giving
smooth frame fields whose brackets can be differentiated exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from typing import NamedTuple

import numpy as np

from .errors import (
    ConfigError, ConvergenceError, FrameError, SingularSystemError, TangencyError,
)
from .expr import Expression, VectorExpression, parse, parse_vector
from .forms import apply_J, d_jets, dc, ddc, lie_bracket_jets
from .jet import Jet
from .linalg import condition_number, slogdet_full, solve_full

__all__ = [
    "Hypersurface", "ContactFrame", "LeviResult", "project_to_V", "line_project", "ht_frame",
    "levi_nondegenerate", "reeb", "symmetry_residual", "frame_fields",
    "choose_pivot", "load_catalog", "catalog_entry", "sample_points",
    "MEMBERSHIP_TOL", "LEVI_FLOOR",
]

MEMBERSHIP_TOL = 1e-10
LEVI_FLOOR = 1e-8


@dataclass(frozen=True)
class Hypersurface:
    """Defining data of ``V = {rho = 0}`` in C^{n+1}."""

    rho: Expression
    n: int
    label: str = ""
    xi0: VectorExpression | None = None
    rho_text: str = ""
    xi0_text: str | None = None
    oracle_text: str | None = None
    sampling: dict = field(default_factory=dict, compare=False)
    description: str = ""

    @classmethod
    def from_strings(cls, rho: str, n: int, label: str = "", xi0: str | None = None,
                     oracle: str | None = None, sampling: dict | None = None,
                     description: str = "") -> "Hypersurface":
        dim = n + 1
        return cls(
            rho=parse(rho, dim), n=n, label=label,
            xi0=None if xi0 is None else parse_vector(xi0, dim),
            rho_text=rho, xi0_text=xi0, oracle_text=oracle,
            sampling=dict(sampling or {}), description=description,
        )

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def nreal(self) -> int:
        return 2 * self.n + 2

    @property
    def oracle(self) -> Expression | None:
        return None if self.oracle_text is None else parse(self.oracle_text, self.dim)

    def to_dict(self) -> dict:
        out = {"label": self.label, "n": self.n, "rho": self.rho_text}
        if self.xi0_text is not None:
            out["xi0"] = self.xi0_text
        if self.oracle_text is not None:
            out["oracle_u"] = self.oracle_text
        if self.description:
            out["description"] = self.description
        return out


# ------------------------------------------------------------------ catalog

def load_catalog(path=None) -> dict:
    """Read a catalog file (the built-in one by default) into ``{label: Hypersurface}``."""
    if path is None:
        text = resources.files("mafoliation").joinpath("data/catalog.json").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    try:
        entries = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"catalog is not valid JSON: {exc}") from exc
    if isinstance(entries, dict):
        entries = entries.get("surfaces", [])
    out = {}
    for e in entries:
        try:
            h = Hypersurface.from_strings(
                e["rho"], int(e["n"]), e["label"], e.get("xi0"), e.get("oracle_u"),
                e.get("sampling"), e.get("description", ""),
            )
        except KeyError as exc:
            raise ConfigError(f"catalog entry misses field {exc}") from exc
        out[h.label] = h
    return out


def catalog_entry(label: str, path=None) -> Hypersurface:
    cat = load_catalog(path)
    if label not in cat:
        raise ConfigError(f"unknown surface {label!r}; known: {', '.join(sorted(cat))}")
    return cat[label]


# ------------------------------------------------------------------ points on V

def project_to_V(h: Hypersurface, q, tol: float = 1e-12, maxiter: int = 60) -> np.ndarray:
    """Newton projection onto ``V``.

    The search line runs along ``J xi0(q)`` when a seed field is known (the
    same transversal direction the collar is swept in), else along the
    gradient of ``rho``.
    """
    q = np.asarray(q, dtype=float)
    if h.xi0 is not None:
        v = apply_J(h.xi0(q))
    else:
        v = h.rho.jet(q, 1).gradient()
    return line_project(h, q, v, tol, maxiter)


def line_project(h: Hypersurface, q, v, tol: float = 1e-12, maxiter: int = 60) -> np.ndarray:
    """Newton on ``t -> rho(q + t v)``; ``q, v`` have shape ``(2n+2,) + batch``."""
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    nv = np.linalg.norm(v, axis=0)
    if np.any(nv == 0):
        raise ConvergenceError("projection direction vanishes at the query point")
    v = v / nv
    t = np.zeros(q.shape[1:])
    for _ in range(maxiter):
        jet = h.rho.jet(q + t * v, 1)
        r = jet.value
        if np.all(np.abs(r) <= tol):
            return q + t * v
        slope = np.einsum("i...,i...->...", jet.gradient(), v)
        if np.any(np.abs(slope) < 1e-14):
            raise ConvergenceError("projection line is tangent to a level set of rho")
        t = t - np.where(np.abs(r) <= tol, 0.0, r / slope)
    raise ConvergenceError(f"projection did not converge (|rho| = {np.abs(r).max():.2e})")


def sample_points(h: Hypersurface, count: int, seed: int = 0) -> np.ndarray:
    """Deterministic random points on ``V``; returns ``(count, 2n+2)``."""
    rng = np.random.default_rng(seed)
    shape = h.sampling or {"kind": "sphere", "radius": 1.0}
    m = h.nreal
    center = np.asarray(shape.get("center", np.zeros(m)), dtype=float)
    out = []
    while len(out) < count:
        if shape.get("kind", "sphere") == "box":
            q = center + shape.get("half_width", 0.5) * rng.uniform(-1, 1, m)
        else:
            g = rng.standard_normal(m)
            q = center + shape.get("radius", 1.0) * g / np.linalg.norm(g)
        try:
            out.append(project_to_V(h, q, tol=1e-14))
        except ConvergenceError:
            continue
    return np.array(out)


# ------------------------------------------------------------------ frames

def choose_pivot(grad) -> int:
    """Complex index with the largest relative share of the gradient (batch-safe)."""
    grad = np.asarray(grad, dtype=float)
    c2 = grad[0::2] ** 2 + grad[1::2] ** 2
    share = c2 / np.maximum(c2.sum(axis=0), 1e-300)
    return int(np.argmax(share.reshape(share.shape[0], -1).min(axis=1)))


def frame_fields(grad: list, pivot: int | None = None) -> list:
    """Real frame vectors ``X_1 .. X_n`` of the complex complement of ``grad``.

    ``grad`` is a list of ``2n+2`` real components (arrays or jets) of a
    covector; the returned vectors ``X_i`` satisfy ``grad(X_i) = 0`` and
    ``grad(J X_i) = 0`` identically and are mutually Hermitian orthogonal.
    Each vector is a list of components of the same kind as the input.
    """
    dim = len(grad) // 2
    if pivot is None:
        pivot = choose_pivot([g.value if isinstance(g, Jet) else g for g in grad])
    c = [(grad[2 * a], grad[2 * a + 1]) for a in range(dim)]
    cp = c[pivot]
    vecs = []
    for b in range(dim):
        if b == pivot:
            continue
        zeta = [None] * dim
        # conj(c_p) e_b - conj(c_b) e_p
        zeta[b] = (cp[0], -cp[1])
        zeta[pivot] = (-c[b][0], c[b][1])
        vecs.append(zeta)
    ortho = []
    for zeta in vecs:
        for prev, norm2 in ortho:
            # zeta -= prev <prev, zeta> / <prev, prev>
            ip = _hermitian(prev, zeta)
            coef = (ip[0] / norm2, ip[1] / norm2)
            zeta = [_csub(z, _cmul(coef, p_)) for z, p_ in zip(zeta, prev)]
        ortho.append((zeta, _hermitian(zeta, zeta)[0]))
    out = []
    for zeta, _ in ortho:
        real = []
        for z in zeta:
            if z is None:
                real.extend([0.0 * grad[0], 0.0 * grad[0]])
            else:
                real.extend([z[0], z[1]])
        out.append(real)
    return out


def _cmul(a, b):
    if a is None or b is None:
        return None
    return (a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0])


def _csub(a, b):
    if b is None:
        return a
    if a is None:
        return (-b[0], -b[1])
    return (a[0] - b[0], a[1] - b[1])


def _hermitian(u, v):
    """``sum conj(u_a) v_a`` skipping structural zeros."""
    acc = None
    for x, y in zip(u, v):
        if x is None or y is None:
            continue
        term = (x[0] * y[0] + x[1] * y[1], x[0] * y[1] - x[1] * y[0])
        acc = term if acc is None else (acc[0] + term[0], acc[1] + term[1])
    return acc


class ContactFrame(NamedTuple):
    """Frame of ``HT_p V`` with the contact data at ``p``."""

    point: np.ndarray
    X: np.ndarray  # (n, 2n+2), orthonormal
    JX: np.ndarray  # (n, 2n+2)
    theta: np.ndarray  # d^c rho(p)
    dtheta: np.ndarray  # dd^c rho(p)
    drho: np.ndarray

    def basis(self) -> np.ndarray:
        """The ``2n`` vectors ``X_1, JX_1, ..., X_n, JX_n`` as rows."""
        rows = []
        for x, jx in zip(self.X, self.JX):
            rows.extend([x, jx])
        return np.array(rows)


def ht_frame(h: Hypersurface, p, floor: float = 1e-10) -> ContactFrame:
    p = np.asarray(p, dtype=float)
    jet = h.rho.jet(p, 2)
    g = jet.gradient()
    gn = np.linalg.norm(g)
    if gn < floor:
        raise FrameError(f"d rho vanishes at the point (|d rho| = {gn:.2e}); not a hypersurface point")
    X = np.array(frame_fields(list(g)), dtype=float)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    JX = np.array([apply_J(x) for x in X])
    return ContactFrame(p, X, JX, dc(jet), ddc(jet), g)


class LeviResult(NamedTuple):
    nondegenerate: bool
    condition: float
    det: float


def levi_nondegenerate(frame: ContactFrame, floor: float = LEVI_FLOOR) -> LeviResult:
    """Nondegeneracy of ``d theta`` on ``HT``, relative to ``|d rho|^{2n}``."""
    E = frame.basis()
    L = E @ frame.dtheta @ E.T
    sign, logabs = slogdet_full(L)
    n2 = E.shape[0]
    rel = float(sign * np.exp(logabs - n2 * np.log(np.linalg.norm(frame.drho))))
    return LeviResult(abs(rel) > floor, condition_number(L), rel)


def reeb(h: Hypersurface, p, frame: ContactFrame | None = None, tol: float = MEMBERSHIP_TOL) -> np.ndarray:
    """Reeb vector of ``theta = d^c rho|TV`` at ``p`` from one dense solve."""
    if frame is None:
        frame = ht_frame(h, p)
    rows = [frame.drho, frame.theta]
    rhs = [0.0, 1.0]
    for x, jx in zip(frame.X, frame.JX):
        rows.extend([frame.dtheta @ x, frame.dtheta @ jx])
        rhs.extend([0.0, 0.0])
    A = np.array(rows)
    b = np.array(rhs)
    scale = np.linalg.norm(A, axis=1, keepdims=True)
    scale[scale == 0] = 1.0
    try:
        xi = solve_full(A / scale, b / scale[:, 0], rcond=1e-10)
    except SingularSystemError as exc:
        raise SingularSystemError(f"Reeb system is singular: V is not contact at this point ({exc})") from exc
    resid = np.abs(A @ xi - b).max()
    if resid > tol * max(1.0, np.abs(A).max() * np.abs(xi).max()):
        raise SingularSystemError(f"Reeb system residual {resid:.2e} above tolerance")
    return xi


def symmetry_residual(h: Hypersurface, xi: VectorExpression, p, tangent_tol: float = 1e-8) -> float:
    """``max |theta([xi, Y])|`` over unit frame fields ``Y`` of ``HT`` at ``p``."""
    p = np.asarray(p, dtype=float)
    rjet = h.rho.jet(p, 2)
    grad = d_jets(rjet)
    X = frame_fields(grad)
    xj = xi.jets(p, 1)
    g = rjet.gradient()
    xv = np.array([c.value for c in xj], dtype=float)
    if abs(g @ xv) > tangent_tol * np.linalg.norm(g) * max(1.0, np.linalg.norm(xv)):
        raise TangencyError(f"field is not tangent to V (d rho(xi) = {g @ xv:.2e})")
    theta = dc(rjet)
    worst = 0.0
    for Y in X:
        for field_ in (Y, apply_J(Y)):
            yv = np.array([c.value for c in field_], dtype=float)
            br = np.array([c.value for c in lie_bracket_jets(xj, field_)], dtype=float)
            worst = max(worst, abs(theta @ br) / np.linalg.norm(yv))
    return float(worst)
