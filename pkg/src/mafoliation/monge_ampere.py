"""Monge-Ampere diagnostics for a constructed (or any) function ``u``.

Pointwise quantities take a jet of ``u`` (order >= 2, possibly batched):

* the normalised complex-Hessian determinant,
* the nondegeneracy coefficient of ``du ^ d^c u ^ (dd^c u)^n``,
* the vector ``xi_u`` determined by ``du``, ``d^c u`` and ``dd^c u``.

Model-level checks combine them with the built field ``xi``: the contact
residual ``xi -| dd^c u`` (cross-checked against ``L_xi d^c u``), the
determinant factorisation over an adapted frame and leaf saturation scans.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import ndimage

from .cr import frame_fields
from .errors import SingularSystemError
from .forms import (
    apply_J, contract, dc_jets, ddc, lie_derivative_coordinate_jets, oneform,
    top_coefficient, twoform, wedge,
)
from .jet import Jet
from .linalg import slogdet_full, solve_full

__all__ = [
    "MAResidual", "complex_hessian", "ma_residual", "nondegeneracy", "xi_u",
    "contact_residual", "factorization_check", "saturation_scan", "ScanResult",
    "wedge_power", "wedge_constant", "MAReport", "ma_report",
    "CONTACT_TOL", "MA_TOL",
]

CONTACT_TOL = 1e-7
MA_TOL = 1e-6


class MAResidual(NamedTuple):
    value: np.ndarray
    degenerate: np.ndarray


def complex_hessian(jet: Jet) -> np.ndarray:
    """``u_{a bbar} = d^2 u / dz_a dzbar_b``, shape ``(n+1, n+1) + batch``."""
    H = jet.hessian()
    xx = H[0::2, 0::2]
    yy = H[1::2, 1::2]
    xy = H[0::2, 1::2]
    yx = H[1::2, 0::2]
    return 0.25 * ((xx + yy) + 1j * (xy - yx))


def ma_residual(jet: Jet, n: int | None = None) -> MAResidual:
    """``|det u_{a bbar}| / (|u_{a bbar}|_F / sqrt(n+1))^{n+1}``, a number in ``[0, 1]``."""
    h = complex_hessian(jet)
    k = h.shape[0]
    if n is not None and k != n + 1:
        raise ValueError(f"jet lives on C^{k}, expected C^{n + 1}")
    batch = h.shape[2:]
    mats = np.moveaxis(h.reshape(k, k, -1), -1, 0)
    fro = np.linalg.norm(mats.reshape(len(mats), -1), axis=1)
    degenerate = fro <= 1e-300
    _, logabs = slogdet_full(mats)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.exp(logabs - k * np.log(np.where(degenerate, 1.0, fro / math.sqrt(k))))
    val = np.where(degenerate, 0.0, val)
    return MAResidual(val.reshape(batch), degenerate.reshape(batch))


def nondegeneracy(jet: Jet, n: int | None = None) -> np.ndarray:
    """Coefficient of ``du ^ d^c u ^ (dd^c u)^n`` against the coordinate volume form."""
    m = jet.nvars
    k = m // 2 - 1 if n is None else n
    g = jet.gradient()
    form = wedge(oneform(g), oneform(apply_J(g)))
    w2 = twoform(ddc(jet))
    for _ in range(k):
        form = wedge(form, w2)
    return top_coefficient(form)


def wedge_power(jet: Jet) -> np.ndarray:
    """Top coefficient of ``(dd^c u)^{n+1}``."""
    w2 = twoform(ddc(jet))
    form = w2
    for _ in range(jet.nvars // 2 - 1):
        form = wedge(form, w2)
    return top_coefficient(form)


def wedge_constant(n: int, seed: int = 0) -> float:
    """Ratio between the wedge power and the complex-Hessian determinant.

    Determined empirically at a reference point from a random strictly
    plurisubharmonic quadratic (the ratio is a convention-dependent constant).
    """
    m = 2 * n + 2
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n + 1, n + 1)) + 1j * rng.standard_normal((n + 1, n + 1))
    A = A @ A.conj().T + np.eye(n + 1)
    Q = _real_quadratic(A)
    x = Jet.seed(rng.standard_normal(m), 2)
    u = sum(x[i] * x[j] * Q[i, j] for i in range(m) for j in range(m))
    det = np.linalg.det(complex_hessian(u)).real
    return float(wedge_power(u) / det)


def _real_quadratic(A: np.ndarray) -> np.ndarray:
    """Symmetric real matrix of ``z^* A z`` in interleaved real coordinates."""
    k = A.shape[0]
    Q = np.zeros((2 * k, 2 * k))
    for a in range(k):
        for b in range(k):
            re, im = A[a, b].real, A[a, b].imag
            # conj(z_a) A_ab z_b with z = x + iy
            Q[2 * a, 2 * b] += re
            Q[2 * a + 1, 2 * b + 1] += re
            Q[2 * a, 2 * b + 1] -= im
            Q[2 * a + 1, 2 * b] += im
    return 0.5 * (Q + Q.T)


class XiU(NamedTuple):
    vector: np.ndarray
    residual: float  # residual of the square system
    kernel_residual: float  # |dd^c u(xi_u, J grad u)|, the remaining condition on Ker du


def xi_u(jet: Jet, n: int | None = None) -> XiU:
    """Solve ``du(xi)=0, d^c u(xi)=1, dd^c u(xi, X)=0`` on ``Ker du`` at one point."""
    g = np.asarray(jet.gradient(), dtype=float)
    if g.ndim != 1:
        raise ValueError("xi_u works on a single point; loop over batches")
    gn = np.linalg.norm(g)
    if gn < 1e-12:
        raise SingularSystemError("du vanishes: no xi_u at this point")
    M = ddc(jet)
    X = np.array(frame_fields(list(g)), dtype=float)
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    rows = [g, apply_J(g)]
    rhs = [0.0, 1.0]
    for x in X:
        rows.extend([M @ x, M @ apply_J(x)])
        rhs.extend([0.0, 0.0])
    A = np.array(rows)
    b = np.array(rhs)
    scale = np.linalg.norm(A, axis=1)
    scale[scale == 0] = 1.0
    try:
        v = solve_full(A / scale[:, None], b / scale, rcond=1e-10)
    except SingularSystemError as exc:
        raise SingularSystemError(f"degenerate point: xi_u system is singular ({exc})") from exc
    resid = float(np.abs(A @ v - b).max())
    kern = float(abs(v @ M @ apply_J(g)) / gn)
    return XiU(v, resid, kern)


class ContactResidual(NamedTuple):
    residual: np.ndarray  # |xi -| dd^c u|
    lemma_gap: np.ndarray  # |xi -| dd^c u - L_xi d^c u|


def contact_residual(m, Q, data=None) -> ContactResidual:
    """Contact residual of a model at ``Q`` plus the Lie-derivative cross-check.

    The contraction uses the Hessian formula for ``dd^c u``; the Lie derivative
    uses the coordinate formula ``xi^i d_i w_j + w_i d_j xi^i`` on the jets of
    ``w = d^c u``, so the two sides share no code beyond the jets.
    """
    if data is None:
        data = m.local(np.asarray(Q, dtype=float), order=2)
    xi = data.xi
    xv = np.stack([c.value for c in xi])
    lhs = contract(xv, ddc(data.u))
    lie = lie_derivative_coordinate_jets(xi, dc_jets(data.u))
    rhs = np.stack([c.value for c in lie])
    return ContactResidual(np.linalg.norm(lhs, axis=0), np.linalg.norm(lhs - rhs, axis=0))


class Factorization(NamedTuple):
    lhs: np.ndarray
    rhs: np.ndarray
    gap: np.ndarray
    off_diagonal: np.ndarray


def factorization_check(m, Q, data=None) -> Factorization:
    """Determinant of ``dd^c u(E_a, J E_b)`` on ``E = (xi, X_1..X_n)`` against its factorisation.

    ``rhs = dd^c u(xi, J xi) * det(Levi block)``.  ``gap`` is ``|lhs - rhs|``
    relative to ``|P|_F^{n+1}``; ``off_diagonal`` is the largest
    ``|dd^c u(xi, X_i)|, |dd^c u(xi, J X_i)|``, whose vanishing makes the
    factorisation exact.
    """
    if data is None:
        data = m.local(np.asarray(Q, dtype=float), order=2)
    M = ddc(data.u)  # (m, m, N)
    g = data.u.gradient()
    xv = np.stack([c.value for c in data.xi])
    N = xv.shape[1] if xv.ndim > 1 else 1
    if xv.ndim == 1:
        M, g, xv = M[..., None], g[:, None], xv[:, None]
    X = np.array(frame_fields(list(g)))  # (n, m, N)
    X = X / np.linalg.norm(X, axis=1, keepdims=True)
    E = np.concatenate([xv[None], X], axis=0)  # (n+1, m, N)
    JE = np.stack([apply_J(e) for e in E])
    P = np.einsum("aiN,ijN,bjN->Nab", E, M, JE)
    lhs = np.linalg.det(P)
    rhs = P[:, 0, 0] * np.linalg.det(P[:, 1:, 1:]) if P.shape[1] > 1 else P[:, 0, 0]
    k = P.shape[1]
    scale = np.maximum(np.linalg.norm(P.reshape(N, -1), axis=1) ** k, 1e-300)
    XJX = np.concatenate([X, np.stack([apply_J(x) for x in X])], axis=0)
    off = np.abs(np.einsum("iN,ijN,bjN->Nb", xv, M, XJX)).max(axis=1)
    return Factorization(lhs, rhs, np.abs(lhs - rhs) / scale, off)


# ------------------------------------------------------------------ scans

@dataclass
class ScanResult:
    classification: str  # contained | discrete | mixed | unresolved
    zero_count: int
    max_residual: float
    min_residual: float
    residuals: np.ndarray = field(repr=False)

    def summary(self) -> dict:
        return {
            "classification": self.classification,
            "zero_count": int(self.zero_count),
            "max_residual": float(self.max_residual),
            "min_residual": float(self.min_residual),
        }


def classify_grid(values: np.ndarray, tol: float, max_extent: int = 1) -> tuple:
    """Classify the sub-tolerance set of a 2-D grid of nonnegative values.

    Returns ``(label, cluster_count)``.  Clusters are 8-connected components;
    a cluster counts as isolated when its index extent in each direction is at
    most ``max_extent`` steps.
    """
    values = np.asarray(values)
    if values.ndim != 2 or min(values.shape) < 2:
        return "unresolved", 0
    below = values <= tol
    if below.all():
        return "contained", 0
    labels, count = ndimage.label(below, structure=np.ones((3, 3)))
    for sl in ndimage.find_objects(labels):
        if any(s.stop - s.start - 1 > max_extent for s in sl):
            return "mixed", count
    return "discrete", count


def saturation_scan(m, chart, ts, ss, tol: float = CONTACT_TOL) -> ScanResult:
    """Contact residual over a leaf rectangle and the resulting classification."""
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    ss = np.atleast_1d(np.asarray(ss, dtype=float))
    if len(ts) < 2 or len(ss) < 2:
        return ScanResult("unresolved", 0, float("nan"), float("nan"), np.zeros((len(ts), len(ss))))
    pts = chart.grid(ts, ss)
    mm = pts.shape[0]
    flat = pts.reshape(mm, -1)
    res = contact_residual(m, flat).residual.reshape(len(ts), len(ss))
    label, count = classify_grid(res, tol)
    return ScanResult(label, count, float(res.max()), float(res.min()), res)


# ------------------------------------------------------------------ report

@dataclass
class MAReport:
    """Per-sample Monge-Ampere records with summary statistics."""

    records: list
    label: str = ""

    @property
    def summary(self) -> dict:
        out = {"count": len(self.records)}
        if not self.records:
            return out
        for key in ("ma_residual", "nondegeneracy", "contact_residual", "lemma_gap"):
            vals = np.array([r[key] for r in self.records])
            out[key] = {
                "max": float(vals.max()), "mean": float(vals.mean()), "min": float(vals.min()),
            }
        nd = np.array([abs(r["nondegeneracy"]) for r in self.records])
        out["nondegeneracy_abs_min"] = float(nd.min())
        return out

    def to_dict(self) -> dict:
        return {"label": self.label, "summary": self.summary, "records": self.records}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def ma_report(m, Q, with_xi_u: bool = False) -> MAReport:
    """Evaluate every pointwise diagnostic at the columns of ``Q``."""
    Q = np.asarray(Q, dtype=float)
    data = m.local(Q, order=2)
    ma = ma_residual(data.u)
    nd = nondegeneracy(data.u)
    cr = contact_residual(m, Q, data)
    records = []
    for j in range(Q.shape[1]):
        rec = {
            "point": [float(x) for x in Q[:, j]],
            "u": float(data.u.value[j]),
            "ma_residual": float(ma.value[j]),
            "nondegeneracy": float(nd[j]),
            "contact_residual": float(cr.residual[j]),
            "lemma_gap": float(cr.lemma_gap[j]),
        }
        if with_xi_u:
            rec["xi_u"] = [float(x) for x in xi_u(data.u.taken(j)).vector]
        records.append(rec)
    return MAReport(records, m.label)
