"""Contact-locus functions and the generalized analytic system on leaves.

With ``omega = L_xi d^c u`` and a frame ``X_1..X_n`` of
``Ker du ∩ Ker d^c u`` the functions ``u_i = omega(X_i)`` and
``v_i = omega(J X_i)`` vanish exactly on the contact locus.  Expanding the
brackets of the frame with ``xi`` and ``J xi`` in the basis
``(xi, X_j, J X_j)``

    [X_i, xi]     =  u_i xi + sum a_ij X_j + b_ij J X_j
    [J X_i, xi]   =  v_i xi + sum c_ij X_j + d_ij J X_j
    [X_i, J xi]   = -v_i xi + sum e_ij X_j + f_ij J X_j
    [J X_i, J xi] =  u_i xi + sum g_ij X_j + h_ij J X_j

and using ``[xi, J xi] = 0`` gives, in the leaf coordinate ``z = t + i s``
(``xi = d/dt``, ``J xi = d/ds``),

    u_t - v_s = P u + Q v,     u_s + v_t = R u - S v,

with ``P = g - d``, ``Q = h + c``, ``R = b - e``, ``S = a + f``.  For
``w = u + i v`` this is ``dw/dzbar = A w + B conj(w)`` where

    A = ((P - S) + i (R - Q)) / 4,     B = ((P + S) + i (Q + R)) / 4.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cr import choose_pivot, frame_fields
from .errors import FrameError, GridError
from .forms import apply_J, d_jets, dc_jets, directional, lie_bracket_jets, lie_derivative_cartan_jets
from .jet import Jet
from .monge_ampere import classify_grid

__all__ = [
    "ContactFunctions", "ContactCoefficients", "VekuaSystem", "contact_functions",
    "bracket_coefficients", "pack_coefficients", "assemble_system", "system_residual",
    "leaf_system", "classify_zero_set", "bicommutator_check", "write_system_csv",
]

DECOMPOSITION_TOL = 1e-8


def _values(jets) -> np.ndarray:
    return np.stack([c.value for c in jets])


def _pair(form: list, vec: list):
    acc = form[0] * vec[0]
    for f, v in zip(form[1:], vec[1:]):
        acc = acc + f * v
    return acc


class _Fields(NamedTuple):
    u: Jet
    xi: list
    Jxi: list
    X: list  # n frame fields, each a list of component jets
    JX: list
    dcu: list  # jets of d^c u


def _fields(m, Q, order: int, xi_override=None, pivot=None) -> _Fields:
    data = m.local(Q, order=order)
    u = data.u
    xi = data.xi
    if xi_override is not None:
        xi = xi_override(Q, order - 1)
    grad = d_jets(u)
    if pivot is None:
        pivot = choose_pivot(np.stack([g.value for g in grad]))
    X = frame_fields(grad, pivot)
    # frame jets are one order below u; bring xi to the same order
    o = X[0][0].order
    xi = [c.truncate(o) for c in xi]
    return _Fields(u, xi, apply_J(xi), X, [apply_J(x) for x in X], dc_jets(u))


# ------------------------------------------------------------------ contact functions

class ContactFunctions(NamedTuple):
    u: np.ndarray  # (n,) + batch, omega(X_i)
    v: np.ndarray  # omega(J X_i)
    formulas: dict  # the four bracket expressions


def contact_functions(m, Q, pivot: int | None = None) -> ContactFunctions:
    """``u_i = omega(X_i)``, ``v_i = omega(J X_i)`` and their bracket formulas.

    The bracket formulas are ``d^c u([X_i, xi]) = u_i``,
    ``d^c u([J X_i, xi]) = v_i``, ``d^c u([X_i, J xi]) = -v_i`` and
    ``d^c u([J X_i, J xi]) = u_i``; they are returned under the keys
    ``"X_xi"``, ``"JX_xi"``, ``"X_Jxi"`` (already negated) and ``"JX_Jxi"``.
    """
    return _contact(_fields(m, np.asarray(Q, dtype=float), 2, pivot=pivot))


def _contact(f: _Fields) -> ContactFunctions:
    omega = lie_derivative_cartan_jets(f.xi, f.dcu)
    om = _values(omega)
    dcu = _values(f.dcu)
    u = np.stack([np.einsum("i...,i...->...", om, _values(x)) for x in f.X])
    v = np.stack([np.einsum("i...,i...->...", om, _values(jx)) for jx in f.JX])

    def dcu_of(br):
        return np.einsum("i...,i...->...", dcu, _values(br))

    formulas = {
        "X_xi": np.stack([dcu_of(lie_bracket_jets(x, f.xi)) for x in f.X]),
        "JX_xi": np.stack([dcu_of(lie_bracket_jets(jx, f.xi)) for jx in f.JX]),
        "X_Jxi": np.stack([-dcu_of(lie_bracket_jets(x, f.Jxi)) for x in f.X]),
        "JX_Jxi": np.stack([dcu_of(lie_bracket_jets(jx, f.Jxi)) for jx in f.JX]),
    }
    return ContactFunctions(u, v, formulas)


# ------------------------------------------------------------------ coefficients

@dataclass
class ContactCoefficients:
    """Frame expansion coefficients at a batch of points.

    ``coeffs[name]`` has shape ``(n, n) + batch`` for ``name`` in ``"abcdefgh"``;
    ``lam`` holds the ``xi``-components of the four brackets, ``(4, n) + batch``.
    """

    u: np.ndarray
    v: np.ndarray
    coeffs: dict
    lam: np.ndarray
    decomposition_residual: np.ndarray
    condition: np.ndarray

    @property
    def w(self) -> np.ndarray:
        return self.u + 1j * self.v


def bracket_coefficients(m, Q, pivot: int | None = None, xi_override=None,
                         tol: float = DECOMPOSITION_TOL) -> ContactCoefficients:
    """Expand the four bracket families in the basis ``(xi, J xi, X_j, J X_j)``.

    The ``J xi`` component must vanish (the brackets lie in ``Ker du``); its
    size relative to the bracket is the decomposition residual, and exceeding
    ``tol`` raises :class:`FrameError`.  ``xi_override(Q, order)`` replaces
    the built field (used for negative controls).
    """
    Q = np.asarray(Q, dtype=float)
    single = Q.ndim == 1
    if single:
        Q = Q[:, None]
    f = _fields(m, Q, 2, xi_override=xi_override, pivot=pivot)
    n = len(f.X)
    basis = [f.xi, f.Jxi]
    for x, jx in zip(f.X, f.JX):
        basis.extend([x, jx])
    Bm = np.stack([_values(b) for b in basis], axis=1)  # (m, m, N): columns are basis vectors
    mats = np.moveaxis(Bm, -1, 0)
    cond = np.linalg.cond(mats)
    families = [
        [lie_bracket_jets(x, f.xi) for x in f.X],
        [lie_bracket_jets(jx, f.xi) for jx in f.JX],
        [lie_bracket_jets(x, f.Jxi) for x in f.X],
        [lie_bracket_jets(jx, f.Jxi) for jx in f.JX],
    ]
    names = ["ab", "cd", "ef", "gh"]
    coeffs = {}
    lam = np.zeros((4, n) + Q.shape[1:])
    resid = np.zeros(Q.shape[1:])
    for fam, (p_, q_) in zip(range(4), names):
        c1 = np.zeros((n, n) + Q.shape[1:])
        c2 = np.zeros((n, n) + Q.shape[1:])
        for i, br in enumerate(families[fam]):
            vec = np.moveaxis(_values(br), -1, 0)  # (N, m)
            sol = np.linalg.solve(mats, vec[..., None])[..., 0]  # (N, m)
            sol = np.moveaxis(sol, 0, -1)
            lam[fam, i] = sol[0]
            scale = np.maximum(np.linalg.norm(vec, axis=1), 1.0)
            resid = np.maximum(resid, np.abs(sol[1]) / scale)
            c1[i] = sol[2::2]
            c2[i] = sol[3::2]
        coeffs[p_], coeffs[q_] = c1, c2
    if np.any(resid > tol):
        raise FrameError(
            f"bracket decomposition leaves Ker du (J xi component {resid.max():.2e}); "
            "the field is not calibrated"
        )
    cf = _contact(f)
    out = ContactCoefficients(cf.u, cf.v, coeffs, lam, resid, cond)
    if single:
        out = ContactCoefficients(
            cf.u[:, 0], cf.v[:, 0], {k: v[..., 0] for k, v in coeffs.items()},
            lam[..., 0], resid[0], cond[0],
        )
    return out


def pack_coefficients(coeffs: dict) -> tuple:
    """Complex ``(A, B)`` from the real coefficient families."""
    P = coeffs["g"] - coeffs["d"]
    Qm = coeffs["h"] + coeffs["c"]
    R = coeffs["b"] - coeffs["e"]
    S = coeffs["a"] + coeffs["f"]
    A = 0.25 * ((P - S) + 1j * (R - Qm))
    B = 0.25 * ((P + S) + 1j * (Qm + R))
    return A, B


# ------------------------------------------------------------------ systems

@dataclass
class VekuaSystem:
    """``dw/dzbar = A w + B conj(w)`` sampled on a ``t x s`` grid.

    ``w`` has shape ``(n, Nt, Ns)``; ``A`` and ``B`` have shape ``(n, n, Nt, Ns)``.
    """

    ts: np.ndarray
    ss: np.ndarray
    w: np.ndarray
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        shape = (len(self.ts), len(self.ss))
        if self.w.shape[1:] != shape or self.A.shape[2:] != shape or self.B.shape[2:] != shape:
            raise GridError("w, A, B must share the grid shape")
        if not (np.all(np.isfinite(self.A)) and np.all(np.isfinite(self.B))):
            raise GridError("coefficient grids contain non-finite values")


def assemble_system(ts, ss, coeffs: ContactCoefficients) -> VekuaSystem:
    """Build the system from coefficients computed on a flattened ``t x s`` grid."""
    ts = np.asarray(ts, dtype=float)
    ss = np.asarray(ss, dtype=float)
    shape = (len(ts), len(ss))
    A, B = pack_coefficients(coeffs.coeffs)
    n = A.shape[0]
    return VekuaSystem(
        ts, ss,
        coeffs.w.reshape((n,) + shape),
        A.reshape((n, n) + shape),
        B.reshape((n, n) + shape),
    )


def dbar_residual(sys: VekuaSystem) -> np.ndarray:
    """``|dw/dzbar - A w - B conj(w)|`` at interior points, shape ``(n, Nt-2, Ns-2)``."""
    if len(sys.ts) < 3 or len(sys.ss) < 3:
        raise GridError("the centred stencil needs at least 3 x 3 grid points")
    ht = np.diff(sys.ts)
    hs = np.diff(sys.ss)
    if not (np.allclose(ht, ht[0]) and np.allclose(hs, hs[0])):
        raise GridError("grid must be uniform")
    w = sys.w
    wt = (w[:, 2:, 1:-1] - w[:, :-2, 1:-1]) / (2 * ht[0])
    ws = (w[:, 1:-1, 2:] - w[:, 1:-1, :-2]) / (2 * hs[0])
    dbar = 0.5 * (wt + 1j * ws)
    wi = w[:, 1:-1, 1:-1]
    Ai = sys.A[:, :, 1:-1, 1:-1]
    Bi = sys.B[:, :, 1:-1, 1:-1]
    rhs = np.einsum("ijts,jts->its", Ai, wi) + np.einsum("ijts,jts->its", Bi, wi.conj())
    return np.abs(dbar - rhs)


def system_residual(sys: VekuaSystem) -> float:
    return float(dbar_residual(sys).max())


def leaf_system(m, chart, ts, ss) -> VekuaSystem:
    """Sample ``w``, ``A``, ``B`` on the leaf rectangle ``ts x ss`` of a chart."""
    pts = chart.grid(ts, ss)
    flat = pts.reshape(pts.shape[0], -1)
    # du is parallel to d rho on V and stays close to it in the collar
    pivot = choose_pivot(m.h.rho.jet(flat, 1).gradient())
    coeffs = bracket_coefficients(m, flat, pivot=pivot)
    return assemble_system(ts, ss, coeffs)


def classify_zero_set(w: np.ndarray, tol: float) -> tuple:
    """Dichotomy classification of the common zeros of ``w`` on a 2-D grid.

    Returns ``("identically_zero", 0)``, ``("isolated", count)`` or
    ``("unresolved", count)``.
    """
    w = np.asarray(w)
    if w.ndim == 2:
        w = w[None]
    mag = np.abs(w).max(axis=0)
    label, count = classify_grid(mag, tol, max_extent=2)
    if label == "contained":
        return "identically_zero", 0
    if label == "discrete":
        return "isolated", count
    return "unresolved", count


# ------------------------------------------------------------------ bicommutators

def bicommutator_check(m, Q, pivot: int | None = None) -> dict:
    """The two Jacobi pairs of bicommutators and the first closed form.

    Returns maxima of ``|d^c u([[X_i, xi], J xi]) - d^c u([[X_i, J xi], xi])|``,
    the analogous ``J X_i`` gap, and the gap between the first bicommutator
    and ``-J xi(u_i) + sum_j (b_ij u_j - a_ij v_j)``.
    """
    Q = np.asarray(Q, dtype=float)
    f = _fields(m, Q, 3, pivot=pivot)
    o = f.X[0][0].order  # 2
    dcu1 = [c.truncate(o - 1) for c in f.dcu]
    dcu0 = _values(f.dcu)

    def dc_of(vec):
        return np.einsum("i...,i...->...", dcu0, _values(vec))

    gaps_x, gaps_jx, gaps_form = [], [], []
    coeffs = bracket_coefficients(m, Q, pivot=pivot)
    u_vals, v_vals = coeffs.u, coeffs.v
    for i, (x, jx) in enumerate(zip(f.X, f.JX)):
        xi1 = [c.truncate(o - 1) for c in f.xi]
        jxi1 = [c.truncate(o - 1) for c in f.Jxi]
        a1 = lie_bracket_jets(lie_bracket_jets(x, f.xi), jxi1)
        a2 = lie_bracket_jets(lie_bracket_jets(x, f.Jxi), xi1)
        b1 = lie_bracket_jets(lie_bracket_jets(jx, f.xi), jxi1)
        b2 = lie_bracket_jets(lie_bracket_jets(jx, f.Jxi), xi1)
        gaps_x.append(np.abs(dc_of(a1) - dc_of(a2)))
        gaps_jx.append(np.abs(dc_of(b1) - dc_of(b2)))
        # u_i as a jet, then J xi (u_i)
        ui = _pair(dcu1, lie_bracket_jets(x, f.xi))
        Jxi_ui = directional([c.truncate(o - 1) for c in f.Jxi], ui).value
        rhs = -Jxi_ui + np.einsum("j...,j...->...", coeffs.coeffs["b"][i], u_vals) \
            - np.einsum("j...,j...->...", coeffs.coeffs["a"][i], v_vals)
        gaps_form.append(np.abs(dc_of(a1) - rhs))
    return {
        "jacobi_X": float(np.max(gaps_x)),
        "jacobi_JX": float(np.max(gaps_jx)),
        "closed_form": float(np.max(gaps_form)),
    }


def write_system_csv(sys: VekuaSystem, path) -> None:
    """Grid dump: t, s, then Re/Im of w_i, A_ij, B_ij and the residual (blank on the border)."""
    n = sys.w.shape[0]
    res = np.full((len(sys.ts), len(sys.ss)), np.nan)
    if len(sys.ts) >= 3 and len(sys.ss) >= 3:
        res[1:-1, 1:-1] = dbar_residual(sys).max(axis=0)
    header = ["t", "s"]
    header += [f"{p}_w{i + 1}" for i in range(n) for p in ("re", "im")]
    for name in ("A", "B"):
        header += [f"{p}_{name}{i + 1}{j + 1}" for i in range(n) for j in range(n) for p in ("re", "im")]
    header.append("residual")
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for a, t in enumerate(sys.ts):
            for b, s in enumerate(sys.ss):
                row = [repr(float(t)), repr(float(s))]
                for i in range(n):
                    row += [repr(float(sys.w[i, a, b].real)), repr(float(sys.w[i, a, b].imag))]
                for M in (sys.A, sys.B):
                    for i in range(n):
                        for j in range(n):
                            row += [repr(float(M[i, j, a, b].real)), repr(float(M[i, j, a, b].imag))]
                row.append("" if np.isnan(res[a, b]) else repr(float(res[a, b])))
                wr.writerow(row)
