"""Complex structure and differential operators on open sets of C^{n+1}.

Real coordinates are interleaved, ``(x_1, y_1, ..., x_{n+1}, y_{n+1})`` with
``z_a = x_a + i y_a``.  Tangent vectors and one-forms at a point are numpy
arrays of length ``2n+2``; two-forms are antisymmetric matrices with
``omega(X, Y) = X @ M @ Y``.  Leading axes index components, trailing axes are
batch axes, matching :class:`~mafoliation.jet.Jet`.

Conventions (fixed once, everything else is derived):

* ``J`` is multiplication by ``i``: ``J d/dx_a = d/dy_a``, ``J d/dy_a = -d/dx_a``.
* ``omega^c(X) = -omega(J X)`` and ``d^c f = (df)^c``; so ``d^c x = dy``.
* ``d theta(X, Y) = X theta(Y) - Y theta(X) - theta([X, Y])`` (no 1/2), which
  is the normalisation under which ``X -| d theta = L_X theta - d(theta(X))``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import OrderError
from .jet import Jet

__all__ = [
    "J_matrix", "apply_J", "complexify", "realify",
    "d", "dc", "ddc", "dc_jets", "d_jets",
    "exterior_derivative", "exterior_derivative_jets", "contract", "pair",
    "lie_bracket", "lie_bracket_jets", "directional", "lie_derivative_oneform",
    "lie_derivative_cartan_jets", "lie_derivative_coordinate_jets",
    "oneform", "twoform", "wedge", "top_coefficient",
]


# ------------------------------------------------------------------ J

def J_matrix(m: int) -> np.ndarray:
    if m % 2:
        raise ValueError("ambient real dimension must be even")
    J = np.zeros((m, m))
    for a in range(m // 2):
        J[2 * a + 1, 2 * a] = 1.0
        J[2 * a, 2 * a + 1] = -1.0
    return J


def apply_J(v):
    """Multiply a tangent vector (or a list of jets) by ``i``."""
    if isinstance(v, (list, tuple)):
        out = []
        for a in range(len(v) // 2):
            out.extend([-v[2 * a + 1], v[2 * a]])
        return out
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[0::2] = -v[1::2]
    out[1::2] = v[0::2]
    return out


def complexify(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return v[0::2] + 1j * v[1::2]


def realify(z) -> np.ndarray:
    z = np.asarray(z)
    out = np.empty((2 * z.shape[0],) + z.shape[1:])
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


# ------------------------------------------------------------------ d, dc, ddc

def _need(f: Jet, order: int, what: str):
    if f.order < order:
        raise OrderError(f"{what} needs a jet of order >= {order}, got {f.order}")


def d(f: Jet) -> np.ndarray:
    _need(f, 1, "d")
    return f.gradient()


def dc(f: Jet) -> np.ndarray:
    """``d^c f`` at the base point; equals ``J`` applied to the gradient."""
    _need(f, 1, "dc")
    return apply_J(f.gradient())


def ddc(f: Jet) -> np.ndarray:
    """Matrix of ``d d^c f`` at the base point: ``-(H J + J H)``."""
    _need(f, 2, "ddc")
    H = f.hessian()
    J = J_matrix(f.nvars)
    HJ = np.einsum("ik...,kj->ij...", H, J)
    JH = np.einsum("ik,kj...->ij...", J, H)
    return -(HJ + JH)


def d_jets(f: Jet) -> list:
    _need(f, 1, "d")
    return [f.deriv(k) for k in range(f.nvars)]


def dc_jets(f: Jet) -> list:
    """Component jets (one order lower) of the one-form ``d^c f``."""
    return apply_J(d_jets(f))


def exterior_derivative(omega: list) -> np.ndarray:
    """Matrix of ``d omega`` at the base point from one-form component jets."""
    grads = np.stack([w.gradient() for w in omega])  # grads[j, i] = d_i omega_j
    return np.swapaxes(grads, 0, 1) - grads


def exterior_derivative_jets(omega: list) -> list:
    m = len(omega)
    D = [[omega[j].deriv(i) for j in range(m)] for i in range(m)]  # D[i][j] = d_i w_j
    return [[D[i][j] - D[j][i] for j in range(m)] for i in range(m)]


def contract(v, M):
    """Interior product ``v -| M`` as a covector: ``(v -| M)_j = sum_i v_i M_ij``."""
    if isinstance(M, list):
        m = len(M)
        return [sum((M[i][j] * v[i] for i in range(1, m)), M[0][j] * v[0]) for j in range(m)]
    return np.einsum("i...,ij...->j...", v, M)


def pair(M, X, Y):
    return np.einsum("i...,ij...,j...->...", X, M, Y)


# ------------------------------------------------------------------ vector fields

def directional(X: list, f: Jet) -> Jet:
    """Jet (one order lower) of ``X(f) = sum_j X_j d_j f``."""
    m = len(X)
    o = f.order - 1
    return sum((X[j].truncate(o) * f.deriv(j) for j in range(1, m)), X[0].truncate(o) * f.deriv(0))


def lie_bracket_jets(X: list, Y: list) -> list:
    """Component jets of ``[X, Y] = (X . grad) Y - (Y . grad) X`` (one order lower)."""
    return [directional(X, Y[i]) - directional(Y, X[i]) for i in range(len(X))]


def lie_bracket(X, Y, p) -> np.ndarray:
    """Bracket of two :class:`~mafoliation.expr.VectorExpression` fields at ``p``."""
    XJ = X.jets(p, 1)
    YJ = Y.jets(p, 1)
    return np.stack([c.value for c in lie_bracket_jets(XJ, YJ)])


def lie_derivative_cartan_jets(xi: list, omega: list) -> list:
    """``L_xi omega = xi -| d omega + d(omega(xi))`` as component jets."""
    m = len(xi)
    o = omega[0].order
    xi_t = [x.truncate(o) for x in xi]
    first = contract([x.truncate(o - 1) for x in xi], exterior_derivative_jets(omega))
    val = sum((omega[i] * xi_t[i] for i in range(1, m)), omega[0] * xi_t[0])
    return [first[j] + val.deriv(j) for j in range(m)]


def lie_derivative_coordinate_jets(xi: list, omega: list) -> list:
    """``(L_xi omega)_j = xi_i d_i omega_j + omega_i d_j xi_i``."""
    m = len(xi)
    o = omega[0].order - 1
    out = []
    for j in range(m):
        term = directional([x.truncate(o + 1) for x in xi], omega[j])
        for i in range(m):
            term = term + omega[i].truncate(o) * xi[i].truncate(o + 1).deriv(j)
        out.append(term)
    return out


def lie_derivative_oneform(xi, omega, p=None) -> np.ndarray:
    """Value of ``L_xi omega`` at a point (Cartan formula).

    ``xi`` is a VectorExpression (then ``p`` is required) or a list of jets.
    ``omega`` is a list of component jets or a callable ``(p, order) -> jets``.
    """
    if not isinstance(xi, list):
        xi = xi.jets(p, 1)
    if callable(omega):
        omega = omega(p, 1)
    return np.stack([c.value for c in lie_derivative_cartan_jets(xi, omega)])


# ------------------------------------------------------------------ exterior algebra

@lru_cache(maxsize=None)
def _wedge_table(m: int):
    n = 1 << m
    rows, cols, signs, targets = [], [], [], []
    for a in range(n):
        for b in range(n):
            if a & b:
                continue
            inv = 0
            for p in range(m):
                if a >> p & 1:
                    inv += bin(b & ((1 << p) - 1)).count("1")
            rows.append(a)
            cols.append(b)
            signs.append(-1.0 if inv % 2 else 1.0)
            targets.append(a | b)
    rows = np.array(rows)
    cols = np.array(cols)
    scatter = sp.csr_matrix((np.array(signs), (np.array(targets), np.arange(len(rows)))), shape=(n, len(rows)))
    return rows, cols, scatter


def oneform(covector) -> np.ndarray:
    covector = np.asarray(covector, dtype=float)
    m = covector.shape[0]
    out = np.zeros((1 << m,) + covector.shape[1:])
    for i in range(m):
        out[1 << i] = covector[i]
    return out


def twoform(M) -> np.ndarray:
    M = np.asarray(M, dtype=float)
    m = M.shape[0]
    out = np.zeros((1 << m,) + M.shape[2:])
    for i in range(m):
        for j in range(i + 1, m):
            out[(1 << i) | (1 << j)] = M[i, j]
    return out


def wedge(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Wedge product of forms stored densely by bitmask of coordinate indices."""
    n = a.shape[0]
    m = n.bit_length() - 1
    rows, cols, scatter = _wedge_table(m)
    prod = a[rows] * b[cols]
    batch = prod.shape[1:]
    out = scatter @ prod.reshape(len(rows), -1)
    return np.asarray(out).reshape((n,) + batch)


def top_coefficient(form: np.ndarray) -> np.ndarray:
    """Coefficient against ``dx_1 ^ dy_1 ^ ... ^ dx_{n+1} ^ dy_{n+1}``."""
    return form[form.shape[0] - 1]
