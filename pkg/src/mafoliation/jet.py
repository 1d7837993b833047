"""Truncated multivariate Taylor series ("jets").

A :class:`Jet` stores the Taylor coefficients (derivative divided by the
factorial of the multi-index) of a function of ``nvars`` real variables about
a base point, truncated at total degree ``order``.  Coefficients are kept in a
dense table in graded order: degree 0, then the ``nvars`` degree-1 monomials in
variable order, then degree 2, and so on.  Because the order is graded, the
table of a lower-order truncation is a prefix of the full table.

Every coefficient may carry trailing batch dimensions, so a single ``Jet``
can represent the jets of one function at many base points at once.  All
arithmetic broadcasts over those dimensions.
"""

from __future__ import annotations

import math
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, OrderError

__all__ = [
    "Jet",
    "table_size",
    "multi_indices",
    "compose",
    "invert_map",
    "solve_linear",
    "MAX_EXPRESSION_ORDER",
]

MAX_EXPRESSION_ORDER = 8


def table_size(nvars: int, order: int) -> int:
    if order < 0:
        raise OrderError("jet order must be non-negative")
    return math.comb(nvars + order, order)


class _Tables:
    """Index bookkeeping for one ``(nvars, order)`` pair."""

    def __init__(self, nvars: int, order: int):
        self.nvars = nvars
        self.order = order
        rows = []
        for deg in range(order + 1):
            for combo in combinations_with_replacement(range(nvars), deg):
                alpha = [0] * nvars
                for v in combo:
                    alpha[v] += 1
                rows.append(alpha)
        self.exponents = np.array(rows, dtype=np.int64).reshape(-1, nvars)
        self.size = len(rows)
        self.degree = self.exponents.sum(axis=1)
        self.base = order + 1
        self.weights = self.base ** np.arange(nvars, dtype=np.int64)
        codes = self.exponents @ self.weights
        self._sorter = np.argsort(codes)
        self._sorted_codes = codes[self._sorter]
        self.factorial = np.array(
            [np.prod([math.factorial(a) for a in row]) for row in rows], dtype=float
        )

        # product table: all pairs with deg(i) + deg(j) <= order
        prefix = [table_size(nvars, d) for d in range(order + 1)]
        ps, qs = [], []
        for i in range(self.size):
            room = order - self.degree[i]
            count = prefix[room]
            ps.append(np.full(count, i, dtype=np.int64))
            qs.append(np.arange(count, dtype=np.int64))
        self.P = np.concatenate(ps)
        self.Q = np.concatenate(qs)
        self.R = self.lookup(self.exponents[self.P] + self.exponents[self.Q])
        self.scatter = sp.csr_matrix(
            (np.ones(len(self.P)), (self.R, np.arange(len(self.P)))),
            shape=(self.size, len(self.P)),
        )

        # composition: every monomial is (its parent) * (one variable)
        self.parent = np.zeros(self.size, dtype=np.int64)
        self.first_var = np.zeros(self.size, dtype=np.int64)
        for idx in range(1, self.size):
            alpha = self.exponents[idx]
            v = int(np.nonzero(alpha)[0][0])
            self.first_var[idx] = v
            shifted = alpha.copy()
            shifted[v] -= 1
            self.parent[idx] = self.lookup(shifted[None, :])[0]

    def lookup(self, exps: np.ndarray) -> np.ndarray:
        codes = np.asarray(exps, dtype=np.int64) @ self.weights
        pos = np.searchsorted(self._sorted_codes, codes)
        return self._sorter[pos]

    @property
    def deriv_tables(self):
        # lazily built: for each variable, (source index, factor) into the
        # order-1-lower table
        if not hasattr(self, "_deriv"):
            lower = table_size(self.nvars, self.order - 1) if self.order > 0 else 0
            out = []
            for v in range(self.nvars):
                alpha = self.exponents[:lower].copy()
                alpha[:, v] += 1
                src = self.lookup(alpha)
                out.append((src, alpha[:, v].astype(float)))
            self._deriv = out
        return self._deriv


@lru_cache(maxsize=None)
def _tables(nvars: int, order: int) -> _Tables:
    return _Tables(nvars, order)


def multi_indices(nvars: int, order: int) -> np.ndarray:
    """Exponent table (rows are multi-indices) in storage order."""
    return _tables(nvars, order).exponents.copy()


def _univariate_coeffs(name: str, a0: np.ndarray, order: int) -> list:
    """Taylor coefficients of a scalar function about ``a0``."""
    a0 = np.asarray(a0, dtype=float)
    if name == "exp":
        e = np.exp(a0)
        return [e / math.factorial(k) for k in range(order + 1)]
    if name == "log":
        if np.any(a0 <= 0):
            raise DomainError("log of a non-positive value")
        out = [np.log(a0)]
        for k in range(1, order + 1):
            out.append((-1) ** (k + 1) / (k * a0**k))
        return out
    if name == "sin":
        return [np.sin(a0 + k * math.pi / 2) / math.factorial(k) for k in range(order + 1)]
    if name == "cos":
        return [np.cos(a0 + k * math.pi / 2) / math.factorial(k) for k in range(order + 1)]
    if name == "sqrt":
        if np.any(a0 < 0) or (order > 0 and np.any(a0 == 0)):
            raise DomainError("sqrt of a non-positive value")
        root = np.sqrt(a0)
        out = [root]
        binom = 1.0
        for k in range(1, order + 1):
            binom *= (0.5 - (k - 1)) / k
            out.append(root * binom / a0**k)
        return out
    if name == "reciprocal":
        if np.any(a0 == 0):
            raise DomainError("division by a jet with zero constant term")
        return [(-1) ** k / a0 ** (k + 1) for k in range(order + 1)]
    raise ValueError(f"unknown function {name!r}")


class Jet:
    """Truncated Taylor expansion of a scalar function.

    Args:
        coeffs: array of shape ``(table_size(nvars, order),) + batch``.
        nvars: number of independent variables.
        order: truncation degree.
    """

    __slots__ = ("coeffs", "nvars", "order")
    __array_priority__ = 100

    def __init__(self, coeffs, nvars: int, order: int):
        coeffs = np.asarray(coeffs, dtype=float)
        if order < 0:
            raise OrderError("jet order must be non-negative")
        if coeffs.shape[0] != table_size(nvars, order):
            raise ValueError(
                f"expected {table_size(nvars, order)} coefficients, got {coeffs.shape[0]}"
            )
        self.coeffs = coeffs
        self.nvars = nvars
        self.order = order

    # construction -------------------------------------------------------

    @classmethod
    def constant(cls, value, nvars: int, order: int) -> "Jet":
        value = np.asarray(value, dtype=float)
        c = np.zeros((table_size(nvars, order),) + value.shape)
        c[0] = value
        return cls(c, nvars, order)

    @classmethod
    def variable(cls, index: int, value, nvars: int, order: int) -> "Jet":
        """The jet of the coordinate function ``x_index`` at ``value``."""
        jet = cls.constant(value, nvars, order)
        if order >= 1:
            jet.coeffs[1 + index] = 1.0
        return jet

    @classmethod
    def seed(cls, point, order: int) -> list:
        """Coordinate jets of all variables at ``point`` (shape ``(nvars,) + batch``)."""
        point = np.asarray(point, dtype=float)
        n = point.shape[0]
        return [cls.variable(i, point[i], n, order) for i in range(n)]

    def _like(self, coeffs) -> "Jet":
        return Jet(coeffs, self.nvars, self.order)

    # inspection ----------------------------------------------------------

    @property
    def value(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def batch_shape(self) -> tuple:
        return self.coeffs.shape[1:]

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    def coefficient(self, alpha) -> np.ndarray:
        t = _tables(self.nvars, self.order)
        return self.coeffs[t.lookup(np.asarray(alpha)[None, :])[0]]

    def derivative(self, alpha) -> np.ndarray:
        """Partial derivative ``d^alpha f`` at the base point."""
        alpha = np.asarray(alpha)
        if alpha.sum() > self.order:
            raise OrderError("derivative order exceeds jet order")
        fact = np.prod([math.factorial(int(a)) for a in alpha])
        return fact * self.coefficient(alpha)

    def gradient(self) -> np.ndarray:
        if self.order < 1:
            raise OrderError("gradient needs a jet of order >= 1")
        return self.coeffs[1 : 1 + self.nvars].copy()

    def hessian(self) -> np.ndarray:
        """Matrix of second derivatives, shape ``(nvars, nvars) + batch``."""
        if self.order < 2:
            raise OrderError("Hessian needs a jet of order >= 2")
        m = self.nvars
        t = _tables(m, self.order)
        start = 1 + m
        block = self.coeffs[start : start + m * (m + 1) // 2]
        H = np.zeros((m, m) + self.batch_shape)
        for k, alpha in enumerate(t.exponents[start : start + len(block)]):
            nz = np.nonzero(alpha)[0]
            if len(nz) == 1:
                i = nz[0]
                H[i, i] = 2.0 * block[k]
            else:
                i, j = nz
                H[i, j] = block[k]
                H[j, i] = block[k]
        return H

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise OrderError("cannot raise the order of a jet")
        return Jet(self.coeffs[: table_size(self.nvars, order)], self.nvars, order)

    def deriv(self, var: int) -> "Jet":
        """Jet of the partial derivative along ``var`` (one order lower)."""
        if self.order < 1:
            raise OrderError("cannot differentiate an order-0 jet")
        src, factor = _tables(self.nvars, self.order).deriv_tables[var]
        shape = (len(factor),) + (1,) * len(self.batch_shape)
        return Jet(self.coeffs[src] * factor.reshape(shape), self.nvars, self.order - 1)

    def taken(self, index) -> "Jet":
        """Select batch entries (fancy indexing on the first batch axis)."""
        return Jet(self.coeffs[:, index], self.nvars, self.order)

    # arithmetic ------------------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.nvars != self.nvars:
                raise ValueError("jets over different variable sets")
            if other.order != self.order:
                raise OrderError(f"order mismatch: {self.order} vs {other.order}")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is not None:
            return self._like(self.coeffs + o.coeffs)
        other = np.asarray(other, dtype=float)
        batch = np.broadcast_shapes(self.batch_shape, other.shape)
        c = np.array(np.broadcast_to(self.coeffs, (self.size,) + batch))
        c[0] += other
        return self._like(c)

    __radd__ = __add__

    def __neg__(self):
        return self._like(-self.coeffs)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            return self._like(self.coeffs * np.asarray(other, dtype=float))
        t = _tables(self.nvars, self.order)
        prod = self.coeffs[t.P] * o.coeffs[t.Q]
        batch = prod.shape[1:]
        out = t.scatter @ prod.reshape(len(t.P), -1)
        return self._like(np.asarray(out).reshape((t.size,) + batch))

    __rmul__ = __mul__

    def _nilpotent(self) -> "Jet":
        c = self.coeffs.copy()
        c[0] = 0.0
        return self._like(c)

    def _series(self, coeffs: list) -> "Jet":
        """Evaluate ``sum_k coeffs[k] * h**k`` with ``h`` the nilpotent part."""
        h = self._nilpotent()
        batch = np.broadcast_shapes(self.batch_shape, np.shape(coeffs[0]))
        result = Jet.constant(np.broadcast_to(coeffs[-1], batch), self.nvars, self.order)
        for ck in reversed(coeffs[:-1]):
            result = result * h + ck
        return result

    def apply(self, name: str) -> "Jet":
        return self._series(_univariate_coeffs(name, self.value, self.order))

    def exp(self):
        return self.apply("exp")

    def log(self):
        return self.apply("log")

    def sin(self):
        return self.apply("sin")

    def cos(self):
        return self.apply("cos")

    def sqrt(self):
        return self.apply("sqrt")

    def reciprocal(self):
        return self.apply("reciprocal")

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            if np.any(other == 0):
                raise DomainError("division by zero")
            return self._like(self.coeffs / other)
        return self * o.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, n):
        if not isinstance(n, (int, np.integer)):
            raise TypeError("jets support integer powers only")
        n = int(n)
        if n < 0:
            return (self ** (-n)).reciprocal()
        result = Jet.constant(np.ones(self.batch_shape), self.nvars, self.order)
        base = self
        while n:
            if n & 1:
                result = result * base
            n >>= 1
            if n:
                base = base * base
        return result

    def __repr__(self):
        return f"Jet(nvars={self.nvars}, order={self.order}, batch={self.batch_shape})"


def compose(outer: Jet, inner: list) -> Jet:
    """Substitute jets into a jet.

    ``outer`` is the expansion of ``f`` about ``x0`` in ``outer.nvars``
    variables; ``inner[j]`` are jets (in some other variables) of the maps
    ``x_j(y)``.  Only the non-constant part of ``inner`` is used, i.e. the
    caller asserts ``x_j(y0) == x0_j``.  The result is the jet of
    ``f(x(y))`` about ``y0``.
    """
    if len(inner) != outer.nvars:
        raise ValueError("need one inner jet per outer variable")
    order = min(outer.order, inner[0].order)
    inner = [j.truncate(order) for j in inner]
    outer = outer.truncate(order)
    t = _tables(outer.nvars, order)
    h = [j._nilpotent() for j in inner]
    nv = inner[0].nvars
    batch = np.broadcast_shapes(outer.batch_shape, *(j.batch_shape for j in inner))
    monos = [Jet.constant(np.ones(batch), nv, order)]
    for idx in range(1, t.size):
        monos.append(monos[t.parent[idx]] * h[t.first_var[idx]])
    stack = np.stack([np.broadcast_to(m.coeffs, (m.size,) + batch) for m in monos])
    coeffs = np.einsum("i...,ij...->j...", np.broadcast_to(outer.coeffs, (t.size,) + batch), stack)
    return Jet(coeffs, nv, order)


def _batched_inverse(matrix: np.ndarray) -> np.ndarray:
    """Invert ``(m, m) + batch`` matrices, returning the same layout."""
    m = matrix.shape[0]
    batch = matrix.shape[2:]
    mats = np.moveaxis(matrix.reshape(m, m, -1), -1, 0)
    inv = np.linalg.inv(mats)
    return np.moveaxis(inv, 0, -1).reshape((m, m) + batch)


def _matvec(matrix: np.ndarray, jets: list) -> list:
    m = len(jets)
    return [sum((jets[j] * matrix[i, j] for j in range(1, m)), jets[0] * matrix[i, 0]) for i in range(matrix.shape[0])]


def invert_map(phi: list) -> list:
    """Jet of the inverse of a square map given by its component jets.

    ``phi[i]`` is the jet of ``x_i(y)`` about ``y0``; the result lists the
    jets of ``y_j(x)`` about ``x0 = phi(y0)``, in the same variable count and
    order.  The base point ``y0`` is not stored in a jet, so the constant
    terms of the result are the offsets ``y - y0`` (all zero); callers add
    ``y0`` themselves.
    """
    m = len(phi)
    if any(p.nvars != m for p in phi):
        raise ValueError("invert_map needs a square system")
    order = phi[0].order
    if order < 1:
        raise OrderError("inversion needs order >= 1")
    L = np.stack([p.gradient() for p in phi])
    Linv = _batched_inverse(L)
    batch = np.broadcast_shapes(*(p.batch_shape for p in phi))
    zeros = np.zeros(batch)
    dx = [Jet.variable(i, zeros, m, order) for i in range(m)]
    # nonlinear remainder of phi
    lower = table_size(m, 1)
    rem = []
    for p in phi:
        c = np.array(np.broadcast_to(p.coeffs, (p.size,) + batch))
        c[:lower] = 0.0
        rem.append(Jet(c, m, order))
    eta = _matvec(Linv, dx)
    for _ in range(order - 1):
        nonlin = [compose(r, eta) for r in rem]
        eta = _matvec(Linv, [dx[i] - nonlin[i] for i in range(m)])
    return eta


def solve_linear(A: list, b: list) -> list:
    """Solve ``A x = b`` where the entries are jets.

    Uses the inverse of the constant-term matrix and iterative refinement;
    every sweep fixes one more Taylor degree.
    """
    m = len(b)
    order = b[0].order
    A0 = np.stack([np.stack([np.broadcast_to(A[i][j].value, b[0].batch_shape) for j in range(m)]) for i in range(m)])
    A0inv = _batched_inverse(A0)
    x = _matvec(A0inv, b)
    for _ in range(order):
        resid = [b[i] - sum((A[i][j] * x[j] for j in range(1, m)), A[i][0] * x[0]) for i in range(m)]
        dx = _matvec(A0inv, resid)
        x = [x[i] + dx[i] for i in range(m)]
    return x
