"""Taylor-series integration of analytic vector fields, real and complex time.

The orbit ``t -> g_t(p)`` of ``x' = F(x)`` is expanded as ``sum_k c_k t^k`` by
the usual Taylor-mode recurrence ``(k+1) c_{k+1} = [F(c(t))]_k``, where every
node of the field's expression tree keeps its own coefficient sequence and
coefficient ``k`` of a node costs ``O(k)`` operations.  Reading the real
coefficient vectors ``c_k`` as vectors of C^{n+1} and summing the series at a
complex time ``w`` gives the complexified flow ``g_w(p)``.

The coefficients themselves live in an "algebra": plain numpy arrays (one
orbit or a batch of orbits), or :class:`~mafoliation.jet.Jet` objects when the
orbit must be differentiated with respect to its seed.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, TrustRegionError
from .expr import Add, Const, Div, Func, Mul, Neg, Pow, Sub, Var, VectorExpression
from .forms import J_matrix, complexify, realify
from .jet import Jet

__all__ = [
    "TaylorOrbit", "taylor_orbit", "evaluate_orbit", "orbit_derivative",
    "continue_flow", "radius_estimate", "is_holomorphic_field", "orbit_coefficients",
    "write_orbit_csv", "DEFAULT_ORDER", "DEFAULT_TRUST", "MAX_SUBSTEPS",
]

DEFAULT_ORDER = 20
DEFAULT_TRUST = 0.5
MAX_SUBSTEPS = 64
RADIUS_FLOOR = 1e-6


# ------------------------------------------------------------------ algebras

class _ArrayAlgebra:
    def __init__(self, batch):
        self.batch = tuple(batch)

    def const(self, c):
        return np.full(self.batch, float(c))

    def conv(self, A, B):
        # sum_j A[j] * B[j]
        return np.sum(np.stack(A) * np.stack(B), axis=0)

    def mul(self, a, b):
        return a * b

    def inv(self, a):
        if np.any(a == 0):
            raise DomainError("division by zero along the orbit")
        return 1.0 / a

    def func(self, name, a):
        if name == "log" and np.any(a <= 0):
            raise DomainError("log of a non-positive value along the orbit")
        if name == "sqrt" and np.any(a <= 0):
            raise DomainError("sqrt of a non-positive value along the orbit")
        return getattr(np, name)(a)


class _JetAlgebra:
    def __init__(self, nvars, order, batch):
        self.nvars = nvars
        self.order = order
        self.batch = tuple(batch)

    def const(self, c):
        return Jet.constant(np.full(self.batch, float(c)), self.nvars, self.order)

    def conv(self, A, B):
        from .jet import _tables

        t = _tables(self.nvars, self.order)
        a = np.stack([x.coeffs for x in A])
        b = np.stack([x.coeffs for x in B])
        prod = np.sum(a[:, t.P] * b[:, t.Q], axis=0)
        batch = prod.shape[1:]
        out = t.scatter @ prod.reshape(len(t.P), -1)
        return Jet(np.asarray(out).reshape((t.size,) + batch), self.nvars, self.order)

    def mul(self, a, b):
        return a * b

    def inv(self, a):
        return a.reciprocal()

    def func(self, name, a):
        return a.apply(name)


# ------------------------------------------------------------------ tape

class _Tape:
    """Flattened expression DAG of a vector field with per-node recurrences."""

    def __init__(self, field: VectorExpression):
        self.ops = []
        self._ids = {}
        self.outputs = [self._add(c) for c in field.components]
        self.nvars = len(field.components)

    def _emit(self, op):
        self.ops.append(op)
        return len(self.ops) - 1

    def _add(self, node):
        key = id(node)
        if key in self._ids:
            return self._ids[key][1]
        if isinstance(node, Const):
            idx = self._emit(("const", node.value))
        elif isinstance(node, Var):
            idx = self._emit(("var", node.index))
        elif isinstance(node, Neg):
            idx = self._emit(("neg", self._add(node.arg)))
        elif isinstance(node, (Add, Sub)):
            kind = "add" if isinstance(node, Add) else "sub"
            idx = self._emit((kind, self._add(node.left), self._add(node.right)))
        elif isinstance(node, Mul):
            a, b = self._add(node.left), self._add(node.right)
            idx = self._mul(a, b)
        elif isinstance(node, Div):
            a, b = self._add(node.left), self._add(node.right)
            if self.ops[b][0] == "const":
                idx = self._emit(("scale", 1.0 / self.ops[b][1], a))
            else:
                idx = self._emit(("div", a, b))
        elif isinstance(node, Pow):
            base = self._add(node.base)
            idx = self._power(base, node.exponent)
        elif isinstance(node, Func):
            a = self._add(node.arg)
            if node.name in ("sin", "cos"):
                idx = self._emit((node.name, a, None))
            else:
                idx = self._emit((node.name, a))
        else:
            raise TypeError(f"unsupported node {node!r}")
        self._ids[key] = (node, idx)
        return idx

    def _mul(self, a, b):
        if self.ops[a][0] == "const":
            return self._emit(("scale", self.ops[a][1], b))
        if self.ops[b][0] == "const":
            return self._emit(("scale", self.ops[b][1], a))
        return self._emit(("mul", a, b))

    def _power(self, base, n):
        if n == 0:
            return self._emit(("const", 1.0))
        if n < 0:
            one = self._emit(("const", 1.0))
            return self._emit(("div", one, self._power(base, -n)))
        result = None
        sq = base
        while n:
            if n & 1:
                result = sq if result is None else self._mul(result, sq)
            n >>= 1
            if n:
                sq = self._mul(sq, sq)
        return result

    def run(self, seed: list, order: int, alg) -> list:
        """Coefficient vectors ``c_0 .. c_order`` of the orbit from ``seed``."""
        state = [[s] for s in seed]
        coef = [[] for _ in self.ops]
        aux = [None] * len(self.ops)
        for k in range(order):
            for i, op in enumerate(self.ops):
                coef[i].append(self._step(i, op, k, coef, aux, state, alg))
            for j, out in enumerate(self.outputs):
                state[j].append(coef[out][k] * (1.0 / (k + 1)))
        return state

    @staticmethod
    def _step(i, op, k, coef, aux, state, alg):
        kind = op[0]
        if kind == "const":
            return alg.const(op[1] if k == 0 else 0.0)
        if kind == "var":
            return state[op[1]][k]
        if kind == "neg":
            return -coef[op[1]][k]
        if kind == "add":
            return coef[op[1]][k] + coef[op[2]][k]
        if kind == "sub":
            return coef[op[1]][k] - coef[op[2]][k]
        if kind == "scale":
            return coef[op[2]][k] * op[1]
        if kind == "mul":
            a, b = coef[op[1]], coef[op[2]]
            return alg.conv(a[: k + 1], b[k::-1])
        if kind == "div":
            a, b, q = coef[op[1]], coef[op[2]], coef[i]
            if k == 0:
                aux[i] = alg.inv(b[0])
                return alg.mul(a[0], aux[i])
            return alg.mul(a[k] - alg.conv(b[1 : k + 1], q[k - 1 :: -1]), aux[i])
        a = coef[op[1]]
        if kind == "exp":
            e = coef[i]
            if k == 0:
                return alg.func("exp", a[0])
            ja = [a[j] * float(j) for j in range(1, k + 1)]
            return alg.conv(ja, e[k - 1 :: -1]) * (1.0 / k)
        if kind == "log":
            lg = coef[i]
            if k == 0:
                aux[i] = alg.inv(a[0])
                return alg.func("log", a[0])
            acc = a[k]
            if k > 1:
                jl = [lg[j] * float(j) for j in range(1, k)]
                acc = acc - alg.conv(jl, a[k - 1 : 0 : -1]) * (1.0 / k)
            return alg.mul(acc, aux[i])
        if kind == "sqrt":
            r = coef[i]
            if k == 0:
                root = alg.func("sqrt", a[0])
                aux[i] = alg.inv(root * 2.0)
                return root
            acc = a[k]
            if k > 1:
                acc = acc - alg.conv(r[1:k], r[k - 1 : 0 : -1])
            return alg.mul(acc, aux[i])
        if kind in ("sin", "cos"):
            # keep the companion series in aux[i]
            own = coef[i]
            if k == 0:
                s0, c0 = alg.func("sin", a[0]), alg.func("cos", a[0])
                aux[i] = [c0] if kind == "sin" else [s0]
                return s0 if kind == "sin" else c0
            comp = aux[i]
            ja = [a[j] * float(j) for j in range(1, k + 1)]
            sign = 1.0 if kind == "sin" else -1.0
            new_own = alg.conv(ja, comp[k - 1 :: -1]) * (sign / k)
            new_comp = alg.conv(ja, own[k - 1 :: -1]) * (-sign / k)
            comp.append(new_comp)
            return new_own
        raise ValueError(f"unknown op {kind}")


_TAPES = {}


def _tape(field: VectorExpression) -> _Tape:
    key = id(field)
    hit = _TAPES.get(key)
    if hit is None or hit[0] is not field:
        hit = (field, _Tape(field))
        _TAPES[key] = hit
    return hit[1]


def orbit_coefficients(field: VectorExpression, seed, order: int) -> list:
    """Orbit coefficients for array seeds ``(m,) + batch`` or a list of jets.

    Returns a list of length ``order + 1``; each entry is a list of the
    ``m`` component coefficients (arrays or jets).
    """
    tape = _tape(field)
    if isinstance(seed, (list, tuple)) and isinstance(seed[0], Jet):
        j = seed[0]
        batch = np.broadcast_shapes(*(s.batch_shape for s in seed))
        alg = _JetAlgebra(j.nvars, j.order, batch)
        seed = [s + np.zeros(batch) for s in seed]
    else:
        seed = np.asarray(seed, dtype=float)
        alg = _ArrayAlgebra(seed.shape[1:])
        seed = list(seed)
    state = tape.run(seed, order, alg)
    return [[state[j][k] for j in range(len(state))] for k in range(order + 1)]


# ------------------------------------------------------------------ orbits

@dataclass(frozen=True)
class TaylorOrbit:
    """Taylor expansion of one flow line.

    ``coeffs[k]`` is the real vector ``c_k``; ``radius`` is ``math.inf`` for
    orbits whose series behaves like an entire function.
    """

    seed: np.ndarray
    order: int
    coeffs: np.ndarray
    radius: float

    @property
    def unbounded(self) -> bool:
        return math.isinf(self.radius)


def radius_estimate(coeffs: np.ndarray) -> float:
    """Convergence radius from coefficient-norm ratios.

    Entire-looking series (ratios growing at least like ``sqrt(k)``, or a
    tail that is exactly zero) return ``inf``.
    """
    norms = np.linalg.norm(np.asarray(coeffs).reshape(len(coeffs), -1), axis=1)
    scale = max(norms.max(), 1e-300)
    tail = norms[1:]
    if np.all(tail <= 1e-300 * scale):
        return math.inf
    nz = np.nonzero(norms > 1e-280 * scale)[0]
    nz = nz[nz >= 1]
    if len(nz) < 2 or nz[-1] < len(norms) - 3:
        return math.inf
    ks, ratios = [], []
    for a, b in zip(nz[:-1], nz[1:]):
        ratios.append((norms[a] / norms[b]) ** (1.0 / (b - a)))
        ks.append(b)
    ks = np.array(ks, dtype=float)
    ratios = np.array(ratios)
    half = max(len(ratios) // 2, 1)
    if len(ratios) >= 4:
        slope = np.polyfit(np.log(ks[-half:]), np.log(ratios[-half:]), 1)[0]
        if slope > 0.5:
            return math.inf
    return max(float(ratios[-3:].min()), RADIUS_FLOOR)


def taylor_orbit(xi: VectorExpression, p, order: int = DEFAULT_ORDER) -> TaylorOrbit:
    p = np.asarray(p, dtype=float)
    coeffs = np.array([np.stack(c) for c in orbit_coefficients(xi, p, order)])
    return TaylorOrbit(p, order, coeffs, radius_estimate(coeffs))


def _check_trust(o: TaylorOrbit, w, trust: float):
    if abs(w) > trust * o.radius:
        raise TrustRegionError(
            f"|w| = {abs(w):.3g} exceeds {trust} x radius {o.radius:.3g}",
            reachable_fraction=min(1.0, trust * o.radius / abs(w)),
        )


def evaluate_orbit(o: TaylorOrbit, w, trust: float = DEFAULT_TRUST) -> np.ndarray:
    """Ambient point ``g_w(p)`` (real coordinates) for complex time ``w``."""
    w = complex(w)
    _check_trust(o, w, trust)
    a = np.array([complexify(c) for c in o.coeffs])
    powers = w ** np.arange(o.order + 1)
    return realify(powers @ a)


def orbit_derivative(o: TaylorOrbit, w, trust: float = DEFAULT_TRUST) -> np.ndarray:
    """Complex time derivative ``d/dw g_w(p)`` as a real vector."""
    w = complex(w)
    _check_trust(o, w, trust)
    a = np.array([complexify(c) for c in o.coeffs])
    k = np.arange(1, o.order + 1)
    return realify((k * w ** (k - 1)) @ a[1:])


def is_holomorphic_field(xi: VectorExpression, p, tol: float = 1e-10) -> bool:
    """Cauchy-Riemann test ``J DF = DF J`` at ``p`` and nearby points."""
    p = np.asarray(p, dtype=float)
    m = len(p)
    J = J_matrix(m)
    rng = np.random.default_rng(0)
    for q in [p] + [p + 0.05 * rng.standard_normal(m) for _ in range(3)]:
        try:
            jets = xi.jets(q, 1)
        except DomainError:
            continue
        DF = np.stack([j.gradient() for j in jets])
        scale = max(1.0, np.abs(DF).max())
        if np.abs(J @ DF - DF @ J).max() > tol * scale:
            return False
    return True


def continue_flow(
    xi: VectorExpression,
    p,
    w,
    substeps: int | None = None,
    mode: str = "auto",
    order: int = DEFAULT_ORDER,
    trust: float = DEFAULT_TRUST,
) -> np.ndarray:
    """Analytic continuation of ``g_w(p)`` along a path from 0 to ``w``.

    ``mode="holomorphic"`` re-expands at complex intermediate points (valid
    when the field is holomorphic); ``mode="time-series"`` re-expands only at
    real times and reaches ``Im w`` with a single vertical evaluation.
    """
    p = np.asarray(p, dtype=float)
    w = complex(w)
    if mode == "auto":
        mode = "holomorphic" if is_holomorphic_field(xi, p) else "time-series"
    if mode not in ("holomorphic", "time-series"):
        raise ValueError(f"unknown continuation mode {mode!r}")
    if mode == "holomorphic":
        return _march(xi, p, w, substeps, order, trust, total=abs(w))
    q = _march(xi, p, complex(w.real), substeps, order, trust, total=abs(w.real) + abs(w.imag))
    o = taylor_orbit(xi, q, order)
    if abs(w.imag) > trust * o.radius:
        reach = (abs(w.real) + trust * o.radius) / (abs(w.real) + abs(w.imag))
        raise TrustRegionError(
            f"vertical segment {abs(w.imag):.3g} exceeds the trust region {trust * o.radius:.3g}",
            reachable_fraction=reach,
        )
    return evaluate_orbit(o, 1j * w.imag, trust)


def _march(xi, p, w, substeps, order, trust, total):
    if w == 0:
        return p.copy()
    q = p.copy()
    done = 0.0
    if substeps is not None:
        if not 1 <= substeps <= MAX_SUBSTEPS:
            raise ValueError(f"substeps must lie in [1, {MAX_SUBSTEPS}]")
        step = w / substeps
        for _ in range(substeps):
            o = taylor_orbit(xi, q, order)
            if abs(step) > trust * o.radius:
                raise TrustRegionError(
                    "substep leaves the trust region",
                    reachable_fraction=(done + trust * o.radius) / max(total, 1e-300),
                )
            q = evaluate_orbit(o, step, trust)
            done += abs(step)
        return q
    remaining = w
    for _ in range(MAX_SUBSTEPS):
        o = taylor_orbit(xi, q, order)
        h = min(abs(remaining), trust * o.radius)
        step = remaining if h >= abs(remaining) else remaining / abs(remaining) * h
        q = evaluate_orbit(o, step, trust)
        done += abs(step)
        remaining -= step
        if abs(remaining) <= 1e-15 * max(abs(w), 1.0):
            return q
    raise TrustRegionError(
        f"path not completed within {MAX_SUBSTEPS} substeps",
        reachable_fraction=done / max(total, 1e-300),
    )


def write_orbit_csv(o: TaylorOrbit, path) -> None:
    """Diagnostic dump: one row per coefficient with its Euclidean norm."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "norm"])
        for k, c in enumerate(o.coeffs):
            writer.writerow([k, repr(float(np.linalg.norm(c)))])
