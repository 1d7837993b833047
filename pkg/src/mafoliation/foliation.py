"""Calibrated foliation near V built from the complexified flow of a seed field.

For ``p`` on ``V`` and real ``s`` the point ``g_{is}(p)`` sweeps a collar
around ``V``.  The function ``u`` is defined by ``u(g_{is}(p)) = -s`` and the
field ``xi`` by pushing the seed forward along the vertical flow:
``xi(g_{is}(p)) = d/dt g_{is}(g_t(p))`` at ``t = 0``.

Everything goes through one map.  Around a base point ``P`` on ``V`` the
surface is written as a graph over its tangent plane,
``p(a) = P + T a + lambda(a) nu``, and

    Phi(a, sigma) = g_{i (s + sigma)}(p(a)),

a local diffeomorphism from ``R^{2n+2}`` to the ambient space.  Newton on
``Phi`` locates the preimage of a query point; jets of ``Phi`` inverted with
:func:`~mafoliation.jet.invert_map` give exact Taylor jets of ``u`` and of
``xi`` at the query point.  All routines are vectorised over query points.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .cr import Hypersurface, line_project, project_to_V, sample_points
from .errors import (
    CollarError, ConvergenceError, TangencyError, TransversalityError, TrustRegionError,
)
from .expr import VectorExpression, evaluate
from .flow import (
    DEFAULT_ORDER, DEFAULT_TRUST, continue_flow, orbit_coefficients, radius_estimate,
)
from .forms import apply_J, lie_bracket_jets, realify
from .jet import Jet, _batched_inverse, compose, invert_map

__all__ = [
    "FlowConfig", "FoliationModel", "LocalData", "LeafChart", "build", "u_eval",
    "leaf_chart", "calibration_residuals", "uniqueness_check", "fd_check",
    "collar_samples", "DEFAULT_S_MAX",
]

DEFAULT_S_MAX = 0.15
TRANSVERSALITY_FLOOR = 1e-6


@dataclass(frozen=True)
class FlowConfig:
    order: int = DEFAULT_ORDER
    trust: float = DEFAULT_TRUST
    mode: str = "auto"
    substeps: int | None = None


class LocalData(NamedTuple):
    """Preimage data and jets of ``u`` and ``xi`` at a batch of query points."""

    q: np.ndarray  # (m, N)
    p: np.ndarray  # (m, N) base points on V
    s: np.ndarray  # (N,)
    u: Jet  # jet of u at q
    xi: list  # jets of the components of xi at q (one order lower)
    newton_residual: np.ndarray

    @property
    def u_value(self) -> np.ndarray:
        return self.u.value


class _Chart(NamedTuple):
    P: np.ndarray  # (m, N)
    nu: np.ndarray  # (m, N) unit normal
    T: np.ndarray  # (m, m-1, N) orthonormal tangent basis
    g0: np.ndarray  # (N,) normal derivative of rho


def _householder_tangent(nu: np.ndarray) -> np.ndarray:
    """Orthonormal basis of ``nu^perp`` from the reflection sending ``e_k`` to ``nu``.

    ``k`` is the coordinate where ``|nu|`` is largest, i.e. the dependent
    variable of the graph parametrisation.
    """
    m, N = nu.shape
    k = np.argmax(np.abs(nu), axis=0)
    cols = np.arange(N)
    sign = np.where(nu[k, cols] >= 0, 1.0, -1.0)
    w = nu.copy()
    w[k, cols] -= sign
    wn = np.linalg.norm(w, axis=0)
    w = np.where(wn > 1e-300, w / np.where(wn > 1e-300, wn, 1.0), 0.0)
    H = np.eye(m)[:, :, None] - 2.0 * w[:, None, :] * w[None, :, :]
    keep = np.ones((m, N), dtype=bool)
    keep[k, cols] = False
    # drop column k of each reflection
    T = np.empty((m, m - 1, N))
    for j in range(N):
        T[:, :, j] = H[:, keep[:, j], j]
    return T


class FoliationModel:
    """The constructed pair ``(xi, u)`` on a collar around ``V``.

    Instances are immutable after :func:`build`; evaluation methods are pure.
    """

    def __init__(self, h: Hypersurface, xi0: VectorExpression, config: FlowConfig,
                 s_max: float, label: str = "", diagnostics: dict | None = None):
        self.h = h
        self.xi0 = xi0
        self.config = config
        self.s_max = float(s_max)
        self.label = label or h.label
        self.diagnostics = dict(diagnostics or {})

    @property
    def m(self) -> int:
        return self.h.nreal

    def __repr__(self):
        return f"FoliationModel({self.label!r}, order={self.config.order}, s_max={self.s_max})"

    # -------------------------------------------------------------- charts

    def _chart(self, P: np.ndarray) -> _Chart:
        g = self.h.rho.jet(P, 1).gradient()
        gn = np.linalg.norm(g, axis=0)
        nu = g / gn
        return _Chart(P, nu, _householder_tangent(nu), gn)

    def _phi(self, chart: _Chart, s: np.ndarray, order: int):
        """Jets of ``Phi`` in the variables ``(a_1..a_{m-1}, sigma)``.

        Returns ``(Phi, orbit)`` where ``orbit[k]`` are the jets of the Taylor
        coefficients of the flow line through ``p(a)``.
        """
        m = self.m
        N = chart.P.shape[1]
        zeros = np.zeros(N)
        var = [Jet.variable(j, zeros, m, order) for j in range(m)]
        base = []
        for i in range(m):
            acc = Jet.constant(chart.P[i], m, order)
            for j in range(m - 1):
                acc = acc + var[j] * chart.T[i, j]
            base.append(acc)
        lam = Jet.constant(zeros, m, order)
        for _ in range(order + 2):
            X = [base[i] + lam * chart.nu[i] for i in range(m)]
            r = evaluate(self.h.rho.root, X)
            lam = lam - r / chart.g0
        X = [base[i] + lam * chart.nu[i] for i in range(m)]
        orbit = orbit_coefficients(self.xi0, X, self.config.order)
        S = var[m - 1] + s
        # Horner for sum_k (i S)^k a_k with a_k the complexified coefficients
        K = len(orbit) - 1
        re = [orbit[K][2 * a] for a in range(m // 2)]
        im = [orbit[K][2 * a + 1] for a in range(m // 2)]
        for k in range(K - 1, -1, -1):
            re, im = (
                [-im[a] * S + orbit[k][2 * a] for a in range(m // 2)],
                [re[a] * S + orbit[k][2 * a + 1] for a in range(m // 2)],
            )
        phi = []
        for a in range(m // 2):
            phi.extend([re[a], im[a]])
        return phi, orbit

    def _radius(self, orbit: list) -> np.ndarray:
        coeffs = np.array([[c.value for c in ck] for ck in orbit])  # (K+1, m, N)
        return np.array([radius_estimate(coeffs[:, :, j]) for j in range(coeffs.shape[2])])

    # -------------------------------------------------------------- inversion

    def preimage(self, Q, tol: float = 1e-14, maxiter: int = 40, check_collar: bool = True):
        """Newton solve of ``g_{is}(p) = q`` for ``(p, s)``; ``Q`` is ``(m, N)``."""
        Q = np.asarray(Q, dtype=float)
        m = self.m
        P = project_to_V(self.h, Q) if self.h.xi0 is self.xi0 else line_project(
            self.h, Q, apply_J(self.xi0(Q)))
        J0 = apply_J(self.xi0(P))
        s = np.einsum("i...,i...->...", Q - P, J0) / np.einsum("i...,i...->...", J0, J0)
        scale = 1.0 + np.linalg.norm(Q, axis=0)
        res = np.full(Q.shape[1], np.inf)
        for _ in range(maxiter):
            chart = self._chart(P)
            phi, _ = self._phi(chart, s, 1)
            F = np.stack([c.value for c in phi]) - Q
            res = np.linalg.norm(F, axis=0) / scale
            if np.all(res <= tol):
                break
            Jac = np.stack([c.gradient() for c in phi])  # (m, m, N)
            delta = -np.einsum("ij...,j...->i...", _batched_inverse(Jac), F)
            step = np.linalg.norm(delta, axis=0)
            damp = np.minimum(1.0, 0.25 / np.maximum(step, 1e-300))
            delta = delta * damp
            done = res <= tol
            delta[:, done] = 0.0
            moved = P + np.einsum("imn,mn->in", chart.T, delta[: m - 1])
            P = np.where(done, P, line_project(self.h, moved, chart.nu, tol=1e-15))
            s = s + delta[m - 1]
        if np.any(res > 1e-11):
            raise ConvergenceError(f"flow inversion did not converge (residual {res.max():.2e})")
        if check_collar and np.any(np.abs(s) > self.s_max * (1 + 1e-9) + 1e-12):
            raise CollarError(
                f"query point outside the collar: |s| = {np.abs(s).max():.4f} > s_max = {self.s_max}"
            )
        return P, s, res

    def local(self, Q, order: int = 2, check_collar: bool = True) -> LocalData:
        """Jets of ``u`` (order ``order``) and ``xi`` (order ``order - 1``) at ``Q``."""
        Q = np.asarray(Q, dtype=float)
        single = Q.ndim == 1
        if single:
            Q = Q[:, None]
        m = self.m
        P, s, res = self.preimage(Q, check_collar=check_collar)
        chart = self._chart(P)
        phi, orbit = self._phi(chart, s, order)
        R = self._radius(orbit)
        bad = np.abs(s) > self.config.trust * R
        if np.any(bad):
            j = int(np.argmax(np.abs(s) / (self.config.trust * R)))
            raise TrustRegionError(
                f"vertical flow segment |s| = {abs(s[j]):.3g} exceeds the trust region",
                reachable_fraction=float(self.config.trust * R[j] / abs(s[j])),
            )
        psi = invert_map(phi)
        base = np.stack([c.value for c in phi])
        delta = Q - base
        u = -psi[m - 1] - s
        # first-order correction for the tiny offset between Phi(0) and Q
        u = u + (-np.einsum("i...,i...->...", psi[m - 1].gradient(), delta))
        if order >= 1:
            alpha = []
            for j in range(m - 1):
                acc = orbit[1][0] * chart.T[0, j]
                for i in range(1, m):
                    acc = acc + orbit[1][i] * chart.T[i, j]
                alpha.append(acc.truncate(order - 1))
            xi_a = []
            for i in range(m):
                acc = phi[i].deriv(0) * alpha[0]
                for j in range(1, m - 1):
                    acc = acc + phi[i].deriv(j) * alpha[j]
                xi_a.append(acc)
            inner = [p_.truncate(order - 1) for p_ in psi]
            xi = [compose(c, inner) for c in xi_a]
        else:
            xi = []
        data = LocalData(Q, P, s, u, xi, res)
        if single:
            data = LocalData(Q[:, 0], P[:, 0], s[0], u.taken(0), [c.taken(0) for c in xi], res[0])
        return data

    def u(self, Q, check_collar: bool = True) -> np.ndarray:
        """Values of ``u`` at ``Q`` (``(m,)`` or ``(m, N)``)."""
        Q = np.asarray(Q, dtype=float)
        single = Q.ndim == 1
        if single:
            Q = Q[:, None]
        P, s, _ = self.preimage(Q, check_collar=check_collar)
        return -s[0] if single else -s

    def xi(self, Q) -> np.ndarray:
        data = self.local(Q, order=1)
        return np.stack([c.value for c in data.xi])

    def flow_point(self, P, s) -> np.ndarray:
        """``g_{is}(p)`` for base points ``P`` (``(m, N)``) and times ``s`` (``(N,)``)."""
        P = np.asarray(P, dtype=float)
        s = np.asarray(s, dtype=float) + np.zeros(P.shape[1:])
        coeffs = np.array([np.stack(c) for c in orbit_coefficients(self.xi0, P, self.config.order)])
        a = coeffs[:, 0::2] + 1j * coeffs[:, 1::2]  # (K+1, dim, ...)
        powers = (1j * s)[None] ** np.arange(coeffs.shape[0]).reshape((-1,) + (1,) * s.ndim)
        z = np.einsum("k...,ka...->a...", powers, a)
        return realify(z)


# ------------------------------------------------------------------ build

def build(h: Hypersurface, xi0: VectorExpression | None = None, s_max: float = DEFAULT_S_MAX,
          config: FlowConfig | None = None, samples: int = 40, seed: int = 0,
          label: str = "") -> FoliationModel:
    """Construct the calibrated foliation of a seed field on ``V``.

    Checks tangency of the seed, transversality of ``J xi0``, the trust
    region over the collar (shrinking ``s_max`` if needed) and the Jacobian
    of the flow map at sampled points.
    """
    config = config or FlowConfig()
    xi0 = xi0 if xi0 is not None else h.xi0
    if xi0 is None:
        raise ValueError("no seed field given and the surface has none")
    pts = sample_points(h, samples, seed).T  # (m, N)
    g = h.rho.jet(pts, 1).gradient()
    gn = np.linalg.norm(g, axis=0)
    X = xi0(pts)
    xn = np.linalg.norm(X, axis=0)
    tang = np.abs(np.einsum("ij,ij->j", g, X)) / (gn * np.maximum(xn, 1e-300))
    if tang.max() > 1e-8:
        raise TangencyError(f"seed field is not tangent to V (relative d rho(xi0) = {tang.max():.2e})")
    transv = np.abs(np.einsum("ij,ij->j", g, apply_J(X))) / (gn * np.maximum(xn, 1e-300))
    if transv.min() < TRANSVERSALITY_FLOOR:
        raise TransversalityError(
            f"J xi0 is tangent to V at a sample point (relative d rho(J xi0) = {transv.min():.2e})"
        )
    model = FoliationModel(h, xi0, config, s_max, label)
    coeffs = np.array([np.stack(c) for c in orbit_coefficients(xi0, pts, config.order)])
    radii = np.array([radius_estimate(coeffs[:, :, j]) for j in range(pts.shape[1])])
    reach = config.trust * radii.min()
    shrunk = False
    if s_max > reach:
        s_max = float(0.99 * reach)
        shrunk = True
    model = FoliationModel(h, xi0, config, s_max, label)
    # diffeomorphism check at the collar edges and on V
    jac_min = np.inf
    for s in (-s_max, 0.0, s_max):
        chart = model._chart(pts)
        phi, _ = model._phi(chart, np.full(pts.shape[1], s), 1)
        Jac = np.stack([c.gradient() for c in phi])
        dets = np.linalg.det(np.moveaxis(Jac, -1, 0))
        jac_min = min(jac_min, float(np.abs(dets).min()))
    if jac_min < 1e-10:
        raise TransversalityError(f"flow map Jacobian is singular in the collar (|det| = {jac_min:.2e})")
    diag = {
        "transversality_min": float(transv.min()),
        "jacobian_min": jac_min,
        "radius_min": float(radii.min()),
        "collar_shrunk": shrunk,
        "s_max": s_max,
    }
    return FoliationModel(h, xi0, config, s_max, label, diag)


def u_eval(m: FoliationModel, q, order: int = 2):
    """Value of ``u`` at a single point and its Taylor jet of the given order."""
    data = m.local(np.asarray(q, dtype=float), order=order)
    return float(data.u.value), data.u


def collar_samples(m: FoliationModel, count: int, seed: int = 0, s_fraction: float = 1.0):
    """Random collar points ``g_{is}(p)``; returns ``(Q, P, s)`` with ``Q`` of shape ``(m, N)``."""
    rng = np.random.default_rng(seed + 7919)
    P = sample_points(m.h, count, seed).T
    s = rng.uniform(-1, 1, count) * m.s_max * s_fraction
    return m.flow_point(P, s), P, s


# ------------------------------------------------------------------ checks

def calibration_residuals(m: FoliationModel, Q) -> dict:
    """Per-point ``|du(xi)|``, ``|d^c u(xi) - 1|`` and ``|[xi, J xi]|``."""
    data = m.local(np.asarray(Q, dtype=float), order=2)
    grad = data.u.gradient()
    xi_j = data.xi
    xi_v = np.stack([c.value for c in xi_j])
    du_xi = np.einsum("i...,i...->...", grad, xi_v)
    dcu_xi = np.einsum("i...,i...->...", apply_J(grad), xi_v)
    br = lie_bracket_jets(xi_j, apply_J(xi_j))
    bnorm = np.linalg.norm(np.stack([c.value for c in br]), axis=0)
    return {"du_xi": np.abs(du_xi), "dcu_xi_minus_1": np.abs(dcu_xi - 1.0), "bracket": bnorm}


def fd_check(m: FoliationModel, q, h: float = 1e-2) -> dict:
    """Compare the implicit jet of ``u`` with Richardson-extrapolated central differences.

    Returns the relative discrepancies of the gradient and of the Hessian.
    """
    q = np.asarray(q, dtype=float)
    mm = len(q)
    _, jet = u_eval(m, q, order=2)
    E = np.eye(mm)

    def grad_hess(step):
        pts = [q]
        for i in range(mm):
            pts += [q + step * E[i], q - step * E[i]]
            for j in range(i + 1, mm):
                for si in (1, -1):
                    for sj in (1, -1):
                        pts.append(q + step * (si * E[i] + sj * E[j]))
        vals = m.u(np.array(pts).T, check_collar=False)
        f0 = vals[0]
        it = iter(vals[1:])
        g = np.zeros(mm)
        H = np.zeros((mm, mm))
        for i in range(mm):
            fp, fm = next(it), next(it)
            g[i] = (fp - fm) / (2 * step)
            H[i, i] = (fp - 2 * f0 + fm) / step**2
            for j in range(i + 1, mm):
                fpp, fpm, fmp, fmm = next(it), next(it), next(it), next(it)
                H[i, j] = H[j, i] = (fpp - fpm - fmp + fmm) / (4 * step**2)
        return g, H

    g1, H1 = grad_hess(h)
    g2, H2 = grad_hess(h / 2)
    g = (4 * g2 - g1) / 3
    H = (4 * H2 - H1) / 3
    gj, Hj = jet.gradient(), jet.hessian()
    return {
        "grad": float(np.linalg.norm(g - gj) / max(np.linalg.norm(gj), 1e-300)),
        "hess": float(np.linalg.norm(H - Hj) / max(np.linalg.norm(Hj), 1e-300)),
    }


def uniqueness_check(m1: FoliationModel, m2: FoliationModel, Q) -> float:
    """``max |u_1 - u_2|`` over the points of ``Q`` lying in both collars."""
    Q = np.asarray(Q, dtype=float)
    if m1 is m2:
        return 0.0
    u1 = m1.u(Q, check_collar=False)
    P2, s2, _ = m2.preimage(Q, check_collar=False)
    s_max = min(m1.s_max, m2.s_max)
    shared = (np.abs(u1) <= s_max) & (np.abs(s2) <= s_max)
    if not np.any(shared):
        raise CollarError("the two models share no collar points in the sample")
    return float(np.abs(u1 + s2)[shared].max())


# ------------------------------------------------------------------ leaves

@dataclass(frozen=True)
class LeafChart:
    """Adapted coordinate ``z = t + i s`` on the leaf through a point of ``V``."""

    model: FoliationModel
    seed: np.ndarray
    t_max: float
    s_max: float
    mode: str = "auto"

    def __call__(self, t: float, s: float) -> np.ndarray:
        cfg = self.model.config
        return continue_flow(self.model.xi0, self.seed, complex(t, s), cfg.substeps,
                             self.mode, cfg.order, cfg.trust)

    def grid(self, ts, ss) -> np.ndarray:
        """Ambient points on a rectangle, shape ``(m, len(ts), len(ss))``.

        Real-time points ``g_t(p)`` are continued along the real axis, then
        every vertical segment is one Taylor evaluation from ``g_t(p)``.
        """
        ts = np.asarray(ts, dtype=float)
        ss = np.asarray(ss, dtype=float)
        cfg = self.model.config
        base = np.stack([
            continue_flow(self.model.xi0, self.seed, float(t), None, "time-series", cfg.order, cfg.trust)
            for t in ts
        ], axis=1)  # (m, Nt)
        coeffs = np.array([np.stack(c) for c in orbit_coefficients(self.model.xi0, base, cfg.order)])
        radii = np.array([radius_estimate(coeffs[:, :, j]) for j in range(len(ts))])
        if np.abs(ss).max(initial=0.0) > cfg.trust * radii.min():
            raise TrustRegionError(
                "leaf rectangle exceeds the trust region",
                reachable_fraction=float(cfg.trust * radii.min() / np.abs(ss).max()),
            )
        a = coeffs[:, 0::2] + 1j * coeffs[:, 1::2]  # (K+1, dim, Nt)
        powers = (1j * ss[None, :]) ** np.arange(coeffs.shape[0])[:, None]  # (K+1, Ns)
        z = np.einsum("kas,kt->ast", a, powers)
        return realify(z)

    def cr_residual(self, t: float, s: float, step: float = 1e-4) -> float:
        """Centered Cauchy-Riemann test ``d/ds F = J d/dt F``."""
        dt = (self(t + step, s) - self(t - step, s)) / (2 * step)
        ds = (self(t, s + step) - self(t, s - step)) / (2 * step)
        return float(np.abs(ds - apply_J(dt)).max())


def leaf_chart(m: FoliationModel, p, t_max: float = 1.0, s_max: float | None = None) -> LeafChart:
    p = np.asarray(p, dtype=float)
    if abs(float(m.h.rho(p))) > 1e-10:
        p = project_to_V(m.h, p)
    s_max = m.s_max if s_max is None else s_max
    mode = m.config.mode
    return LeafChart(m, p, t_max, s_max, mode)


def write_leaf_csv(chart: LeafChart, ts, ss, path, u_values=None, residuals=None) -> None:
    """Leaf trace: one row per grid point (t, s, ambient coordinates, u, residual)."""
    pts = chart.grid(ts, ss)
    m = pts.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "s"] + [f"x{i + 1}" for i in range(m)] + ["u", "residual"])
        for a, t in enumerate(ts):
            for b, s in enumerate(ss):
                u = "" if u_values is None else repr(float(u_values[a, b]))
                r = "" if residuals is None else repr(float(residuals[a, b]))
                w.writerow([repr(float(t)), repr(float(s))] + [repr(float(v)) for v in pts[:, a, b]] + [u, r])
