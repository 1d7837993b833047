"""Small dense linear algebra with complete pivoting.

The systems met in this package are tiny (at most 8 x 8) but can be badly
scaled, so LU factorisation pivots on the largest remaining entry and
determinants are returned as ``(sign, log|det|)``.  Everything is vectorised
over a leading batch axis.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import SingularSystemError

__all__ = ["LUFactors", "lu_full", "slogdet_full", "det_full", "solve_full", "condition_number"]


class LUFactors(NamedTuple):
    lu: np.ndarray  # (B, m, m); unit lower L below the diagonal, U on and above
    rows: np.ndarray  # (B, m) row permutation
    cols: np.ndarray  # (B, m) column permutation
    swaps: np.ndarray  # (B,) parity of the two permutations combined


def lu_full(A) -> LUFactors:
    """LU with complete pivoting of a batch ``(B, m, m)`` (or a single matrix)."""
    A = np.array(A, dtype=np.result_type(A, float))
    single = A.ndim == 2
    if single:
        A = A[None]
    B, m, _ = A.shape
    idx = np.arange(B)
    rows = np.tile(np.arange(m), (B, 1))
    cols = np.tile(np.arange(m), (B, 1))
    swaps = np.zeros(B, dtype=int)
    for k in range(m - 1):
        sub = np.abs(A[:, k:, k:]).reshape(B, -1)
        flat = np.argmax(sub, axis=1)
        pr, pc = flat // (m - k) + k, flat % (m - k) + k
        swaps += (pr != k).astype(int) + (pc != k).astype(int)
        # swap rows
        tmp = A[idx, k].copy()
        A[idx, k] = A[idx, pr]
        A[idx, pr] = tmp
        rows[idx, k], rows[idx, pr] = rows[idx, pr], rows[idx, k].copy()
        # swap columns
        tmp = A[idx, :, k].copy()
        A[idx, :, k] = A[idx, :, pc]
        A[idx, :, pc] = tmp
        cols[idx, k], cols[idx, pc] = cols[idx, pc], cols[idx, k].copy()
        piv = A[:, k, k]
        safe = np.where(piv == 0, 1.0, piv)
        A[:, k + 1 :, k] /= safe[:, None]
        A[:, k + 1 :, k] = np.where((piv == 0)[:, None], 0.0, A[:, k + 1 :, k])
        A[:, k + 1 :, k + 1 :] -= A[:, k + 1 :, k, None] * A[:, k, None, k + 1 :]
    if single:
        return LUFactors(A[0], rows[0], cols[0], swaps[0])
    return LUFactors(A, rows, cols, swaps)


def slogdet_full(A):
    """``(sign, log|det|)`` via complete pivoting; sign is complex for complex input."""
    f = lu_full(A)
    diag = np.diagonal(f.lu, axis1=-2, axis2=-1)
    absd = np.abs(diag)
    with np.errstate(divide="ignore"):
        logabs = np.sum(np.log(absd), axis=-1)
    phase = np.prod(np.where(absd == 0, 0.0, diag / np.where(absd == 0, 1.0, absd)), axis=-1)
    sign = phase * np.where(f.swaps % 2, -1.0, 1.0)
    return sign, logabs


def det_full(A):
    sign, logabs = slogdet_full(A)
    return sign * np.exp(logabs)


def condition_number(A) -> float:
    s = np.linalg.svd(np.asarray(A), compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def solve_full(A, b, rcond: float = 1e-13) -> np.ndarray:
    """Solve a single square system, raising on (numerical) singularity."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    f = lu_full(A)
    m = A.shape[0]
    diag = np.abs(np.diag(f.lu))
    if diag.min() <= rcond * max(diag.max(), 1e-300):
        raise SingularSystemError(
            f"singular system (pivot ratio {diag.min() / max(diag.max(), 1e-300):.2e})"
        )
    y = b[f.rows].astype(float)
    for i in range(m):
        y[i] -= f.lu[i, :i] @ y[:i]
    x = np.empty_like(y)
    for i in reversed(range(m)):
        x[i] = (y[i] - f.lu[i, i + 1 :] @ x[i + 1 :]) / f.lu[i, i]
    out = np.empty_like(x)
    out[f.cols] = x
    return out
