"""Dense real matrix kernels: norms, trace products, Cholesky, symmetric
eigenvalues, pairwise squared distances.

Everything operates on plain ``numpy.ndarray`` objects (row-major semantics)
and is a pure function of its inputs, so concurrent use is safe. Tolerances
are expressed relative to problem scale throughout.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.typing import NDArray

Matrix = NDArray[np.float64]

SYMMETRY_RTOL = 1e-12


class NotPositiveDefinite(Exception):
    """Cholesky pivot fell at or below the positive-definiteness threshold."""


class EigenConvergenceError(Exception):
    """Jacobi sweeps exhausted before the off-diagonal mass vanished."""

    def __init__(self, residual: float, sweeps: int):
        super().__init__(
            f"eigensolver did not converge after {sweeps} sweeps "
            f"(off-diagonal residual {residual:.3e})"
        )
        self.residual = residual
        self.sweeps = sweeps


def as_matrix(a, name: str = "matrix") -> Matrix:
    """Coerce to a finite 2-d float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-dimensional, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def check_symmetric(s, name: str = "matrix") -> Matrix:
    """Validate ``|S[i,j] - S[j,i]| <= 1e-12 * (1 + |S[i,j]|)`` and return S."""
    m = as_matrix(s, name)
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"{name} must be square, got shape {m.shape}")
    gap = np.abs(m - m.T)
    tol = SYMMETRY_RTOL * (1.0 + np.abs(m))
    if np.any(gap > tol):
        raise ValueError(f"{name} is not symmetric within tolerance")
    return m


def frobenius_norm_sq(m) -> float:
    """Sum of squared entries."""
    a = as_matrix(m)
    return float(np.sum(a * a))


def trace_chain(ms) -> float:
    """Trace of the ordered product of the given matrices.

    The chain is folded left to right and the final factor is absorbed into
    the trace as ``tr(P M) = sum(P * M^T)``, so the last product is never
    materialized. Raises ``ValueError`` on non-conformable dimensions or a
    non-square overall product.
    """
    mats = [as_matrix(m, f"chain[{i}]") for i, m in enumerate(ms)]
    if not mats:
        raise ValueError("trace_chain requires at least one matrix")
    for left, right in zip(mats, mats[1:]):
        if left.shape[1] != right.shape[0]:
            raise ValueError(
                f"dimension mismatch in chain: {left.shape} @ {right.shape}"
            )
    if mats[0].shape[0] != mats[-1].shape[1]:
        raise ValueError("chain product is not square; trace undefined")
    if len(mats) == 1:
        return float(np.trace(mats[0]))
    prod = mats[0]
    for m in mats[1:-1]:
        prod = prod @ m
    return float(np.sum(prod * mats[-1].T))


def cholesky(s) -> Matrix:
    """Lower-triangular L with ``L @ L.T == S``.

    Raises ``NotPositiveDefinite`` when a pivot drops to or below
    ``dim * 1e-12 * max(diag(S))``.
    """
    a = check_symmetric(s, "cholesky input")
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0))
    threshold = n * 1e-12 * max(float(np.max(np.diag(a))), 0.0)
    l = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - np.dot(l[j, :j], l[j, :j])
        if pivot <= threshold:
            raise NotPositiveDefinite(
                f"pivot {pivot:.3e} at column {j} (threshold {threshold:.3e})"
            )
        l[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            l[j + 1 :, j] = (a[j + 1 :, j] - l[j + 1 :, :j] @ l[j, :j]) / l[j, j]
    return l


def _offdiag_norm(a: Matrix) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.sqrt(np.sum(off * off)))


def sym_eigenvalues(s, max_sweeps: int = 100) -> Matrix:
    """Eigenvalues of a symmetric matrix, nondecreasing.

    Cyclic Jacobi rotations, stopping once the off-diagonal Frobenius mass
    falls below ``1e-12 * ||S||_F``; adequate and simple at the dimensions
    used here (<= ~500).
    """
    a = check_symmetric(s, "eigensolver input").copy()
    n = a.shape[0]
    if n == 0:
        return np.zeros(0)
    threshold = 1e-12 * math.sqrt(frobenius_norm_sq(a))
    if _offdiag_norm(a) <= threshold:
        return np.sort(np.diag(a))
    for _ in range(max_sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                diff = a[q, q] - a[p, p]
                if abs(apq) < 1e-100 * abs(diff):
                    t = 0.0  # angle below fp resolution; rotation degenerates
                else:
                    theta = diff / (2.0 * apq)
                    if theta >= 0.0:
                        t = 1.0 / (theta + math.sqrt(theta * theta + 1.0))
                    else:
                        t = -1.0 / (-theta + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = 0.0
                a[q, p] = 0.0
        if _offdiag_norm(a) <= threshold:
            return np.sort(np.diag(a))
    raise EigenConvergenceError(_offdiag_norm(a), max_sweeps)


def pairwise_sq_distances(x) -> Matrix:
    """n x n matrix of squared Euclidean distances between rows of ``x``.

    Computed via ``|a|^2 + |b|^2 - 2 a.b`` with cached row norms; negative
    round-off is clamped to zero so downstream square roots are safe. The
    diagonal is exactly zero and the result is exactly symmetric.
    """
    m = as_matrix(x, "observations")
    if m.shape[0] < 1:
        raise ValueError("need at least one observation row")
    sq = np.sum(m * m, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (m @ m.T)
    np.maximum(d, 0.0, out=d)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    return d
