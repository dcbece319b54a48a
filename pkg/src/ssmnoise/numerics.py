"""Dense numeric kernels: matmul, one-sided Jacobi SVD, stable reductions.

All arithmetic is in float64 regardless of storage dtype, so accumulation
error stays well below the injected analog noise being studied.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import NumericError, ShapeError

SVD_TOL = 1e-12
SVD_MAX_SWEEPS = 60


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with explicit conformance checking.

    Summation order is fixed by the underlying dense kernel and does not vary
    across runs on a given platform.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return a @ b


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD W = U @ diag(s) @ Vt with r = min(m, n).

    U is m x r with orthonormal columns, s nonincreasing and nonnegative,
    Vt is r x n with orthonormal rows.
    """

    u: np.ndarray
    s: np.ndarray
    vt: np.ndarray

    @property
    def rank(self) -> int:
        return self.s.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.s) @ self.vt


@njit(cache=True)
def _jacobi_sweeps(a, v, tol, max_sweeps):  # pragma: no cover - jitted
    m, n = a.shape
    off = 0.0
    for sweep in range(max_sweeps):
        off = 0.0
        # numerically null columns (relative norm below ~1e-14) carry only
        # rotation roundoff; excluding them prevents the null space from
        # cycling forever at correlation ~1
        max_sq = 0.0
        for j in range(n):
            sq = 0.0
            for i in range(m):
                sq += a[i, j] * a[i, j]
            if sq > max_sq:
                max_sq = sq
        tiny_sq = max_sq * 1e-28
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = 0.0
                aqq = 0.0
                apq = 0.0
                for i in range(m):
                    app += a[i, p] * a[i, p]
                    aqq += a[i, q] * a[i, q]
                    apq += a[i, p] * a[i, q]
                denom = np.sqrt(app * aqq)
                if denom == 0.0 or app <= tiny_sq or aqq <= tiny_sq or abs(apq) <= tol * denom:
                    continue
                if abs(apq) / denom > off:
                    off = abs(apq) / denom
                tau = (aqq - app) / (2.0 * apq)
                if tau >= 0.0:
                    t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
                else:
                    t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    ap = a[i, p]
                    aq = a[i, q]
                    a[i, p] = c * ap - s * aq
                    a[i, q] = s * ap + c * aq
                for i in range(n):
                    vp = v[i, p]
                    vq = v[i, q]
                    v[i, p] = c * vp - s * vq
                    v[i, q] = s * vp + c * vq
        if off == 0.0:
            return 0.0
    return off


def _complete_basis(u: np.ndarray, ncols: int) -> None:
    """Fill zero columns of u (from zero singular values) with unit vectors
    orthogonal to the nonzero columns, by Gram-Schmidt over the standard basis."""
    m = u.shape[0]
    for j in range(ncols):
        if np.linalg.norm(u[:, j]) > 0.5:
            continue
        for k in range(m):
            cand = np.zeros(m)
            cand[k] = 1.0
            cand -= u @ (u.T @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-6:
                u[:, j] = cand / norm
                break


def svd(w: np.ndarray) -> SvdResult:
    """One-sided Jacobi SVD.

    Columns of the working matrix are rotated until all pairwise inner
    products fall below SVD_TOL relative to the column norms.  The side with
    fewer columns is orthogonalized (transposing first if needed).
    """
    w = np.asarray(w, dtype=np.float64)
    if w.ndim != 2 or w.shape[0] < 1 or w.shape[1] < 1:
        raise ShapeError(f"svd expects a nonempty 2-D matrix, got shape {w.shape}")
    if not np.all(np.isfinite(w)):
        raise NumericError("svd input contains non-finite entries")
    m, n = w.shape
    transposed = m < n
    a = np.array(w.T if transposed else w, dtype=np.float64, order="C")
    v = np.eye(a.shape[1])
    residual = _jacobi_sweeps(a, v, SVD_TOL, SVD_MAX_SWEEPS)
    if residual > SVD_TOL:
        raise NumericError(
            f"Jacobi SVD did not converge in {SVD_MAX_SWEEPS} sweeps "
            f"(relative off-diagonal residual {residual:.3e})"
        )
    s = np.sqrt(np.einsum("ij,ij->j", a, a))
    # columns in the numerical null space hold only roundoff and have no
    # reliable direction; report them as exact zeros and rebuild their left
    # vectors from the orthogonal complement
    cutoff = s.max() * 1e-13 if s.size else 0.0
    s[s < cutoff] = 0.0
    order = np.argsort(-s, kind="stable")
    s = s[order]
    a = a[:, order]
    v = v[:, order]
    u = np.zeros_like(a)
    nz = s > 0
    u[:, nz] = a[:, nz] / s[nz]
    if not nz.all():
        _complete_basis(u, u.shape[1])
    if transposed:
        return SvdResult(u=v, s=s, vt=u.T)
    return SvdResult(u=u, s=s, vt=v.T)


def log_sum_exp(v: np.ndarray) -> float:
    """Max-shifted log(sum(exp(v)))."""
    v = np.asarray(v, dtype=np.float64)
    if v.size < 1:
        raise ShapeError("log_sum_exp requires at least one entry")
    hi = np.max(v)
    return float(hi + np.log(np.sum(np.exp(v - hi))))


def softmax(v: np.ndarray) -> np.ndarray:
    """Max-shifted softmax along the last axis; sums to 1 within 1e-12."""
    v = np.asarray(v, dtype=np.float64)
    if v.size < 1:
        raise ShapeError("softmax requires at least one entry")
    e = np.exp(v - np.max(v, axis=-1, keepdims=True))
    return e / np.sum(e, axis=-1, keepdims=True)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), overflow-safe."""
    return np.logaddexp(0.0, np.asarray(x, dtype=np.float64))


def silu(x: np.ndarray) -> np.ndarray:
    """x * sigmoid(x), overflow-safe."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = x[pos] / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = x[~pos] * ex / (1.0 + ex)
    return out
