"""Dense small-scale linear algebra and a strict-feasibility LP.

Matrices are plain 2-D float numpy arrays (row-major).  Everything here is
sized for dimensions n <= ~10 and facet counts m <= ~32, so the only
factorization used is Householder QR with column pivoting, written out
below rather than delegated; rank decisions compare the pivoted diagonal
against a :class:`Tol`.  All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSystem


@dataclass(frozen=True)
class Tol:
    """Absolute/relative tolerance pair used for every margin test.

    Strict inequalities in the underlying theory become margin checks
    against ``abs`` (optionally scaled) plus ``rel`` times a problem scale.
    """

    abs: float = 1e-9
    rel: float = 1e-12

    def __post_init__(self):
        if not (self.abs > 0.0 or self.rel > 0.0):
            raise ValueError("Tol requires abs > 0 or rel > 0")


DEFAULT_TOL = Tol()


def as_matrix(a) -> np.ndarray:
    """Coerce to a finite 2-D float array, copying only if needed."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix entries must be finite")
    return m


def as_vector(v, n: int | None = None) -> np.ndarray:
    """Coerce to a finite 1-D float array, optionally checking length."""
    x = np.asarray(v, dtype=float).reshape(-1)
    if not np.all(np.isfinite(x)):
        raise ValueError("vector entries must be finite")
    if n is not None and x.size != n:
        raise ValueError(f"expected length {n}, got {x.size}")
    return x


def qr_column_pivot(a) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Householder QR with column pivoting: ``a[:, perm] = q @ r``.

    Returns (q, r, perm) with q orthogonal (m x m), r upper triangular
    (m x n), and perm an index array.  Column norms are recomputed exactly
    at every step; fine at this scale and immune to downdating drift.
    """
    r = as_matrix(a).copy()
    m, n = r.shape
    q = np.eye(m)
    perm = np.arange(n)
    for k in range(min(m, n)):
        norms = np.einsum("ij,ij->j", r[k:, k:], r[k:, k:])
        j = k + int(np.argmax(norms))
        if j != k:
            r[:, [k, j]] = r[:, [j, k]]
            perm[[k, j]] = perm[[j, k]]
        x = r[k:, k]
        nx = float(np.linalg.norm(x))
        if nx == 0.0:
            continue
        v = x.copy()
        v[0] += nx if x[0] >= 0.0 else -nx
        nv = float(np.linalg.norm(v))
        if nv == 0.0:
            continue
        v /= nv
        r[k:, k:] -= 2.0 * np.outer(v, v @ r[k:, k:])
        q[:, k:] -= 2.0 * np.outer(q[:, k:] @ v, v)
        r[k + 1:, k] = 0.0
    return q, r, perm


def _rank_from_diag(r: np.ndarray, tol: Tol) -> int:
    d = np.abs(np.diag(r))
    if d.size == 0:
        return 0
    thr = tol.abs + tol.rel * float(d[0])
    rank = 0
    for val in d:
        if val > thr:
            rank += 1
        else:
            break
    return rank


def rank(m, tol: Tol = DEFAULT_TOL) -> int:
    """Numerical rank via column-pivoted QR.

    Pivoted diagonal magnitudes stand in for singular values; entries at or
    below ``tol.abs + tol.rel * largest`` count as zero.
    """
    _, r, _ = qr_column_pivot(m)
    return _rank_from_diag(r, tol)


def _solve_upper(r: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Back substitution for a square upper-triangular system."""
    k = r.shape[0]
    x = np.zeros(k)
    for i in range(k - 1, -1, -1):
        x[i] = (b[i] - r[i, i + 1:] @ x[i + 1:]) / r[i, i]
    return x


def lstsq(m, b, tol: Tol = DEFAULT_TOL) -> np.ndarray:
    """Least-squares solution of ``m @ x = b`` for rows >= cols.

    Raises DegenerateSystem when the numerical rank falls short of the
    column count, since the minimizer is then not unique.
    """
    a = as_matrix(m)
    rows, cols = a.shape
    if rows < cols:
        raise ValueError(f"lstsq needs rows >= cols, got {rows} x {cols}")
    rhs = as_vector(b, rows)
    q, r, perm = qr_column_pivot(a)
    rk = _rank_from_diag(r, tol)
    if rk < cols:
        raise DegenerateSystem(
            f"rank {rk} < {cols} columns at tolerance (abs={tol.abs}, rel={tol.rel})"
        )
    y = q.T @ rhs
    xp = _solve_upper(r[:cols, :cols], y[:cols])
    x = np.zeros(cols)
    x[perm] = xp
    return x


def null_space_vector(a, tol: Tol = DEFAULT_TOL) -> np.ndarray | None:
    """One unit vector in the kernel of ``a``, or None at full column rank."""
    m = as_matrix(a)
    _, r, perm = qr_column_pivot(m)
    n = m.shape[1]
    rk = _rank_from_diag(r, tol)
    if rk >= n:
        return None
    x = np.zeros(n)
    if rk > 0:
        y = _solve_upper(r[:rk, :rk], -r[:rk, rk])
        x[perm[:rk]] = y
    x[perm[rk]] = 1.0
    return x / np.linalg.norm(x)


def feas_lp(a, tol: Tol = DEFAULT_TOL) -> np.ndarray | None:
    """Strictly feasible point for ``a @ x > 0``, or None.

    Maximizes the worst margin s subject to ``a @ x >= s`` and
    ``|x_i| <= 1`` with a dense full-tableau simplex (Bland's rule, so no
    cycling).  Returns an x whose re-substituted margin exceeds ``tol.abs``,
    or None when the optimum margin is at or below that cutoff.  The search
    restricts s >= 0, which is harmless: x = 0 always achieves s = 0.
    """
    mat = as_matrix(a)
    m, n = mat.shape

    # Columns: u (n), v (n), s (1), w (m), p (n), q (n); x = u - v.
    n_cols = 4 * n + m + 1
    iu, iv = 0, n
    i_s = 2 * n
    iw = 2 * n + 1
    ip = iw + m
    iq = ip + n

    t = np.zeros((m + 2 * n + 1, n_cols + 1))
    for i in range(m):
        t[i, iu:iu + n] = -mat[i]
        t[i, iv:iv + n] = mat[i]
        t[i, i_s] = 1.0
        t[i, iw + i] = 1.0
    for j in range(n):
        t[m + j, iu + j] = 1.0
        t[m + j, ip + j] = 1.0
        t[m + j, n_cols] = 1.0
    for j in range(n):
        t[m + n + j, iv + j] = 1.0
        t[m + n + j, iq + j] = 1.0
        t[m + n + j, n_cols] = 1.0
    t[-1, i_s] = -1.0  # minimize -s

    basis = list(range(iw, iw + m)) + list(range(ip, ip + n)) + list(range(iq, iq + n))

    for _ in range(20000):
        costs = t[-1, :n_cols]
        enter = -1
        for j in range(n_cols):
            if costs[j] < -1e-12:
                enter = j
                break
        if enter < 0:
            break
        best_ratio, leave = None, -1
        for i in range(m + 2 * n):
            if t[i, enter] > 1e-12:
                ratio = t[i, n_cols] / t[i, enter]
                if (best_ratio is None or ratio < best_ratio - 1e-15
                        or (abs(ratio - best_ratio) <= 1e-15 and basis[i] < basis[leave])):
                    best_ratio, leave = ratio, i
        if leave < 0:
            raise RuntimeError("feasibility LP unbounded; malformed input")
        piv = t[leave, enter]
        t[leave] /= piv
        for i in range(m + 2 * n + 1):
            if i != leave and t[i, enter] != 0.0:
                t[i] -= t[i, enter] * t[leave]
        basis[leave] = enter
    else:
        raise RuntimeError("feasibility LP failed to terminate")

    z = np.zeros(n_cols)
    for i, bj in enumerate(basis):
        z[bj] = t[i, n_cols]
    margin = z[i_s]
    if margin <= tol.abs:
        return None
    x = np.clip(z[iu:iu + n] - z[iv:iv + n], -1.0, 1.0)
    resub = float(np.min(mat @ x)) if m else margin
    if resub <= tol.abs:
        return None
    return x
