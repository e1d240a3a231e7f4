"""Compressed-row matrices and restarted GMRES with diagonal preconditioning."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class IndexOutOfRange(IndexError):
    pass


class DimensionMismatch(ValueError):
    pass


class ZeroDiagonal(ZeroDivisionError):
    pass


class MaxItersExceeded(RuntimeError):
    def __init__(self, msg, x=None, stats=None):
        super().__init__(msg)
        self.x = x
        self.stats = stats


class SparseMatrix:
    """CSR matrix with sorted, duplicate-free column indices per row."""

    def __init__(self, n_rows, n_cols, offsets, indices, values):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.offsets = np.asarray(offsets)
        self.indices = np.asarray(indices)
        self.values = np.asarray(values, dtype=float)
        self._csr = sp.csr_matrix((self.values, self.indices, self.offsets),
                                  shape=(self.n_rows, self.n_cols))

    @classmethod
    def from_triplets(cls, n, rows, cols=None, vals=None, n_cols=None):
        """Build from ``(row, col, value)`` triplets, summing duplicates.

        Accepts either three parallel arrays or a single list of tuples as
        ``rows``.
        """
        if cols is None:
            entries = list(rows)
            rows = np.array([e[0] for e in entries], dtype=np.int64)
            cols = np.array([e[1] for e in entries], dtype=np.int64)
            vals = np.array([e[2] for e in entries], dtype=float)
        n_cols = n if n_cols is None else n_cols
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        if len(rows) and (rows.min() < 0 or rows.max() >= n or cols.min() < 0
                          or cols.max() >= n_cols):
            raise IndexOutOfRange("triplet index outside the matrix")
        A = sp.coo_matrix((vals, (rows, cols)), shape=(n, n_cols)).tocsr()
        A.sum_duplicates()
        A.sort_indices()
        return cls(n, n_cols, A.indptr, A.indices, A.data)

    @classmethod
    def from_scipy(cls, A):
        A = sp.csr_matrix(A)
        A.sum_duplicates()
        A.sort_indices()
        return cls(A.shape[0], A.shape[1], A.indptr, A.indices, A.data)

    @property
    def shape(self):
        return (self.n_rows, self.n_cols)

    @property
    def nnz(self):
        return len(self.values)

    def matvec(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_cols,):
            raise DimensionMismatch(f"vector of shape {x.shape} for matrix {self.shape}")
        return self._csr @ x

    __matmul__ = matvec

    def diagonal(self):
        return self._csr.diagonal()

    def transpose_matvec(self, y):
        return self._csr.T @ np.asarray(y, dtype=float)

    def toarray(self):
        return self._csr.toarray()

    def to_scipy(self):
        return self._csr


def matvec(A: SparseMatrix, x):
    return A.matvec(x)


def from_triplets(n, entries):
    return SparseMatrix.from_triplets(n, entries)


@dataclass
class SolverStats:
    iterations: int
    residual: float
    rel_residual: float
    converged: bool
    restarts: int


def solve_gmres(A: SparseMatrix, b, diag_precond=True, rel_tol=1e-10, restart=30,
                max_iters=10000, x0=None, side="left", raise_on_fail=True):
    """Restarted GMRES(``restart``) with optional Jacobi preconditioning.

    Convergence always requires the true residual ``||b - A x|| <= rel_tol ||b||``.
    With ``side="left"`` the iteration minimizes the Jacobi-scaled residual
    ``D^-1 (b - A x)`` and additionally requires it to satisfy the same
    relative bound; this controls rows whose entries are tiny in absolute
    terms (stabilization-only rows), which the unscaled residual cannot see.
    ``side="right"`` checks the true residual only.
    """
    b = np.asarray(b, dtype=float)
    n = A.n_rows
    if A.n_cols != n or b.shape != (n,):
        raise DimensionMismatch("GMRES needs a square matrix and matching right-hand side")
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    if diag_precond:
        d = A.diagonal()
        if np.any(d == 0):
            raise ZeroDiagonal(f"{int(np.sum(d == 0))} zero diagonal entries")
        dinv = 1.0 / d
    else:
        dinv = np.ones(n)
    left = side == "left"
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0:
        return np.zeros(n), SolverStats(0, 0.0, 0.0, True, 0)
    target = rel_tol * bnorm
    target_scaled = rel_tol * np.linalg.norm(dinv * b) if left else np.inf
    r = b - A.matvec(x)
    rnorm = np.linalg.norm(r)
    znorm = np.linalg.norm(dinv * r) if left else 0.0
    total = 0
    cycles = 0
    m = max(1, min(restart, n))

    def done():
        return rnorm <= target and znorm <= target_scaled

    while not done() and total < max_iters:
        cycles += 1
        if left:
            z = dinv * r
            inner_target = min(target_scaled, target * znorm / rnorm) if rnorm > 0 else target_scaled
        else:
            z = r
            inner_target = target
        beta = np.linalg.norm(z)
        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = z / beta
        k = 0
        for j in range(m):
            w = dinv * A.matvec(V[j]) if left else A.matvec(dinv * V[j])
            # classical Gram-Schmidt, repeated once when cancellation is severe
            wnorm = np.linalg.norm(w)
            h = V[:j + 1] @ w
            w -= h @ V[:j + 1]
            hnext = np.linalg.norm(w)
            if hnext < 0.7 * wnorm:
                h2 = V[:j + 1] @ w
                w -= h2 @ V[:j + 1]
                h += h2
                hnext = np.linalg.norm(w)
            H[:j + 1, j] = h
            H[j + 1, j] = hnext
            for i in range(j):
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            den = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / den, H[j + 1, j] / den
            H[j, j] = den
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            k = j + 1
            total += 1
            if abs(g[j + 1]) <= inner_target or total >= max_iters or hnext == 0.0:
                break
            V[j + 1] = w / hnext
        y = np.linalg.solve(np.triu(H[:k, :k]), g[:k]) if k else np.zeros(0)
        dx = y @ V[:k]
        x += dx if left else dinv * dx
        r = b - A.matvec(x)
        rnorm = np.linalg.norm(r)
        if left:
            znorm = np.linalg.norm(dinv * r)
    stats = SolverStats(total, float(rnorm), float(rnorm / bnorm), bool(done()), cycles)
    if not stats.converged:
        msg = f"GMRES stopped after {total} iterations at relative residual {stats.rel_residual:.3e}"
        if raise_on_fail:
            raise MaxItersExceeded(msg, x, stats)
        log.warning(msg)
    return x, stats
