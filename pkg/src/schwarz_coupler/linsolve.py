"""Banded Cholesky factorization for the SPD blocks.

The factorization uses LAPACK ``dpbtrf``/``dpbtrs`` (no pivoting).  Matrices
are permuted by a caller-supplied ordering (dof coordinate for coupled
blocks) so the band stays ``O(support / h)`` wide.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack

from .errors import NotSPDError

__all__ = ["SolveReport", "BandedCholesky", "factorize", "cholesky_solve"]


@dataclass
class SolveReport:
    residual_norm: float
    factorization_pivots_min: float
    dimension: int
    refinement_steps: int = 0


class BandedCholesky:
    """Lower banded Cholesky factor of a symmetric positive definite matrix.

    Parameters
    ----------
    A : sparse or dense (n, n) array
        Symmetric matrix; only the lower triangle is read.
    order : array of int, optional
        Symmetric permutation applied before factorizing.
    """

    def __init__(self, A, order=None):
        A = sp.csr_matrix(A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"square matrix expected, got shape {A.shape}")
        self.A = A
        self.n = n
        self.order = None if order is None else np.asarray(order, dtype=np.int64)
        P = A if self.order is None else A[self.order][:, self.order]
        low = sp.tril(P, format="coo")
        bw = int(np.max(low.row - low.col)) if low.nnz else 0
        self.bandwidth = bw
        ab = np.zeros((bw + 1, n), order="F")
        ab[low.row - low.col, low.col] = low.data
        if n == 0:
            self.factor = ab
            self.pivots_min = np.inf
            return
        c, info = lapack.dpbtrf(ab, lower=1)
        if info > 0:
            raise NotSPDError(info)
        if info < 0:
            raise ValueError(f"dpbtrf: illegal argument {-info}")
        self.factor = c
        self.pivots_min = float(np.min(c[0] ** 2))

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has length {b.shape[0]}, expected {self.n}")
        if self.n == 0:
            return b.copy()
        rhs = b if self.order is None else b[self.order]
        x, info = lapack.dpbtrs(self.factor, rhs, lower=1)
        if info != 0:
            raise ValueError(f"dpbtrs: illegal argument {-info}")
        if self.order is None:
            return x
        out = np.empty_like(x)
        out[self.order] = x
        return out

    def solve_with_report(self, b, rtol: float = 1e-12, max_refine: int = 2):
        """Solve, then apply up to ``max_refine`` refinement steps if the
        relative residual exceeds ``rtol``."""
        b = np.asarray(b, dtype=float)
        x = self.solve(b)
        bnorm = float(np.linalg.norm(b))
        r = b - self.A @ x
        steps = 0
        while steps < max_refine and bnorm > 0 and np.linalg.norm(r) > rtol * bnorm:
            x = x + self.solve(r)
            r = b - self.A @ x
            steps += 1
        return x, SolveReport(float(np.linalg.norm(r)), self.pivots_min, self.n, steps)


    def solve_refined(self, b, steps: int = 2):
        """Solve with ``steps`` rounds of refinement whose residual is
        accumulated in extended precision (``numpy.longdouble``)."""
        b = np.asarray(b, dtype=float)
        x = self.solve(b)
        for _ in range(steps):
            r = _residual_extended(self.A, x, b)
            if not np.any(r):
                break
            x = x + self.solve(r)
        r = b - self.A @ x
        return x, SolveReport(float(np.linalg.norm(r)), self.pivots_min, self.n, steps)


def _residual_extended(A: sp.csr_matrix, x, b) -> np.ndarray:
    xl = np.asarray(x, dtype=np.longdouble)
    prod = A.data.astype(np.longdouble) * xl[A.indices]
    rows = np.repeat(np.arange(A.shape[0]), np.diff(A.indptr))
    acc = np.zeros(A.shape[0], dtype=np.longdouble)
    np.add.at(acc, rows, prod)
    return (np.asarray(b, dtype=np.longdouble) - acc).astype(float)


def factorize(A, order=None) -> BandedCholesky:
    return BandedCholesky(A, order)


def cholesky_solve(A, b, order=None):
    """Factor ``A`` and solve ``A x = b``; returns ``(x, SolveReport)``."""
    return BandedCholesky(A, order).solve_with_report(b)
