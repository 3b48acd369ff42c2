# sparse.py - Sparse storage and direct solves
"""
CSR assembly from (row, col, value) triplets and sparse LU solves with a
verified residual. Matrices are scipy.sparse.csr_matrix instances with
sorted, duplicate-free column indices.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from src.core.errors import ParameterError, SingularMatrix
from src.core.logger import get_logger

RESIDUAL_TOL = 1e-10
REFINEMENT_STEPS = 3


def from_arrays(dim, rows, cols, values, n_cols=None):
    """dim x dim (or dim x n_cols) CSR matrix; duplicate entries are summed"""
    n_cols = dim if n_cols is None else n_cols
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (rows.size == cols.size == values.size):
        raise ParameterError("triplet arrays differ in length")
    if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= n_cols):
        raise ParameterError(f"triplet index out of range for shape ({dim}, {n_cols})")

    matrix = sp.coo_matrix((values, (rows, cols)), shape=(dim, n_cols)).tocsr()
    matrix.sum_duplicates()
    matrix.sort_indices()
    return matrix


def from_triplets(dim, entries):
    """CSR matrix from an iterable of (row, col, value)"""
    entries = list(entries)
    if not entries:
        return sp.csr_matrix((dim, dim))
    rows, cols, values = zip(*entries)
    return from_arrays(dim, rows, cols, values)


def relative_residual(A, x, b):
    norm_b = np.linalg.norm(b)
    r = np.linalg.norm(A @ x - b)
    return r / norm_b if norm_b > 0 else r


class DirectSolver:
    """LU factorization of a square sparse matrix, reusable for many right-hand sides"""

    def __init__(self, A):
        self.logger = get_logger()
        if A.shape[0] != A.shape[1]:
            raise ParameterError(f"matrix must be square, got shape {A.shape}")
        self.A = sp.csr_matrix(A)
        try:
            self.lu = splu(self.A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as e:
            raise SingularMatrix(f"LU factorization failed: {e}") from e

    def solve(self, b, trans=False):
        """Solve A x = b (or A^T x = b) and verify the relative residual"""
        b = np.asarray(b, dtype=float)
        if not np.all(np.isfinite(b)):
            raise ParameterError("right-hand side is not finite")
        if not np.any(b):
            return np.zeros_like(b)

        op = self.A.T if trans else self.A
        mode = "T" if trans else "N"
        x = self.lu.solve(b, trans=mode)
        residual = relative_residual(op, x, b) if np.all(np.isfinite(x)) else np.inf

        steps = 0
        while residual > RESIDUAL_TOL and np.isfinite(residual) and steps < REFINEMENT_STEPS:
            x = x + self.lu.solve(b - op @ x, trans=mode)
            residual = relative_residual(op, x, b)
            steps += 1

        if not np.isfinite(residual) or residual > RESIDUAL_TOL:
            raise SingularMatrix(
                f"direct solve residual {residual:.3e} exceeds {RESIDUAL_TOL:.0e}", residual=residual)
        if steps:
            self.logger.debug(f"Iterative refinement: {steps} step(s), residual {residual:.3e}")
        return x


def factorize(A):
    return DirectSolver(A)


def solve_direct(A, b, trans=False):
    """x with ||A x - b|| <= 1e-10 ||b||; raises SingularMatrix otherwise"""
    return DirectSolver(A).solve(b, trans=trans)
