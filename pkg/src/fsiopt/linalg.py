"""Linear-algebra kernels shared by the assembly, coupling and ROM layers.

Sparse matrices are ``scipy.sparse.csr_matrix`` in canonical form (sorted
indices, no duplicates); dense matrices are C-ordered ``numpy`` arrays.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinAlgError(RuntimeError):
    pass


class SingularMatrixError(LinAlgError):
    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class DimensionError(LinAlgError, ValueError):
    pass


def as_csr(A) -> sp.csr_matrix:
    """Return ``A`` as a canonical CSR matrix (sorted, duplicates summed)."""
    A = sp.csr_matrix(A, dtype=float)
    A.sum_duplicates()
    A.sort_indices()
    return A


def _zero_row(A: sp.csr_matrix):
    nnz = np.diff(A.indptr)
    empty = np.flatnonzero(nnz == 0)
    if empty.size:
        return int(empty[0])
    absrow = np.asarray(abs(A).sum(axis=1)).ravel()
    zero = np.flatnonzero(absrow == 0.0)
    return int(zero[0]) if zero.size else None


class SparseLU:
    """LU factorization with partial pivoting and COLAMD fill-reducing ordering.

    One factorization serves any number of right-hand sides.
    """

    def __init__(self, A):
        A = as_csr(A)
        if A.shape[0] != A.shape[1]:
            raise DimensionError(f"matrix must be square, got {A.shape}")
        self.shape = A.shape
        try:
            self._lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
        except RuntimeError as exc:
            row = _zero_row(A)
            raise SingularMatrixError(f"singular pivot during factorization ({exc}); "
                                      f"first structurally empty row: {row}", row=row) from exc
        diag = np.abs(self._lu.U.diagonal())
        if diag.size and (not np.all(np.isfinite(diag)) or diag.min() == 0.0):
            row = int(np.argmin(diag))
            raise SingularMatrixError(f"zero pivot at factor row {row}", row=row)

    def solve(self, B):
        B = np.asarray(B, dtype=float)
        if B.shape[0] != self.shape[0]:
            raise DimensionError(f"rhs has {B.shape[0]} rows, matrix has {self.shape[0]}")
        if B.size == 0:
            return np.zeros_like(B)
        X = self._lu.solve(np.ascontiguousarray(B))
        if not np.all(np.isfinite(X)):
            raise SingularMatrixError("non-finite solution, matrix numerically singular")
        return X


def sparse_lu_solve(A, B):
    """Solve ``A X = B`` for one or several right-hand sides."""
    return SparseLU(A).solve(B)


def dense_least_squares(A, b):
    """Minimum-norm minimizer of ``|A x - b|_2``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or b.shape[0] != A.shape[0]:
        raise DimensionError(f"incompatible shapes {A.shape} and {b.shape}")
    if A.shape[1] == 0:
        return np.zeros((0,) + b.shape[1:])
    x, *_ = sla.lstsq(A, b, lapack_driver="gelsd")
    return x


def sym_eig(G, rtol=1e-12):
    """Eigenpairs of a symmetric matrix, eigenvalues in descending order."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise DimensionError(f"expected a square matrix, got {G.shape}")
    scale = max(np.abs(G).max(), np.finfo(float).tiny) if G.size else 1.0
    if G.size and np.abs(G - G.T).max() > rtol * scale:
        raise LinAlgError("matrix is not symmetric within tolerance")
    lam, V = np.linalg.eigh(0.5 * (G + G.T))
    order = np.argsort(-lam, kind="stable")
    return lam[order], V[:, order]


def spd_sqrt_factor(K):
    """Return ``L`` with ``L.T @ L == K`` for a symmetric positive semidefinite ``K``."""
    lam, V = sym_eig(np.asarray(K.todense() if sp.issparse(K) else K), rtol=1e-10)
    lam = np.clip(lam, 0.0, None)
    return np.sqrt(lam)[:, None] * V.T
