"""Quadrature rules, Lagrange bases and sparse scatter patterns."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

# 7-point, degree-5 rule on the reference triangle (weights sum to 1/2)
_A1, _B1 = 0.0597158717897698, 0.4701420641051151
_A2, _B2 = 0.7974269853530873, 0.1012865073234563
TRI_POINTS = np.array([
    [1 / 3, 1 / 3],
    [_B1, _B1], [_A1, _B1], [_B1, _A1],
    [_B2, _B2], [_A2, _B2], [_B2, _A2],
])
TRI_WEIGHTS = 0.5 * np.array([0.225] + [0.1323941527885062] * 3 + [0.1259391805448271] * 3)

# 3-point Gauss on [0, 1]
LINE_POINTS = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
LINE_WEIGHTS = np.array([5.0, 8.0, 5.0]) / 18.0

# local edges of a triangle and their parametrization xi(s) = start + s * direction
EDGE_START = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
EDGE_DIR = np.array([[1.0, 0.0], [-1.0, 1.0], [0.0, -1.0]])
# local P2 node triples (start, mid, end) per edge
EDGE_NODES = np.array([[0, 3, 1], [1, 4, 2], [2, 5, 0]])


def p2_basis(pts):
    """Values ``(q, 6)`` and reference gradients ``(q, 6, 2)`` of the P2 basis."""
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    N = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    L = (l0, l1, l2)
    dN = np.empty((len(x), 6, 2))
    for i in range(3):
        dN[:, i, :] = (4 * L[i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
        dN[:, 3 + k, :] = 4 * (L[i][:, None] * dl[j] + L[j][:, None] * dl[i])
    return N, dN


def p1_basis(pts):
    pts = np.atleast_2d(pts)
    x, y = pts[:, 0], pts[:, 1]
    M = np.column_stack([1 - x - y, x, y])
    dM = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(x), 3, 2)).copy()
    return M, dM


def line_p2(s):
    """P2 Lagrange basis on [0, 1] with nodes (0, 1/2, 1): values and derivatives."""
    s = np.asarray(s, dtype=float)
    vals = np.column_stack([2 * (s - 0.5) * (s - 1), 4 * s * (1 - s), 2 * s * (s - 0.5)])
    ders = np.column_stack([4 * s - 3, 4 - 8 * s, 4 * s - 1])
    return vals, ders


def vector_dofs(conn):
    """Node connectivity ``(ne, n)`` -> node-major vector dofs ``(ne, 2n)``."""
    conn = np.asarray(conn, dtype=np.int64)
    return np.stack([2 * conn, 2 * conn + 1], axis=-1).reshape(len(conn), -1)


def geometry(X, dN):
    """Jacobian data of the isoparametric map for element coordinates ``X (ne, 6, 2)``.

    Returns ``(detF (ne, q), dNx (ne, q, 6, 2), F (ne, q, 2, 2))``.
    """
    F = np.einsum("eai,qaj->eqij", X, dN)
    det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
    G = np.empty_like(F)
    G[..., 0, 0] = F[..., 1, 1]
    G[..., 0, 1] = -F[..., 0, 1]
    G[..., 1, 0] = -F[..., 1, 0]
    G[..., 1, 1] = F[..., 0, 0]
    G /= det[..., None, None]
    dNx = np.einsum("qak,eqkj->eqaj", dN, G)
    return det, dNx, F


class Scatter:
    """Fixed sparsity pattern for element matrices ``(ne, m, n)``.

    Assembly sums contributions with ``np.bincount`` in element order, which is
    deterministic and avoids re-sorting COO triplets at every call.
    """

    def __init__(self, row_dofs, col_dofs, shape):
        row_dofs = np.asarray(row_dofs, dtype=np.int64)
        col_dofs = np.asarray(col_dofs, dtype=np.int64)
        ne, m = row_dofs.shape
        n = col_dofs.shape[1]
        rows = np.repeat(row_dofs[:, :, None], n, axis=2).ravel()
        cols = np.repeat(col_dofs[:, None, :], m, axis=1).ravel()
        pattern = sp.csr_matrix((np.ones(rows.size), (rows, cols)), shape=shape)
        pattern.sum_duplicates()
        pattern.sort_indices()
        self.indptr = pattern.indptr
        self.indices = pattern.indices
        self.shape = shape
        key = rows * shape[1] + cols
        pkey = np.repeat(np.arange(shape[0], dtype=np.int64), np.diff(pattern.indptr)) * shape[1] + pattern.indices
        self.map = np.searchsorted(pkey, key)
        self.nnz = pattern.nnz

    def assemble(self, values):
        data = np.bincount(self.map, weights=np.asarray(values).ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def scatter_vector(dofs, values, n):
    return np.bincount(np.asarray(dofs).ravel(), weights=np.asarray(values).ravel(), minlength=n)
