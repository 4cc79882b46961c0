"""Solid residual, tangent stiffness, mass matrix and strain energy (Lagrangian frame)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .basis import TRI_POINTS, TRI_WEIGHTS, Scatter, geometry, p2_basis, scatter_vector, vector_dofs

_EYE = np.eye(2)


class SolidAssembler:
    """Internal forces ``int P(d) : grad w`` for the linear or Saint Venant-Kirchhoff law."""

    def __init__(self, mesh, rho, mu, lam, law="linear"):
        if law not in ("linear", "stvk"):
            raise ValueError(f"unknown solid law {law!r}")
        self.mesh = mesh
        self.rho, self.mu, self.lam, self.law = float(rho), float(mu), float(lam), law
        self.n_s = 2 * mesh.n_nodes
        self.X = mesh.nodes[mesh.p2]
        self.dofs = vector_dofs(mesh.p2)
        self.N, dN = p2_basis(TRI_POINTS)
        det, self.dNx, _ = geometry(self.X, dN)
        self.wJ = TRI_WEIGHTS[None, :] * det
        self._scatter = Scatter(self.dofs, self.dofs, (self.n_s, self.n_s))
        Me = np.einsum("eq,qa,qb->eab", self.wJ, self.N, self.N)
        Me = (Me[:, :, None, :, None] * _EYE[None, None, :, None, :]).reshape(-1, 12, 12)
        self.mass = self._scatter.assemble(Me)          # without density

    def _grad(self, d):
        de = np.asarray(d)[self.dofs].reshape(-1, 6, 2)
        return np.einsum("eai,eqaj->eqij", de, self.dNx)

    def stress(self, H):
        """First Piola-Kirchhoff stress for displacement gradients ``H``."""
        mu, lam = self.mu, self.lam
        if self.law == "linear":
            tr = H[..., 0, 0] + H[..., 1, 1]
            return mu * (H + np.swapaxes(H, -1, -2)) + lam * tr[..., None, None] * _EYE
        F = H + _EYE
        E = 0.5 * (np.einsum("...ki,...kj->...ij", F, F) - _EYE)
        trE = E[..., 0, 0] + E[..., 1, 1]
        S = 2 * mu * E + lam * trE[..., None, None] * _EYE
        return np.einsum("...ik,...kj->...ij", F, S)

    def linearize(self, d, jacobian=True):
        """Raw internal force vector and (optionally) tangent stiffness."""
        H = self._grad(d)
        P = self.stress(H)
        re = np.einsum("eq,eqij,eqaj->eai", self.wJ, P, self.dNx)
        R = scatter_vector(self.dofs, re.reshape(-1, 12), self.n_s)
        if not jacobian:
            return R, None
        mu, lam, dNx, wJ = self.mu, self.lam, self.dNx, self.wJ
        if self.law == "linear":
            G = np.einsum("eqaj,eqbj->eqab", dNx, dNx)
            Ke = mu * np.einsum("eq,eqab->eab", wJ, G)[:, :, None, :, None] * _EYE[None, None, :, None, :]
            Ke = Ke + mu * np.einsum("eq,eqbi,eqak->eaibk", wJ, dNx, dNx, optimize=True) \
                + lam * np.einsum("eq,eqai,eqbk->eaibk", wJ, dNx, dNx, optimize=True)
        else:
            F = H + _EYE
            E = 0.5 * (np.einsum("eqki,eqkj->eqij", F, F) - _EYE)
            trE = E[..., 0, 0] + E[..., 1, 1]
            S = 2 * mu * E + lam * trE[..., None, None] * _EYE
            FN = np.einsum("eqij,eqaj->eqai", F, dNx)
            FFt = np.einsum("eqik,eqjk->eqij", F, F)
            G = np.einsum("eqaj,eqbj->eqab", dNx, dNx)
            geo = np.einsum("eq,eqaj,eqjk,eqbk->eab", wJ, dNx, S, dNx, optimize=True)
            Ke = geo[:, :, None, :, None] * _EYE[None, None, :, None, :]
            Ke = Ke + mu * np.einsum("eq,eqik,eqab->eaibk", wJ, FFt, G, optimize=True) \
                + mu * np.einsum("eq,eqbi,eqak->eaibk", wJ, FN, FN, optimize=True) \
                + lam * np.einsum("eq,eqai,eqbk->eaibk", wJ, FN, FN, optimize=True)
        return R, self._scatter.assemble(Ke.reshape(-1, 12, 12))

    def internal_force(self, d):
        return self.linearize(d, jacobian=False)[0]

    def strain_energy(self, d):
        """``int W(d)`` over the reference solid."""
        H = self._grad(d)
        if self.law == "linear":
            E = 0.5 * (H + np.swapaxes(H, -1, -2))
        else:
            F = H + _EYE
            E = 0.5 * (np.einsum("...ki,...kj->...ij", F, F) - _EYE)
        trE = E[..., 0, 0] + E[..., 1, 1]
        W = self.mu * np.einsum("...ij,...ij->...", E, E) + 0.5 * self.lam * trE ** 2
        return float(np.sum(self.wJ * W))

    def quadrature_points(self):
        return np.einsum("qa,eai->eqi", self.N, self.X)

    def load_vector(self, fq):
        fe = np.einsum("eq,qa,eqi->eai", self.wJ, self.N, fq)
        return scatter_vector(self.dofs, fe.reshape(-1, 12), self.n_s)


def h1_gramian(mesh, ncomp=2, weight_l2=1.0, weight_grad=1.0):
    """P2 gramian ``weight_l2 * M + weight_grad * K`` for a ``ncomp``-vector field."""
    N, dN = p2_basis(TRI_POINTS)
    X = mesh.nodes[mesh.p2]
    det, dNx, _ = geometry(X, dN)
    wJ = TRI_WEIGHTS[None, :] * det
    Ge = weight_l2 * np.einsum("eq,qa,qb->eab", wJ, N, N) \
        + weight_grad * np.einsum("eq,eqaj,eqbj->eab", wJ, dNx, dNx)
    conn = np.asarray(mesh.p2, dtype=np.int64)
    if ncomp == 1:
        return Scatter(conn, conn, (mesh.n_nodes,) * 2).assemble(Ge)
    Ke = (Ge[:, :, None, :, None] * np.eye(ncomp)[None, None, :, None, :]).reshape(len(conn), 6 * ncomp, 6 * ncomp)
    dofs = vector_dofs(conn)
    return Scatter(dofs, dofs, (2 * mesh.n_nodes,) * 2).assemble(Ke)


def p1_mass(mesh):
    from .basis import p1_basis
    M, _ = p1_basis(TRI_POINTS)
    _, dN = p2_basis(TRI_POINTS)
    det, _, _ = geometry(mesh.nodes[mesh.p2], dN)
    Me = np.einsum("eq,qa,qb->eab", TRI_WEIGHTS[None, :] * det, M, M)
    tri = np.asarray(mesh.triangles, dtype=np.int64)
    return Scatter(tri, tri, (mesh.n_vertices,) * 2).assemble(Me)


def block_diag(*mats):
    return sp.block_diag(mats, format="csr")
