"""Navier-Stokes residual and Jacobians on the ALE configuration.

All integrals are pulled back to the reference fluid mesh through the P2 map
``X + x_disp``.  The residual of the momentum equation reads, per test function v,

    mu (grad u + grad u^T) : grad v - p div v + rho ((u - w) . grad) u . v
    + rho/2 (div u) u . v + rho (alpha u + b) . v

and the continuity rows are ``-div u q``.  Loads are applied separately on the
reference configuration.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..mesh import InvertedElementError
from .basis import (TRI_POINTS, TRI_WEIGHTS, Scatter, geometry, p1_basis, p2_basis,
                    scatter_vector, vector_dofs)

_EYE = np.eye(2)


def _es(spec, *ops):
    return np.einsum(spec, *ops, optimize=True)


@dataclass
class FluidLinearization:
    R: np.ndarray                  # raw residual, length n_u + n_p
    K: sp.csr_matrix | None        # d R / d (u, p)
    Kx: sp.csr_matrix | None       # d R / d (mesh displacement), n_f x n_u
    Kw: sp.csr_matrix | None       # d R / d (mesh velocity), n_f x n_u


class FluidAssembler:
    def __init__(self, mesh, rho, mu):
        self.mesh = mesh
        self.rho = float(rho)
        self.mu = float(mu)
        self.n_u = 2 * mesh.n_nodes
        self.n_p = mesh.n_vertices
        self.n_f = self.n_u + self.n_p
        self.X = mesh.nodes[mesh.p2]
        self.udofs = vector_dofs(mesh.p2)
        self.pdofs = np.asarray(mesh.triangles, dtype=np.int64)
        self.edofs = np.hstack([self.udofs, self.n_u + self.pdofs])
        self.N, self.dN = p2_basis(TRI_POINTS)
        self.M, _ = p1_basis(TRI_POINTS)
        self.w = TRI_WEIGHTS
        self.det0, self.dNx0, _ = geometry(self.X, self.dN)
        self._full = Scatter(self.edofs, self.edofs, (self.n_f, self.n_f))
        self._shape = Scatter(self.edofs, self.udofs, (self.n_f, self.n_u))

    # --- helpers -----------------------------------------------------------
    def _geometry(self, xdisp):
        if xdisp is None:
            return self.det0, self.dNx0
        Xe = self.X + np.asarray(xdisp)[self.udofs].reshape(-1, 6, 2)
        det, dNx, _ = geometry(Xe, self.dN)
        bad = np.flatnonzero((det <= 0).any(axis=1))
        if bad.size:
            raise InvertedElementError(bad)
        return det, dNx

    def _interp(self, vec):
        if vec is None:
            return 0.0
        ve = np.asarray(vec)[self.udofs].reshape(-1, 6, 2)
        return np.einsum("qa,eai->eqi", self.N, ve)

    def quadrature_points(self):
        """Reference coordinates of the quadrature points, ``(ne, q, 2)``."""
        return np.einsum("qa,eai->eqi", self.N, self.X)

    # --- assembly -------------------------------------------------------------
    def linearize(self, u, p, xdisp=None, omega=None, alpha=0.0, b=None,
                  jacobian=True, shape=False):
        rho, mu = self.rho, self.mu
        det, dNx = self._geometry(xdisp)
        wJ = self.w[None, :] * det
        ue = np.asarray(u)[self.udofs].reshape(-1, 6, 2)
        pe = np.asarray(p)[self.pdofs]
        N, M = self.N, self.M
        uq = np.einsum("qa,eai->eqi", N, ue)
        A = np.einsum("eai,eqaj->eqij", ue, dNx)
        div = A[..., 0, 0] + A[..., 1, 1]
        pq = np.einsum("qc,ec->eq", M, pe)
        wq = self._interp(omega)
        bq = self._interp(b)
        uw = uq - wq
        sig = mu * (A + np.swapaxes(A, -1, -2)) - pq[..., None, None] * _EYE
        vec = rho * (np.einsum("eqj,eqij->eqi", uw, A) + 0.5 * div[..., None] * uq + alpha * uq + bq)
        SN = np.einsum("eqij,eqaj->eqai", sig, dNx)
        T = SN + vec[:, :, None, :] * N[None, :, :, None]
        ru = np.einsum("eq,eqai->eai", wJ, T)
        rp = -np.einsum("eq,eq,qc->ec", wJ, div, M)
        R = scatter_vector(self.edofs, np.hstack([ru.reshape(-1, 12), rp]), self.n_f)
        out = FluidLinearization(R, None, None, None)
        if not (jacobian or shape):
            return out

        NN = N[:, :, None] * N[:, None, :]
        conv = np.einsum("eqj,eqbj->eqb", uw, dNx)
        T2 = rho * _es("eq,qab,eqik->eaibk", wJ, NN, A)
        if jacobian:
            G = np.einsum("eqaj,eqbj->eqab", dNx, dNx)
            S = mu * G + rho * N[None, :, :, None] * conv[:, :, None, :] \
                + rho * (0.5 * div + alpha)[:, :, None, None] * NN[None]
            Kd = np.einsum("eq,eqab->eab", wJ, S)
            Kuu = Kd[:, :, None, :, None] * _EYE[None, None, :, None, :]
            Kuu = Kuu + mu * _es("eq,eqbi,eqak->eaibk", wJ, dNx, dNx) + T2 \
                + 0.5 * rho * _es("eq,qa,eqi,eqbk->eaibk", wJ, N, uq, dNx)
            Kup = -_es("eq,qc,eqai->eaic", wJ, M, dNx).reshape(-1, 12, 3)
            Ke = np.zeros((len(wJ), 15, 15))
            Ke[:, :12, :12] = Kuu.reshape(-1, 12, 12)
            Ke[:, :12, 12:] = Kup
            Ke[:, 12:, :12] = np.swapaxes(Kup, 1, 2)
            out.K = self._full.assemble(Ke)
        if shape:
            G = np.einsum("eqaj,eqbj->eqab", dNx, dNx)
            AtN = np.einsum("eqjc,eqaj->eqac", A, dNx)
            Kx = -mu * _es("eq,eqic,eqab->eaibc", wJ, A, G) \
                - mu * _es("eq,eqbi,eqac->eaibc", wJ, dNx, AtN) \
                - _es("eq,eqac,eqbi->eaibc", wJ, dNx, SN) \
                - rho * _es("eq,eqic,eqb,qa->eaibc", wJ, A, conv, N) \
                - 0.5 * rho * _es("eq,eqbc,eqi,qa->eaibc", wJ, AtN, uq, N) \
                + _es("eq,eqai,eqbc->eaibc", wJ, T, dNx)
            Kpx = _es("eq,qk,eqbc->ekbc", wJ, M, AtN - div[:, :, None, None] * dNx)
            Ke = np.concatenate([Kx.reshape(-1, 12, 12), Kpx.reshape(-1, 3, 12)], axis=1)
            out.Kx = self._shape.assemble(Ke)
            Kw = np.concatenate([-T2.reshape(-1, 12, 12), np.zeros((len(wJ), 3, 12))], axis=1)
            out.Kw = self._shape.assemble(Kw)
        return out

    def residual(self, u, p, **kw):
        return self.linearize(u, p, jacobian=False, shape=False, **kw).R

    # --- reference-configuration operators ----------------------------------
    def load_vector(self, fq):
        """``int f . v`` on the reference mesh for quadrature values ``fq (ne, q, 2)``."""
        fe = np.einsum("eq,qa,eqi->eai", self.w[None, :] * self.det0, self.N, fq)
        return scatter_vector(self.udofs, fe.reshape(-1, 12), self.n_u)

    def mass_matrix(self, xdisp=None):
        """Vector P2 mass matrix (without density) on the configuration ``X + xdisp``."""
        det, _ = self._geometry(xdisp)
        Me = np.einsum("eq,qa,qb->eab", self.w[None, :] * det, self.N, self.N)
        Ke = Me[:, :, None, :, None] * _EYE[None, None, :, None, :]
        return _scatter_u(self).assemble(Ke.reshape(-1, 12, 12))

    def divergence_matrix(self, xdisp=None):
        """``B`` with ``(B u)_q = -int div u q``, shape ``n_p x n_u``."""
        det, dNx = self._geometry(xdisp)
        Be = -_es("eq,qc,eqai->ecai", self.w[None, :] * det, self.M, dNx).reshape(-1, 3, 12)
        return Scatter(self.pdofs, self.udofs, (self.n_p, self.n_u)).assemble(Be)

    def viscous_dissipation(self, u, xdisp=None):
        """``int 2 mu eps(u) : eps(u)`` on the configuration ``X + xdisp``."""
        det, dNx = self._geometry(xdisp)
        ue = np.asarray(u)[self.udofs].reshape(-1, 6, 2)
        A = np.einsum("eai,eqaj->eqij", ue, dNx)
        eps = 0.5 * (A + np.swapaxes(A, -1, -2))
        return float(np.einsum("eq,eqij,eqij->", self.w[None, :] * det, eps, eps) * 2 * self.mu)


def _scatter_u(asm):
    sc = getattr(asm, "_uu_scatter", None)
    if sc is None:
        sc = asm._uu_scatter = Scatter(asm.udofs, asm.udofs, (asm.n_u, asm.n_u))
    return sc
