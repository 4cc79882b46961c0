"""Interface operators: coupling matrices, trace gramians, mesh extension, forces."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..linalg import SingularMatrixError, SparseLU
from .basis import (EDGE_DIR, EDGE_START, LINE_POINTS, LINE_WEIGHTS, geometry, line_p2,
                    p1_basis, p2_basis)
from .solid import SolidAssembler


def _edge_geometry(coords, triples):
    """Quadrature data on straight P2 edges: values, arclength derivatives, weights."""
    vals, ders = line_p2(LINE_POINTS)
    a, b = coords[triples[:, 0]], coords[triples[:, 2]]
    length = np.linalg.norm(b - a, axis=1)
    return vals, ders, length


def edge_gramians(coords, triples, n_nodes):
    """Scalar 1D P2 mass and stiffness matrices over the edges ``triples``."""
    vals, ders, L = _edge_geometry(coords, triples)
    Me = np.einsum("q,qa,qb->ab", LINE_WEIGHTS, vals, vals)[None] * L[:, None, None]
    Ke = np.einsum("q,qa,qb->ab", LINE_WEIGHTS, ders, ders)[None] / L[:, None, None]
    rows = np.repeat(triples[:, :, None], 3, axis=2).ravel()
    cols = np.repeat(triples[:, None, :], 3, axis=1).ravel()
    M = sp.csr_matrix((Me.ravel(), (rows, cols)), shape=(n_nodes, n_nodes))
    K = sp.csr_matrix((Ke.ravel(), (rows, cols)), shape=(n_nodes, n_nodes))
    M.sum_duplicates()
    K.sum_duplicates()
    return M, K


def _vectorize(A):
    return sp.kron(A, sp.identity(2), format="csr")


def interface_gramians(masks, mesh):
    """Vector-valued interface mass ``M_G`` and H1-seminorm stiffness ``K_G`` (``n_c x n_c``)."""
    coords = mesh.nodes[masks.f_gamma_nodes]
    M, K = edge_gramians(coords, masks.gamma_edges, masks.n_gamma)
    return _vectorize(M), _vectorize(K)


def interface_h1_gramian(masks, mesh):
    return interface_gramians(masks, mesh)[1]


def assemble_coupling(masks, fluid_mesh, solid_mesh=None):
    """Coupling matrices ``(E_f, E_s)`` and the unsigned ``(Et_f, Et_s)``.

    ``Et(i, l) = int_G phi_l . phi_i``; ``E_f = -Et_f`` and ``E_s = +Et_s`` with
    Dirichlet rows removed.  ``E_f`` has ``n_u + n_p`` rows, the pressure rows empty.
    """
    M_G, _ = interface_gramians(masks, fluid_mesh)
    Pf = masks.P_f
    Ps = masks.P_s
    Et_f = (Pf.T @ M_G).tocsr()
    Et_s = (Ps.T @ M_G).tocsr()
    keep_f = np.ones(masks.n_u)
    keep_f[masks.f_dir] = 0.0
    keep_s = np.ones(masks.n_s)
    keep_s[masks.s_dir] = 0.0
    E_f = -sp.diags(keep_f) @ Et_f
    E_f = sp.vstack([E_f, sp.csr_matrix((masks.n_p, masks.n_c))]).tocsr()
    E_s = (sp.diags(keep_s) @ Et_s).tocsr()
    E_f.eliminate_zeros()
    E_s.eliminate_zeros()
    return E_f, E_s, Et_f, Et_s


def assemble_ale_extension(fluid_mesh, masks, lam_m, mu_m, stiffening=1.0):
    """Dense ``W`` (``n_u x n_c``): elastic extension of unit interface displacements.

    Element moduli scale as ``(d_min / d_e) ** stiffening`` with ``d_e`` the distance
    of the element centroid to the interface, so cells next to the structure move
    almost rigidly and large deflections do not invert them.
    """
    asm = SolidAssembler(fluid_mesh, 1.0, mu_m, lam_m, "linear")
    if stiffening and masks.n_c:
        gpts = fluid_mesh.nodes[masks.f_gamma_nodes]
        cent = fluid_mesh.nodes[fluid_mesh.p2[:, :3]].mean(axis=1)
        dist = np.min(np.linalg.norm(cent[:, None, :] - gpts[None], axis=2), axis=1)
        asm.wJ = asm.wJ * ((dist.min() / dist) ** stiffening)[:, None]
    K = asm.linearize(np.zeros(2 * fluid_mesh.n_nodes))[1]
    n_u = K.shape[0]
    bnodes = np.unique(np.concatenate([fluid_mesh.boundary_edges.ravel(), fluid_mesh.boundary_mid]))
    bdofs = np.column_stack([2 * bnodes, 2 * bnodes + 1]).ravel()
    inner = np.setdiff1d(np.arange(n_u), bdofs)
    gam = masks.f_gamma
    W = np.zeros((n_u, masks.n_c))
    W[gam, np.arange(masks.n_c)] = 1.0
    if inner.size:
        K = K.tocsr()
        try:
            lu = SparseLU(K[inner][:, inner])
        except SingularMatrixError as exc:
            raise SingularMatrixError(f"mesh-motion stiffness is singular, boundary under-constrained: {exc}") from exc
        W[inner] = -lu.solve(K[inner][:, gam].toarray())
    return W


def edge_load(mesh, tags, traction, n_dofs=None):
    """``int_E t . v ds`` on reference boundary edges with tags ``tags``.

    ``traction(x, y)`` returns an ``(n, 2)`` array.
    """
    _, trip = mesh.tag_edges(tags)
    n_dofs = n_dofs or 2 * mesh.n_nodes
    out = np.zeros(n_dofs)
    if not len(trip):
        return out
    vals, _, L = _edge_geometry(mesh.nodes, trip)
    a, b = mesh.nodes[trip[:, 0]], mesh.nodes[trip[:, 2]]
    pts = a[:, None, :] + LINE_POINTS[None, :, None] * (b - a)[:, None, :]
    t = np.asarray(traction(pts[..., 0].ravel(), pts[..., 1].ravel())).reshape(len(trip), -1, 2)
    fe = np.einsum("e,q,qa,eqi->eai", L, LINE_WEIGHTS, vals, t)
    dofs = np.stack([2 * trip, 2 * trip + 1], axis=-1)
    np.add.at(out, dofs.ravel(), fe.ravel())
    return out


class ForceEvaluator:
    """Force exerted by the fluid on the structure across the interface.

    ``F = int_G sigma_f n ds`` on the deformed configuration, with ``n`` the unit
    normal pointing from the structure into the fluid.
    """

    def __init__(self, fluid_mesh, masks, mu):
        self.mu = float(mu)
        own = masks.f_gamma_owner
        self.elem = own[:, 0]
        self.ledge = own[:, 1]
        self.p2 = np.asarray(fluid_mesh.p2)[self.elem]
        self.tri = np.asarray(fluid_mesh.triangles)[self.elem]
        self.X = fluid_mesh.nodes[self.p2]
        pts = EDGE_START[self.ledge][:, None, :] + LINE_POINTS[None, :, None] * EDGE_DIR[self.ledge][:, None, :]
        flat = pts.reshape(-1, 2)
        _, dN = p2_basis(flat)
        M, _ = p1_basis(flat)
        ne = len(self.elem)
        self.dN = dN.reshape(ne, 3, 6, 2)
        self.M = M.reshape(ne, 3, 3)

    def __call__(self, u, p, xdisp=None):
        if not len(self.elem):
            return 0.0, 0.0
        udofs = np.stack([2 * self.p2, 2 * self.p2 + 1], axis=-1)
        Xe = self.X if xdisp is None else self.X + np.asarray(xdisp)[udofs]
        ue = np.asarray(u)[udofs]
        pe = np.asarray(p)[self.tri]
        F = np.einsum("eai,eqaj->eqij", Xe, self.dN)
        det = F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]
        G = np.stack([np.stack([F[..., 1, 1], -F[..., 0, 1]], -1),
                      np.stack([-F[..., 1, 0], F[..., 0, 0]], -1)], -2) / det[..., None, None]
        dNx = np.einsum("eqak,eqkj->eqaj", self.dN, G)
        A = np.einsum("eai,eqaj->eqij", ue, dNx)
        pq = np.einsum("eqc,ec->eq", self.M, pe)
        sig = self.mu * (A + np.swapaxes(A, -1, -2)) - pq[..., None, None] * np.eye(2)
        t = np.einsum("eqij,ej->eqi", F, EDGE_DIR[self.ledge])
        # fluid-outward normal times ds is (t_y, -t_x); the structure normal is its negative
        nds = np.stack([-t[..., 1], t[..., 0]], axis=-1)
        force = np.einsum("q,eqij,eqj->i", LINE_WEIGHTS, sig, nds)
        return float(force[0]), float(force[1])
