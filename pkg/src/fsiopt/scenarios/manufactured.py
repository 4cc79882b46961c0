"""Manufactured solution on the unit-square fluid and the (0,1)x(1,1.25) solid.

The structure deformation is neglected: the ALE map is frozen to the identity
while both transmission conditions stay active.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fem.interface import edge_load
from ..mesh import BOTTOM, INTERFACE, LEFT, RIGHT, TOP, build_dof_masks, generate_structured_rect, retag
from ..metrics import QuadratureField, time_averaged_error
from ..params import MaterialParams
from ..problem import FsiProblem, FsiState, ProblemData
from ..time_stepping import TimeScheme

PARAMS = MaterialParams(rho_f=1.0, mu_f=0.013, rho_s=1.9, mu_s=3.0, lam_s=4.5)


def _arr(*a):
    return [np.asarray(v, dtype=float) for v in a]


def manufactured_fields(x, y, t, params=PARAMS):
    """Exact ``(u (n,2), p (n,), d (n,2))``."""
    x, y = _arr(x, y)
    X, Y = x + t, y + t
    s = np.sin(X + Y)
    u = np.stack([s, -s], axis=-1)
    p = -2 * params.mu_f * np.cos(X + Y) + 2 * params.mu_s * np.cos(X) * np.sin(Y)
    d = np.stack([np.sin(X) * np.sin(Y), np.cos(X) * np.cos(Y)], axis=-1)
    return u, p, d


def manufactured_derivatives(x, y, t):
    """Gradients of u and d, and the first two time derivatives of d."""
    x, y = _arr(x, y)
    X, Y = x + t, y + t
    c = np.cos(X + Y)
    gu = np.stack([np.stack([c, c], -1), np.stack([-c, -c], -1)], -2)
    sX, cX, sY, cY = np.sin(X), np.cos(X), np.sin(Y), np.cos(Y)
    gd = np.stack([np.stack([cX * sY, sX * cY], -1), np.stack([-sX * cY, -cX * sY], -1)], -2)
    s = np.sin(X + Y)
    vd = np.stack([s, -s], -1)
    ad = np.stack([2 * c, -2 * c], -1)
    return gu, gd, vd, ad


def manufactured_sources(x, y, t, params=PARAMS):
    """Body forces ``(f_f, f_s)`` of the strong fluid and solid equations."""
    x, y = _arr(x, y)
    X, Y = x + t, y + t
    s, c = np.sin(X + Y), np.cos(X + Y)
    rf, mf, rs, ms = params.rho_f, params.mu_f, params.rho_s, params.mu_s
    f_f = np.stack([2 * rf * c + 4 * mf * s - 2 * ms * np.sin(X) * np.sin(Y),
                    -2 * rf * c + 2 * ms * np.cos(X) * np.cos(Y)], -1)
    f_s = np.stack([2 * rs * c + 2 * ms * np.sin(X) * np.sin(Y),
                    -2 * rs * c + 2 * ms * np.cos(X) * np.cos(Y)], -1)
    return f_f, f_s


def fluid_traction(x, y, t, sign, params=PARAMS):
    """``sigma_f n`` on a vertical side with outward normal ``(sign, 0)``."""
    u, p, _ = manufactured_fields(x, y, t, params)
    c = np.cos(np.asarray(x) + np.asarray(y) + 2 * t)
    return sign * np.stack([2 * params.mu_f * c - p, np.zeros_like(p)], -1)


def solid_traction(x, y, t, sign, params=PARAMS):
    X, Y = np.asarray(x) + t, np.asarray(y) + t
    return sign * np.stack([2 * params.mu_s * np.cos(X) * np.sin(Y), np.zeros_like(X)], -1)


def interface_traction(x, y, t, params=PARAMS):
    """Exact control ``g = -sigma_s n_s`` on ``y = 1``."""
    X, Y = np.asarray(x) + t, np.asarray(y) + t
    return np.stack([np.zeros_like(X), -2 * params.mu_s * np.cos(X) * np.sin(Y)], -1)


def build_meshes(h):
    n = int(round(1.0 / h))
    if abs(n * h - 1.0) > 1e-12:
        raise ValueError(f"h = {h} does not divide the unit square")
    fluid = retag(generate_structured_rect((0, 1), (0, 1), nx=n, ny=n), {TOP: INTERFACE})
    ny = int(math.ceil(0.25 / h - 1e-9))
    solid = retag(generate_structured_rect((0, 1), (1, 1.25), nx=n, ny=ny), {BOTTOM: INTERFACE})
    return fluid, solid


@dataclass
class ManufacturedCase:
    problem: FsiProblem
    state0: FsiState
    fluid_q: QuadratureField
    solid_q: QuadratureField

    def errors_sq(self, state, metric="nodal"):
        """Squared H1 errors ``(fluid velocity, solid displacement)`` at ``state.t``.

        ``metric="nodal"`` measures the coefficient difference to the nodal
        interpolant of the exact fields in the discrete H1 gramians;
        ``metric="exact"`` integrates the true error with quadrature.
        """
        t = state.t
        if metric == "nodal":
            ex = exact_state(self.problem, t)
            eu = state.u - ex.u
            ed = state.d - ex.d
            Xu = self.problem.X_f[:self.problem.n_u, :self.problem.n_u] * self.problem.u_ref ** 2
            return float(eu @ (Xu @ eu)), float(ed @ (self.problem.X_s @ ed))
        p = self.problem.params
        ef = self.fluid_q.h1_error_sq(state.u, lambda x, y: manufactured_fields(x, y, t, p)[0],
                                      lambda x, y: manufactured_derivatives(x, y, t)[0])
        es = self.solid_q.h1_error_sq(state.d, lambda x, y: manufactured_fields(x, y, t, p)[2],
                                      lambda x, y: manufactured_derivatives(x, y, t)[1])
        return ef, es


def build_manufactured(h, dt, bdf_order=2, gamma=0.5, beta=0.25, params=PARAMS, u_ref=1.0):
    fluid, solid = build_meshes(h)
    masks = build_dof_masks(fluid, solid, INTERFACE, ((BOTTOM,), (TOP,)))
    fxy = fluid.nodes
    sxy = solid.nodes
    fq = QuadratureField(fluid)
    sq = QuadratureField(solid)
    fpts = fq.points.reshape(-1, 2)
    spts = sq.points.reshape(-1, 2)

    def fluid_dirichlet(t):
        u, _, _ = manufactured_fields(fxy[:, 0], fxy[:, 1], t, params)
        return u.reshape(-1)[masks.f_dir]

    def solid_dirichlet(t):
        _, _, d = manufactured_fields(sxy[:, 0], sxy[:, 1], t, params)
        return d.reshape(-1)[masks.s_dir]

    def fluid_load(t):
        f_f, _ = manufactured_sources(fpts[:, 0], fpts[:, 1], t, params)
        vec = pb.fasm.load_vector(f_f.reshape(fq.points.shape))
        vec += edge_load(fluid, LEFT, lambda x, y: fluid_traction(x, y, t, -1.0, params))
        vec += edge_load(fluid, RIGHT, lambda x, y: fluid_traction(x, y, t, 1.0, params))
        return vec

    def solid_load(t):
        _, f_s = manufactured_sources(spts[:, 0], spts[:, 1], t, params)
        vec = pb.sasm.load_vector(f_s.reshape(sq.points.shape))
        vec += edge_load(solid, LEFT, lambda x, y: solid_traction(x, y, t, -1.0, params))
        vec += edge_load(solid, RIGHT, lambda x, y: solid_traction(x, y, t, 1.0, params))
        return vec

    data = ProblemData(fluid_dirichlet, solid_dirichlet, fluid_load, solid_load)
    scheme = TimeScheme(dt=dt, gamma=gamma, beta=beta, bdf_order=bdf_order)
    pb = FsiProblem(fluid, solid, masks, params, scheme, data, frozen=True, u_ref=u_ref)
    state0 = exact_state(pb, 0.0)
    return ManufacturedCase(pb, state0, fq, sq)


def exact_state(problem: FsiProblem, t, k=0):
    """Nodal interpolant of the exact solution as a time-stepping state."""
    p = problem.params
    fxy = problem.fluid_mesh.nodes
    sxy = problem.solid_mesh.nodes
    u, _, _ = manufactured_fields(fxy[:, 0], fxy[:, 1], t, p)
    _, pr, _ = manufactured_fields(fxy[:problem.n_p, 0], fxy[:problem.n_p, 1], t, p)
    _, _, d = manufactured_fields(sxy[:, 0], sxy[:, 1], t, p)
    _, _, vd, ad = manufactured_derivatives(sxy[:, 0], sxy[:, 1], t)
    gxy = fxy[problem.masks.f_gamma_nodes]
    g = interface_traction(gxy[:, 0], gxy[:, 1], t, p)
    return FsiState(k, t, u.reshape(-1), pr, d.reshape(-1), vd.reshape(-1), ad.reshape(-1), g.reshape(-1))


def run_manufactured(h, dt, bdf_order=2, T=1.0, solver="sqp-exact", config=None, metric="nodal", **kw):
    """Integrate to ``T`` and return ``(E_f, E_s, records)``."""
    from ..solvers import integrate
    case = build_manufactured(h, dt, bdf_order=bdf_order, **kw)
    errs = []
    n = int(round(T / dt))
    _, records = integrate(case.problem, case.state0, n, solver, config,
                           callback=lambda st, rec: errs.append(case.errors_sq(st, metric)))
    errs = np.array(errs)
    return time_averaged_error(errs[:, 0]), time_averaged_error(errs[:, 1]), records
