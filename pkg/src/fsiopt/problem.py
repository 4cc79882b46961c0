"""The fully discrete coupled problem at one time step.

Unknowns are the fluid state ``w = (u, p)``, the solid displacement ``d`` and the
interface control ``g``.  The discrete equations are

    R_f(w, P_s d) + E_f g = 0,   R_s(d) + E_s g = 0,   P_f u = P_s (alpha_v d + b_v)

where the fluid residual is evaluated on the configuration ``X + W P_s d``.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .fem.fluid import FluidAssembler
from .fem.interface import (ForceEvaluator, assemble_ale_extension, assemble_coupling,
                            interface_gramians)
from .fem.solid import SolidAssembler, h1_gramian, p1_mass
from .params import MaterialParams
from .time_stepping import TimeScheme, bdf_affine, newmark_affine


@dataclass
class FsiState:
    k: int
    t: float
    u: np.ndarray
    p: np.ndarray
    d: np.ndarray
    v: np.ndarray
    a: np.ndarray
    g: np.ndarray
    u_prev: np.ndarray | None = None
    d_prev: np.ndarray | None = None

    @property
    def w(self):
        return np.concatenate([self.u, self.p])

    def copy(self):
        return replace(self, **{f: (None if getattr(self, f) is None else np.array(getattr(self, f)))
                               for f in ("u", "p", "d", "v", "a", "g", "u_prev", "d_prev")})


@dataclass
class StepData:
    """Time-level data of step ``k -> k+1`` (all affine coefficients and boundary data)."""
    k: int
    t: float
    alpha_f: float
    b_f: np.ndarray
    alpha_v: float
    b_v: np.ndarray
    alpha_a: float
    b_a: np.ndarray
    alpha_w: float
    b_w: np.ndarray
    u_dir: np.ndarray
    d_dir: np.ndarray
    f_load: np.ndarray
    s_load: np.ndarray


@dataclass
class ProblemData:
    """Time-dependent boundary values and loads; ``None`` means homogeneous."""
    fluid_dirichlet: Callable | None = None     # t -> values at masks.f_dir
    solid_dirichlet: Callable | None = None     # t -> values at masks.s_dir
    fluid_load: Callable | None = None          # t -> vector of length n_u
    solid_load: Callable | None = None          # t -> vector of length n_s
    ramp: Callable | None = None                # c(t) when fluid_dirichlet(t) = c(t) * fixed profile


@dataclass
class FluidSystem:
    R: np.ndarray                 # residual with Dirichlet rows replaced
    K: sp.csr_matrix | None
    Jfs: np.ndarray | None        # d R / d (interface trace of d), n_f x n_c
    R_raw: np.ndarray             # residual before Dirichlet replacement


def dirichlet_rows(K, dofs):
    """Replace rows ``dofs`` of ``K`` by identity rows."""
    n = K.shape[0]
    keep = np.ones(n)
    keep[dofs] = 0.0
    out = sp.diags(keep) @ K + sp.diags(1.0 - keep, shape=K.shape)
    out = out.tocsr()
    out.eliminate_zeros()
    return out


class FsiProblem:
    def __init__(self, fluid_mesh, solid_mesh, masks, params: MaterialParams, scheme: TimeScheme,
                 data: ProblemData | None = None, frozen=False, fluid_scale=1.0, u_ref=1.0):
        self.fluid_mesh = fluid_mesh
        self.solid_mesh = solid_mesh
        self.masks = masks
        self.params = params
        self.scheme = scheme
        self.data = data or ProblemData()
        self.frozen = bool(frozen)
        self.fluid_scale = float(fluid_scale)
        self.u_ref = float(u_ref)
        self.fasm = FluidAssembler(fluid_mesh, params.rho_f, params.mu_f)
        self.sasm = SolidAssembler(solid_mesh, params.rho_s, params.mu_s, params.lam_s, params.law)
        E_f, E_s, self.Et_f, self.Et_s = assemble_coupling(masks, fluid_mesh, solid_mesh)
        self.E_f = (self.fluid_scale * E_f).tocsr()
        self.E_s = E_s
        self.M_G, self.K_G = interface_gramians(masks, fluid_mesh)
        self.X_c = (self.M_G + self.K_G).tocsr()
        self.W = None if self.frozen else assemble_ale_extension(fluid_mesh, masks, params.lam_m, params.mu_m)
        self.P_f = masks.P_f
        self.P_s = masks.P_s
        self.forces = ForceEvaluator(fluid_mesh, masks, params.mu_f)
        self.M_s = (params.rho_s * self.sasm.mass).tocsr()
        self.interface_length = float(self.M_G.sum()) / 2
        self._X_f = None
        self._X_s = None

    # --- sizes -------------------------------------------------------------
    @property
    def n_u(self):
        return self.masks.n_u

    @property
    def n_p(self):
        return self.masks.n_p

    @property
    def n_f(self):
        return self.masks.n_f

    @property
    def n_s(self):
        return self.masks.n_s

    @property
    def n_c(self):
        return self.masks.n_c

    # --- inner products ------------------------------------------------------
    @property
    def X_f(self):
        """Fluid gramian: scaled H1 velocity plus scaled L2 pressure."""
        if self._X_f is None:
            U = self.u_ref
            Xu = h1_gramian(self.fluid_mesh) / U ** 2
            Xp = p1_mass(self.fluid_mesh) / (self.params.rho_f * U ** 2) ** 2
            self._X_f = sp.block_diag([Xu, Xp], format="csr")
        return self._X_f

    @property
    def X_s(self):
        if self._X_s is None:
            self._X_s = h1_gramian(self.solid_mesh)
        return self._X_s

    def control_norm(self, g):
        g = np.asarray(g)
        return float(np.sqrt(max(g @ (self.X_c @ g), 0.0)))

    # --- time levels -------------------------------------------------------------
    def step_data(self, state: FsiState) -> StepData:
        sch = self.scheme
        k = state.k
        t = state.t + sch.dt
        alpha_f, b_f = bdf_affine(sch, k, state.u, state.u_prev)
        av, bv, aa, ba = newmark_affine(sch, k, state.d, state.v, state.a)
        if sch.ale_velocity == "newmark":
            alpha_w, b_w = av, self.P_s @ bv
        else:
            alpha_w, bd = bdf_affine(sch, k, state.d, state.d_prev)
            b_w = self.P_s @ bd
        m = self.masks
        dat = self.data
        u_dir = np.zeros(len(m.f_dir)) if dat.fluid_dirichlet is None else np.asarray(dat.fluid_dirichlet(t), float)
        d_dir = np.zeros(len(m.s_dir)) if dat.solid_dirichlet is None else np.asarray(dat.solid_dirichlet(t), float)
        f_load = np.zeros(m.n_u) if dat.fluid_load is None else np.asarray(dat.fluid_load(t), float)
        s_load = np.zeros(m.n_s) if dat.solid_load is None else np.asarray(dat.solid_load(t), float)
        return StepData(k, t, alpha_f, b_f, av, bv, aa, ba, alpha_w, b_w, u_dir, d_dir, f_load, s_load)

    def advance(self, state: FsiState, step: StepData, w, d, g) -> FsiState:
        u, p = w[:self.n_u], w[self.n_u:]
        return FsiState(k=state.k + 1, t=step.t, u=np.array(u), p=np.array(p), d=np.array(d),
                        v=step.alpha_v * d + step.b_v, a=step.alpha_a * d + step.b_a,
                        g=np.array(g), u_prev=np.array(state.u), d_prev=np.array(state.d))

    # --- residuals ----------------------------------------------------------------
    def mesh_motion(self, dG, step: StepData):
        """Mesh displacement and velocity for the interface displacement trace ``dG``."""
        if self.frozen:
            return None, None
        return self.W @ dG, self.W @ (step.alpha_w * dG + step.b_w)

    def fluid_system(self, w, dG, step: StepData, jacobian=True, shape=False,
                     dir_dofs=None, dir_vals=None) -> FluidSystem:
        n_u = self.n_u
        u, p = w[:n_u], w[n_u:]
        xdisp, omega = self.mesh_motion(dG, step)
        shape = shape and not self.frozen
        lin = self.fasm.linearize(u, p, xdisp=xdisp, omega=omega, alpha=step.alpha_f, b=step.b_f,
                                  jacobian=jacobian, shape=shape)
        s = self.fluid_scale
        R_raw = s * lin.R
        R_raw[:n_u] -= s * step.f_load
        if dir_dofs is None:
            dir_dofs, dir_vals = self.masks.f_dir, step.u_dir
        R = R_raw.copy()
        R[dir_dofs] = u[dir_dofs] - dir_vals
        K = dirichlet_rows(s * lin.K, dir_dofs) if jacobian else None
        Jfs = None
        if shape:
            Jfs = s * (lin.Kx @ self.W + step.alpha_w * (lin.Kw @ self.W))
            Jfs[dir_dofs] = 0.0
        return FluidSystem(R, K, Jfs, R_raw)

    def solid_system(self, d, step: StepData, jacobian=True):
        R, K = self.sasm.linearize(d, jacobian=jacobian)
        R = R + self.M_s @ (step.alpha_a * d + step.b_a) - step.s_load
        sd = self.masks.s_dir
        R[sd] = d[sd] - step.d_dir
        if jacobian:
            K = dirichlet_rows(K + step.alpha_a * self.M_s, sd)
        return R, K

    def constraint(self, u, d, step: StepData):
        return self.P_f @ u - self.P_s @ (step.alpha_v * d + step.b_v)

    def coupled_residual(self, w, d, g, step: StepData):
        """Residual blocks of the full coupled system at ``(w, d, g)``."""
        Rf = self.fluid_system(w, self.P_s @ d, step, jacobian=False).R + self.E_f @ g
        Rs = self.solid_system(d, step, jacobian=False)[0] + self.E_s @ g
        return Rf, Rs, self.constraint(w[:self.n_u], d, step)

    # --- diagnostics ----------------------------------------------------------------
    def drag_lift(self, state: FsiState):
        xdisp = None if self.frozen else self.W @ (self.P_s @ state.d)
        return self.forces(state.u, state.p, xdisp)

    def energies(self, state: FsiState):
        """Kinetic fluid, kinetic solid and elastic energy, the viscous dissipation rate
        and the power of the volume loads."""
        xdisp = None if self.frozen else self.W @ (self.P_s @ state.d)
        Mf = self.fasm.mass_matrix(xdisp)
        dat = self.data
        power = 0.0
        if dat.solid_load is not None:
            power += float(np.asarray(dat.solid_load(state.t)) @ state.v)
        if dat.fluid_load is not None:
            power += float(np.asarray(dat.fluid_load(state.t)) @ state.u)
        return {
            "kinetic_fluid": 0.5 * self.params.rho_f * float(state.u @ (Mf @ state.u)),
            "kinetic_solid": 0.5 * float(state.v @ (self.M_s @ state.v)),
            "elastic": self.sasm.strain_energy(state.d),
            "dissipation_rate": self.fasm.viscous_dissipation(state.u, xdisp),
            "load_power": power,
        }

    def zero_state(self, t=0.0):
        m = self.masks
        z = np.zeros
        return FsiState(0, t, z(m.n_u), z(m.n_p), z(m.n_s), z(m.n_s), z(m.n_s), z(m.n_c))
