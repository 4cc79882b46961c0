"""Partitioned and monolithic solvers for one coupled time step.

The SQP step minimizes ``1/2 |P_f u - P_s D d|^2 + delta/2 |g|_G^2`` subject to the
linearized fluid and solid equations.  Both subsystems are condensed to affine
maps of the control, leaving a small dense least-squares problem in ``g``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .linalg import SparseLU, dense_least_squares, spd_sqrt_factor
from .problem import FsiProblem, FsiState, StepData

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class DivergenceError(NonConvergenceError):
    pass


@dataclass(frozen=True)
class CouplingConfig:
    delta: float = 1e-8
    tol: float = 1e-6
    max_iter: int = 50
    jacobian: str = "exact"          # "exact" or "inexact"
    theta0: float = 0.05
    theta_min: float = 0.01
    theta_max: float = 1.0
    dtn_max_iter: int = 500
    newton_tol: float = 1e-10
    newton_max_iter: int = 30

    def __post_init__(self):
        if self.tol <= 0 or self.delta < 0:
            raise ValueError("need tol > 0 and delta >= 0")
        if self.jacobian not in ("exact", "inexact"):
            raise ValueError(f"unknown jacobian mode {self.jacobian!r}")


@dataclass
class StepResult:
    w: np.ndarray
    d: np.ndarray
    g: np.ndarray
    iterations: int
    converged: bool
    increments: list = field(default_factory=list)


@dataclass
class SensitivityBlocks:
    """``w = a_f + S_f g`` and ``d = a_s + S_s g`` for the linearized subsystems."""
    a_f: np.ndarray
    S_f: np.ndarray
    a_s: np.ndarray
    S_s: np.ndarray


def condense_sensitivities(K_f, K_s, E_f, E_s, P_s, R_f=None, R_s=None, J_fs=None) -> SensitivityBlocks:
    """Solve the linearized subsystems column-wise for every control dof.

    Solid: ``K_s d + E_s g = -R_s``.  Fluid: ``K_f w + J_fs P_s d + E_f g = -R_f``.
    One factorization per subsystem serves all right-hand sides.
    """
    n_f, n_s = K_f.shape[0], K_s.shape[0]
    R_f = np.zeros(n_f) if R_f is None else R_f
    R_s = np.zeros(n_s) if R_s is None else R_s
    lu_s = SparseLU(K_s)
    rhs_s = np.column_stack([-R_s, -E_s.toarray()])
    X_s = lu_s.solve(rhs_s)
    a_s, S_s = X_s[:, 0], X_s[:, 1:]
    rhs_f = np.column_stack([-R_f, -E_f.toarray()])
    if J_fs is not None:
        rhs_f -= J_fs @ (P_s @ X_s)
    X_f = SparseLU(K_f).solve(rhs_f)
    return SensitivityBlocks(X_f[:, 0], X_f[:, 1:], a_s, S_s)


def _converged(problem, dg, g, tol):
    inc = problem.control_norm(dg)
    ref = problem.control_norm(g)
    if ref > 0:
        return inc < tol * ref, inc / ref
    return inc < tol * np.sqrt(problem.interface_length), inc


def regularization_factor(problem):
    L = getattr(problem, "_L_G", None)
    if L is None:
        L = problem._L_G = spd_sqrt_factor(problem.K_G)
    return L


def solve_control(A, c, L, delta):
    """Minimizer of ``|A g - c|^2 + delta |L g|^2`` (minimum norm if rank deficient)."""
    if delta > 0:
        A = np.vstack([A, np.sqrt(delta) * L])
        c = np.concatenate([c, np.zeros(L.shape[0])])
    return dense_least_squares(A, c)


def sqp_time_step(problem: FsiProblem, state: FsiState, step: StepData, config: CouplingConfig,
                  guess=None) -> StepResult:
    w, d, g = (np.array(x) for x in (guess or (state.w, state.d, state.g)))
    exact = config.jacobian == "exact"
    L = regularization_factor(problem)
    Pf, Ps, n_u = problem.P_f, problem.P_s, problem.n_u
    incs = []
    for it in range(1, config.max_iter + 1):
        fs = problem.fluid_system(w, Ps @ d, step, shape=exact)
        R_s, K_s = problem.solid_system(d, step)
        blk = condense_sensitivities(fs.K, K_s, problem.E_f, problem.E_s, Ps, fs.R, R_s, fs.Jfs)
        av = step.alpha_v
        A = Pf @ blk.S_f[:n_u] - av * (Ps @ blk.S_s)
        c = -(Pf @ (w[:n_u] + blk.a_f[:n_u]) - Ps @ (av * (d + blk.a_s) + step.b_v))
        g_new = solve_control(A, c, L, config.delta)
        w = w + blk.a_f + blk.S_f @ g_new
        d = d + blk.a_s + blk.S_s @ g_new
        done, rel = _converged(problem, g_new - g, g_new, config.tol)
        incs.append(rel)
        g = g_new
        if done:
            return StepResult(w, d, g, it, True, incs)
    return StepResult(w, d, g, config.max_iter, False, incs)


def _newton(assemble, x, tol, max_iter, what):
    for it in range(1, max_iter + 1):
        R, K = assemble(x)
        dx = SparseLU(K).solve(-R)
        x = x + dx
        if np.abs(dx).max(initial=0.0) <= tol * (1.0 + np.abs(x).max(initial=0.0)):
            return x, it
    raise NonConvergenceError(f"{what} Newton did not converge in {max_iter} iterations")


def dtn_time_step(problem: FsiProblem, state: FsiState, step: StepData, config: CouplingConfig) -> StepResult:
    """Dirichlet-to-Neumann iterations with Aitken relaxation on the interface displacement."""
    m = problem.masks
    Ps, n_u = problem.P_s, problem.n_u
    w, d, g = state.w.copy(), state.d.copy(), state.g.copy()
    lam = Ps @ d
    dofs = np.union1d(m.f_dir, m.f_gamma)
    vals = np.zeros(n_u)
    sel = ~np.isin(m.f_gamma, m.f_dir)
    M_sel = problem.M_G.toarray()[sel]
    rows = m.f_gamma[sel]
    theta = config.theta0
    r_prev = None
    rnorms = []
    incs = []
    for it in range(1, config.dtn_max_iter + 1):
        vals[m.f_gamma] = step.alpha_v * lam + Ps @ step.b_v
        vals[m.f_dir] = step.u_dir
        dir_vals = vals[dofs]

        def fluid(x, lam=lam, dir_vals=dir_vals):
            fs = problem.fluid_system(x, lam, step, dir_dofs=dofs, dir_vals=dir_vals)
            return fs.R, fs.K

        w, _ = _newton(fluid, w, config.newton_tol, config.newton_max_iter, "fluid")
        R_raw = problem.fluid_system(w, lam, step, jacobian=False, dir_dofs=dofs, dir_vals=dir_vals).R_raw
        g_new = dense_least_squares(M_sel, R_raw[rows] / problem.fluid_scale)

        def solid(x, g_new=g_new):
            R, K = problem.solid_system(x, step)
            return R + problem.E_s @ g_new, K

        d, _ = _newton(solid, d, config.newton_tol, config.newton_max_iter, "solid")
        r = Ps @ d - lam
        rnorms.append(float(np.linalg.norm(r)))
        done, rel = _converged(problem, g_new - g, g_new, config.tol)
        incs.append(rel)
        g = g_new
        if done:
            return StepResult(w, d, g, it, True, incs)
        if len(rnorms) > 5 and rnorms[-1] > 10 * rnorms[-6]:
            raise DivergenceError(f"DtN interface residual grew from {rnorms[-6]:.3e} to {rnorms[-1]:.3e}",
                                  StepResult(w, d, g, it, False, incs))
        if r_prev is not None:
            dr = r - r_prev
            denom = dr @ dr
            if denom > 0:
                theta = float(np.clip(-theta * (r_prev @ dr) / denom, config.theta_min, config.theta_max))
        lam = lam + theta * r
        r_prev = r
    return StepResult(w, d, g, config.dtn_max_iter, False, incs)


def monolithic_time_step(problem: FsiProblem, state: FsiState, step: StepData, config: CouplingConfig) -> StepResult:
    """Newton on the full coupled system with the exact Jacobian (test oracle)."""
    m = problem.masks
    n_f, n_s, n_c, n_u = problem.n_f, problem.n_s, problem.n_c, problem.n_u
    Pf = sp.hstack([problem.P_f, sp.csr_matrix((n_c, problem.n_p))]).tocsr()
    Ps = problem.P_s
    both = np.flatnonzero(m.gamma_dirichlet_both)
    z = np.concatenate([state.w, state.d, state.g])
    for it in range(1, config.newton_max_iter + 1):
        w, d, g = z[:n_f], z[n_f:n_f + n_s], z[n_f + n_s:]
        fs = problem.fluid_system(w, Ps @ d, step, shape=True)
        R_s, K_s = problem.solid_system(d, step)
        R_c = Pf @ w - Ps @ (step.alpha_v * d + step.b_v)
        C = sp.hstack([Pf, -step.alpha_v * Ps, sp.csr_matrix((n_c, n_c))]).tolil()
        if both.size:
            R_c[both] = g[both]
            for j in both:
                C.rows[j] = [n_f + n_s + j]
                C.data[j] = [1.0]
        Jfs = sp.csr_matrix(fs.Jfs @ Ps) if fs.Jfs is not None else sp.csr_matrix((n_f, n_s))
        J = sp.bmat([[fs.K, Jfs, problem.E_f],
                     [None, K_s, problem.E_s],
                     [C.tocsr()[:, :n_f], C.tocsr()[:, n_f:n_f + n_s], C.tocsr()[:, n_f + n_s:]]],
                    format="csr")
        R = np.concatenate([fs.R + problem.E_f @ g, R_s + problem.E_s @ g, R_c])
        dz = SparseLU(J).solve(-R)
        z = z + dz
        if np.abs(dz).max() <= config.newton_tol * (1.0 + np.abs(z).max()):
            return StepResult(z[:n_f], z[n_f:n_f + n_s], z[n_f + n_s:], it, True)
    raise NonConvergenceError("monolithic Newton did not converge",
                              StepResult(z[:n_f], z[n_f:n_f + n_s], z[n_f + n_s:], it, False))


SOLVERS = {
    "sqp-exact": lambda pb, st, sd, cfg: sqp_time_step(pb, st, sd, _with(cfg, jacobian="exact")),
    "sqp-inexact": lambda pb, st, sd, cfg: sqp_time_step(pb, st, sd, _with(cfg, jacobian="inexact")),
    "dtn": dtn_time_step,
    "monolithic": monolithic_time_step,
}


def _with(cfg, **kw):
    return replace(cfg, **kw)


@dataclass
class StepRecord:
    k: int
    t: float
    iterations: int
    converged: bool
    wall: float


def integrate(problem: FsiProblem, state: FsiState, n_steps, solver="sqp-exact",
              config: CouplingConfig | None = None, callback=None, strict=True):
    """March ``n_steps`` steps; ``callback(state, record)`` sees every new state.

    Returns the final state and the list of step records.  With ``strict`` a
    non-converged step raises ``NonConvergenceError`` (the last good state is
    attached as ``exc.state``).
    """
    config = config or CouplingConfig()
    step_fn = SOLVERS[solver] if isinstance(solver, str) else solver
    records = []
    for _ in range(n_steps):
        step = problem.step_data(state)
        t0 = time.perf_counter()
        try:
            res = step_fn(problem, state, step, config)
        except NonConvergenceError as exc:
            exc.state = state
            exc.records = records
            raise
        rec = StepRecord(state.k + 1, step.t, res.iterations, res.converged, time.perf_counter() - t0)
        if not res.converged:
            log.warning("step %d did not converge in %d iterations", rec.k, res.iterations)
            if strict:
                exc = NonConvergenceError(f"step {rec.k} did not converge", res)
                exc.state = state
                exc.records = records
                raise exc
        state = problem.advance(state, step, res.w, res.d, res.g)
        records.append(rec)
        if callback is not None:
            callback(state, rec)
    return state, records
