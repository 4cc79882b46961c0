"""Projection-based reduced models for the coupled problem.

Offline: POD of lifted snapshots, enrichment of the state spaces with control
sensitivities, and an empirical test space built from Riesz representers of the
fluid Jacobian.  Online: the SQP step of the full model with every block
projected (or the fluid kept at full order in the hybrid mode).
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinAlgError, SparseLU, sym_eig
from .mesh import InvertedElementError
from .metrics import relative_error
from .problem import FsiProblem, FsiState
from .solvers import (CouplingConfig, DivergenceError, NonConvergenceError, _converged,
                      regularization_factor, solve_control)

log = logging.getLogger(__name__)


class RankDeficiencyError(NonConvergenceError):
    pass


@dataclass
class ReducedBasis:
    Z: np.ndarray
    eigenvalues: np.ndarray
    inner: str = ""
    n_pod: int = 0

    @property
    def n(self):
        return self.Z.shape[1]

    @property
    def n_dofs(self):
        return self.Z.shape[0]


def _apply(X, V):
    return X @ V if X is not None else V


def mgs(Z, X=None, passes=2):
    """Modified Gram-Schmidt in the ``X`` inner product; drops numerically dependent columns."""
    Z = np.array(Z, dtype=float)
    keep = []
    for j in range(Z.shape[1]):
        v = Z[:, j]
        n0 = np.sqrt(max(v @ _apply(X, v), 0.0))
        for _ in range(passes):
            for i in keep:
                v = v - (Z[:, i] @ _apply(X, v)) * Z[:, i]
        nv = np.sqrt(max(v @ _apply(X, v), 0.0))
        if n0 == 0 or nv <= 1e-10 * n0:
            continue
        Z[:, j] = v / nv
        keep.append(j)
    return Z[:, keep]


def energy_modes(eigenvalues, tol):
    """Smallest ``n`` whose leading eigenvalues hold a ``1 - tol`` share of the total."""
    lam = np.clip(np.asarray(eigenvalues, dtype=float), 0.0, None)
    total = lam.sum()
    if total <= 0:
        return 0
    cum = np.cumsum(lam)
    n = int(np.searchsorted(cum, (1.0 - tol) * total * (1 - 1e-14))) + 1
    return min(n, int(np.count_nonzero(lam)))


def pod(S, X=None, tol=None, n=None, inner="", zero_rtol=1e-13):
    """POD by the method of snapshots in the inner product ``X`` (identity if ``None``).

    Either ``tol`` (energy criterion) or ``n`` (fixed size) selects the number of modes.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim == 1:
        S = S[:, None]
    XS = _apply(X, S)
    G = S.T @ XS
    G = 0.5 * (G + G.T)
    lam, V = sym_eig(G, rtol=1e-10)
    lam = np.clip(lam, 0.0, None)
    if not lam.size or lam[0] <= 0:
        warnings.warn("snapshot set carries no energy: empty basis", stacklevel=2)
        return ReducedBasis(np.zeros((S.shape[0], 0)), lam, inner, 0)
    positive = int(np.count_nonzero(lam > zero_rtol * lam[0]))
    if n is None:
        n = energy_modes(lam[:positive], 0.0 if tol is None else tol)
    if n > positive:
        warnings.warn(f"requested {n} modes but the snapshot span has dimension {positive}", stacklevel=2)
        n = positive
    Z = S @ (V[:, :n] / np.sqrt(lam[:n]))
    Gz = Z.T @ _apply(X, Z)
    if n and np.abs(Gz - np.eye(n)).max() > 1e-12:
        Z = mgs(Z, X)
    return ReducedBasis(Z, lam, inner, Z.shape[1])


def project(Z, X, V):
    """``X``-orthogonal projection of the columns of ``V`` onto the span of orthonormal ``Z``."""
    if Z.shape[1] == 0:
        return np.zeros_like(V)
    return Z @ (Z.T @ _apply(X, V))


def projection_errors(Z, X, V):
    """Relative ``X``-norm projection errors of the columns of ``V``."""
    R = V - project(Z, X, V)
    num = np.sqrt(np.clip(np.einsum("ij,ij->j", R, _apply(X, R)), 0, None))
    den = np.sqrt(np.clip(np.einsum("ij,ij->j", V, _apply(X, V)), 0, None))
    return np.divide(num, den, out=np.zeros_like(num), where=den > 0)


def enrich(basis: ReducedBasis, perturbed, X, tol_en):
    """Append POD modes of the out-of-space part of ``perturbed`` until every
    column is reproduced to relative error below ``tol_en``."""
    Z0 = basis.Z
    if perturbed.shape[1] == 0 or tol_en >= 1.0:
        return basis, 0
    rem = perturbed - project(Z0, X, perturbed)
    den = np.sqrt(np.clip(np.einsum("ij,ij->j", perturbed, _apply(X, perturbed)), 0, None))
    live = den > 0
    if not live.any():
        return basis, 0
    en = pod(rem[:, live], X, tol=0.0)
    C = en.Z.T @ _apply(X, rem[:, live])
    r2 = np.clip(np.einsum("ij,ij->j", rem[:, live], _apply(X, rem[:, live])), 0, None)
    resid = r2[None, :] - np.cumsum(np.vstack([np.zeros(C.shape[1]), C ** 2]), axis=0)
    err = np.sqrt(np.clip(resid, 0, None)) / den[live][None, :]
    ok = np.flatnonzero(err.max(axis=1) < tol_en)
    n_en = int(ok[0]) if ok.size else en.n
    Z = mgs(np.hstack([Z0, en.Z[:, :n_en]]), X)
    return ReducedBasis(Z, basis.eigenvalues, basis.inner, basis.n_pod), n_en


# --- snapshots -------------------------------------------------------------------

@dataclass
class SnapshotSet:
    """A full-order trajectory ``states[0..K]`` and the sampled step indices."""
    states: list
    samples: np.ndarray
    ramp: object = None            # c(t) of separable Dirichlet data, or None

    @property
    def K(self):
        return len(self.states) - 1


class FluidLift:
    """``w_bar(t) = c_bar(t) * mean(w^(k))`` for separable data, else ``w^(0)``."""

    def __init__(self, snaps: SnapshotSet):
        ramp = snaps.ramp
        w0 = snaps.states[0].w
        if ramp is None:
            self.mean = None
            self.w0 = w0
            return
        ws = np.array([snaps.states[k].w for k in snaps.samples])
        cs = np.array([ramp(snaps.states[k].t) for k in snaps.samples])
        self.mean = ws.mean(axis=0)
        self.scale = len(cs) / cs.sum()
        self.ramp = ramp
        self.w0 = w0

    def __call__(self, t):
        if self.mean is None:
            return self.w0
        return self.scale * self.ramp(t) * self.mean


def step_data_at(problem, snaps: SnapshotSet, k):
    """Step data of the step that produced ``states[k]``."""
    return problem.step_data(snaps.states[k - 1])


# --- offline ------------------------------------------------------------------------

@dataclass
class RomConfig:
    tol_pod_f: float = 1e-5
    tol_pod_s: float = 1e-5
    tol_pod_c: float = 1e-5
    tol_en: float = 0.1
    enrich: bool = True
    jes_factor: float = 2.0
    fluid_model: str = "lspg"          # "lspg" (inexact LSPG), "pg-lagged", "galerkin"
    test_samples_max: int = 3000       # cap on Riesz representers for the test space
    rank_rtol: float = 1e-6
    blowup: float = 1e3


@dataclass
class ReducedSpaces:
    fluid: ReducedBasis
    solid: ReducedBasis
    control: ReducedBasis
    test: np.ndarray | None
    lift: FluidLift
    d0: np.ndarray
    n_en_f: int = 0
    n_en_s: int = 0
    info: dict = field(default_factory=dict)


def _free_fluid(problem):
    free = np.ones(problem.n_f, bool)
    free[problem.masks.f_dir] = False
    return free


def build_spaces(problem: FsiProblem, snaps: SnapshotSet, cfg: RomConfig, fluid=True) -> ReducedSpaces:
    states = snaps.states
    ks = np.asarray(snaps.samples)
    lift = FluidLift(snaps)
    d0 = states[0].d
    Sc = np.column_stack([states[k].g for k in ks])
    Ss = np.column_stack([states[k].d - d0 for k in ks])
    control = pod(Sc, problem.X_c, tol=cfg.tol_pod_c, inner="h1-interface")
    solid = pod(Ss, problem.X_s, tol=cfg.tol_pod_s, inner="h1-solid")
    fbasis = None
    if fluid:
        Sf = np.column_stack([states[k].w - lift(states[k].t) for k in ks])
        fbasis = pod(Sf, problem.X_f, tol=cfg.tol_pod_f, inner="h1-l2-fluid")
    n_en_f = n_en_s = 0
    Zc = control.Z
    if cfg.enrich and Zc.shape[1]:
        pert_f, pert_s = [], []
        for k in ks:
            step = step_data_at(problem, snaps, k)
            st = states[k]
            if fluid:
                fs = problem.fluid_system(st.w, problem.P_s @ st.d, step)
                pert_f.append(SparseLU(fs.K).solve(-(problem.E_f @ Zc)))
            _, Ks = problem.solid_system(st.d, step)
            pert_s.append(SparseLU(Ks).solve(-(problem.E_s @ Zc)))
        solid, n_en_s = enrich(solid, np.hstack(pert_s), problem.X_s, cfg.tol_en)
        if fluid:
            fbasis, n_en_f = enrich(fbasis, np.hstack(pert_f), problem.X_f, cfg.tol_en)
    test = None
    if fluid and cfg.fluid_model != "galerkin":
        test = build_test_space(problem, snaps, fbasis.Z, int(np.ceil(cfg.jes_factor * fbasis.n)),
                                cfg.test_samples_max)
    elif fluid:
        test = fbasis.Z
    info = {"n_f": 0 if fbasis is None else fbasis.n, "n_s": solid.n, "n_c": control.n,
            "n_f_en": n_en_f, "n_s_en": n_en_s, "j_es": 0 if test is None else test.shape[1]}
    log.info("reduced spaces: %s", info)
    return ReducedSpaces(fbasis, solid, control, test, lift, d0, n_en_f, n_en_s, info)


def riesz_representers(problem, J, Z, lu_X=None, free=None):
    """``psi`` with ``(psi, z)_f = J(Z, z)`` for all homogeneous ``z``."""
    free = _free_fluid(problem) if free is None else free
    if lu_X is None:
        lu_X = SparseLU(problem.X_f[free][:, free])
    out = np.zeros((problem.n_f, Z.shape[1]))
    out[free] = lu_X.solve((J @ Z)[free])
    return out


def build_test_space(problem, snaps: SnapshotSet, Zf, j_es, max_columns=3000):
    free = _free_fluid(problem)
    lu_X = SparseLU(problem.X_f[free][:, free])
    ks = np.asarray(snaps.samples)
    if len(ks) * Zf.shape[1] > max_columns:
        stride = int(np.ceil(len(ks) * Zf.shape[1] / max_columns))
        ks = ks[::stride]
    cols = []
    for k in ks:
        step = step_data_at(problem, snaps, k)
        st = snaps.states[k]
        K = problem.fluid_system(st.w, problem.P_s @ st.d, step).K
        cols.append(riesz_representers(problem, K, Zf, lu_X, free))
    Y = pod(np.hstack(cols), problem.X_f, n=j_es, inner="h1-l2-fluid").Z
    if Y.shape[1] < Zf.shape[1]:
        warnings.warn("test space smaller than the trial space", stacklevel=2)
    return Y


# --- online ---------------------------------------------------------------------------

@dataclass
class RomStepResult:
    alpha_f: np.ndarray | None
    alpha_s: np.ndarray
    beta: np.ndarray
    w: np.ndarray
    d: np.ndarray
    g: np.ndarray
    iterations: int
    converged: bool
    stationarity: float = np.nan


class ReducedModel:
    """Global reduced model; ``hybrid=True`` keeps the fluid at full order."""

    def __init__(self, problem: FsiProblem, spaces: ReducedSpaces, rcfg: RomConfig,
                 ccfg: CouplingConfig | None = None, hybrid=False):
        self.pb = problem
        self.spaces = spaces
        self.rcfg = rcfg
        self.ccfg = ccfg or CouplingConfig()
        self.hybrid = hybrid
        self.Zs = spaces.solid.Z
        self.Zc = spaces.control.Z
        self.Ps_Zs = problem.P_s @ self.Zs
        self.Es_hat = self.Zs.T @ (problem.E_s @ self.Zc)
        self.L_hat = regularization_factor(problem) @ self.Zc
        if not hybrid:
            self.Zf = spaces.fluid.Z
            self.Y = spaces.test
            self.Pf_Zf = problem.P_f @ self.Zf[:problem.n_u]
            self.Ef_hat = self.Y.T @ (problem.E_f @ self.Zc)
        self._lagged = None
        self.max_norm = None
        self.rank_ratios = []          # sigma_min / sigma_max of the condensed sensitivity per step

    # reduced coordinates of a full state (orthogonal projection)
    def coordinates(self, state: FsiState):
        pb = self.pb
        a_s = self.Zs.T @ (pb.X_s @ (state.d - self.spaces.d0))
        beta = self.Zc.T @ (pb.X_c @ state.g)
        a_f = None
        if not self.hybrid:
            a_f = self.Zf.T @ (pb.X_f @ (state.w - self.spaces.lift(state.t)))
        return a_f, a_s, beta

    def _fluid_reduced(self, w, dG, step, exact):
        fs = self.pb.fluid_system(w, dG, step, shape=exact)
        KZ = fs.K @ self.Zf
        Jff = self.Y.T @ KZ
        Rh = self.Y.T @ fs.R
        Jfs = None if fs.Jfs is None else self.Y.T @ (fs.Jfs @ self.Ps_Zs)
        return Rh, Jff, Jfs

    def start(self, state: FsiState):
        """Initialize the lagged test matrix at the initial state."""
        if not self.hybrid and self.rcfg.fluid_model == "pg-lagged":
            step = self.pb.step_data(state)
            _, Jff, _ = self._fluid_reduced(state.w, self.pb.P_s @ state.d, step, False)
            self._lagged = Jff

    def _condense(self, step, w, d, exact, lagged=None):
        """Linearize at ``(w, d)`` and condense the reduced states on the control.

        Returns ``(A, c, a_s, S_s, a_f, S_f)`` with state increments ``a + S beta``
        and the linearized objective ``|A beta - c|``.
        """
        pb = self.pb
        n_u, av = pb.n_u, step.alpha_v
        dG = pb.P_s @ d
        R_s, K_s = pb.solid_system(d, step)
        Jss = self.Zs.T @ (K_s @ self.Zs)
        rhs = -np.column_stack([self.Zs.T @ R_s, self.Es_hat])
        X = np.linalg.solve(Jss, rhs) if Jss.size else np.zeros((0, 1 + self.Zc.shape[1]))
        as_0, S_s = X[:, 0], X[:, 1:]
        if self.hybrid:
            fs = pb.fluid_system(w, dG, step, shape=exact)
            rhs = np.column_stack([-fs.R, -(pb.E_f @ self.Zc)])
            if fs.Jfs is not None:
                rhs -= fs.Jfs @ (self.Ps_Zs @ X)
            Xf = SparseLU(fs.K).solve(rhs)
            Pf_S = pb.P_f @ Xf[:n_u]
        else:
            Rh, Jff, Jfs = self._fluid_reduced(w, dG, step, exact)
            model = self.rcfg.fluid_model
            T = Jff if model == "lspg" else lagged if model == "pg-lagged" else np.eye(Jff.shape[0])
            rhs = np.column_stack([-Rh, -self.Ef_hat])
            if Jfs is not None:
                rhs -= Jfs @ X
            Xf = np.linalg.solve(T.T @ Jff, T.T @ rhs)
            Pf_S = self.Pf_Zf @ Xf
        af_0, S_f = Xf[:, 0], Xf[:, 1:]
        A = Pf_S[:, 1:] - av * (self.Ps_Zs @ S_s)
        c = -(pb.P_f @ w[:n_u] + Pf_S[:, 0] - pb.P_s @ (av * (d + self.Zs @ as_0) + step.b_v))
        return A, c, as_0, S_s, af_0, S_f

    def rank_ratio(self, A):
        if not A.shape[1]:
            return 1.0
        sv = np.linalg.svd(A, compute_uv=False)
        return sv[-1] / sv[0] if sv[0] > 0 else 0.0

    def step(self, state: FsiState, guess=None) -> RomStepResult:
        try:
            return self._step(state, guess)
        except (InvertedElementError, LinAlgError, np.linalg.LinAlgError) as exc:
            raise DivergenceError(f"step {state.k + 1}: reduced solution left the admissible set ({exc})") from exc

    def _step(self, state, guess):
        pb, cfg, rc = self.pb, self.ccfg, self.rcfg
        step = pb.step_data(state)
        exact = cfg.jacobian == "exact"
        a_f, a_s, beta = guess if guess is not None else self.coordinates(state)
        lift = None if self.hybrid else self.spaces.lift(step.t)
        w = state.w.copy() if self.hybrid else lift + self.Zf @ a_f
        model = rc.fluid_model
        stationarity = np.nan
        done = False
        for it in range(1, cfg.max_iter + 1):
            d = self.spaces.d0 + self.Zs @ a_s
            if not self.hybrid:
                w = lift + self.Zf @ a_f
            A, c, as_0, S_s, af_0, S_f = self._condense(step, w, d, exact, self._lagged)
            ratio = self.rank_ratio(A)
            if it == 1:
                self.rank_ratios.append(ratio)
            if ratio < rc.rank_rtol:
                raise RankDeficiencyError(f"step {state.k + 1}: condensed sensitivity is rank deficient "
                                          f"(sigma_min/sigma_max = {ratio:.2e})")
            beta_new = solve_control(A, c, self.L_hat, cfg.delta)
            a_s = a_s + as_0 + S_s @ beta_new
            if self.hybrid:
                w = w + af_0 + S_f @ beta_new
            else:
                a_f = a_f + af_0 + S_f @ beta_new
            g_new, g_old = self.Zc @ beta_new, self.Zc @ beta
            beta = beta_new
            if not all(np.all(np.isfinite(x)) for x in (a_s, beta, w if self.hybrid else a_f)):
                raise DivergenceError(f"step {state.k + 1}: non-finite reduced state")
            done, _ = _converged(pb, g_new - g_old, g_new, cfg.tol)
            if done:
                break
        d = self.spaces.d0 + self.Zs @ a_s
        if not self.hybrid:
            w = lift + self.Zf @ a_f
            if model == "lspg":
                Rh, Jff, _ = self._fluid_reduced(w, pb.P_s @ d, step, False)
                stationarity = float(np.linalg.norm(Jff.T @ (Rh + self.Ef_hat @ beta)))
            elif model == "pg-lagged":
                _, self._lagged, _ = self._fluid_reduced(w, pb.P_s @ d, step, False)
        self._check_blowup(state.k + 1, w, d)
        return RomStepResult(a_f, a_s, beta, w, d, self.Zc @ beta, it, done, stationarity)

    def training_rank_ratios(self, snaps: SnapshotSet):
        """``sigma_min / sigma_max`` of the condensed sensitivity at every training sample."""
        out = []
        exact = self.ccfg.jacobian == "exact"
        for k in snaps.samples:
            st = snaps.states[k]
            step = step_data_at(self.pb, snaps, k)
            lagged = None
            if not self.hybrid and self.rcfg.fluid_model == "pg-lagged":
                prev = snaps.states[k - 1]
                lagged = self._fluid_reduced(prev.w, self.pb.P_s @ prev.d, step, False)[1]
            A = self._condense(step, st.w, st.d, exact, lagged)[0]
            out.append(self.rank_ratio(A))
        return np.array(out)

    def _check_blowup(self, k, w, d):
        if self.max_norm is None:
            return
        nw = np.sqrt(w @ (self.pb.X_f @ w))
        nd = np.sqrt(d @ (self.pb.X_s @ d))
        if nw > self.rcfg.blowup * self.max_norm[0] or nd > self.rcfg.blowup * self.max_norm[1]:
            raise DivergenceError(f"step {k}: reduced solution exceeds {self.rcfg.blowup:g}x the training range")

    def run(self, state0: FsiState, n_steps, snaps: SnapshotSet | None = None, callback=None):
        """March the reduced model; returns the list of reconstructed states (incl. the initial one)."""
        if snaps is not None:
            pb = self.pb
            self.max_norm = (max(np.sqrt(s.w @ (pb.X_f @ s.w)) for s in snaps.states) + 1e-300,
                             max(np.sqrt(s.d @ (pb.X_s @ s.d)) for s in snaps.states) + 1e-300)
        self.start(state0)
        state = state0
        out = [state0]
        for _ in range(n_steps):
            res = self.step(state)
            if not res.converged:
                log.warning("reduced step %d did not converge", state.k + 1)
            step = self.pb.step_data(state)
            state = self.pb.advance(state, step, res.w, res.d, res.g)
            out.append(state)
            if callback is not None:
                callback(state, res)
        return out


def trajectory_errors(problem, fom_states, rom_states):
    """Relative fluid and solid errors over steps ``1..K``."""
    f = [s.w for s in fom_states[1:]]
    r = [s.w for s in rom_states[1:]]
    ef = relative_error(f, r, problem.X_f)
    es = relative_error([s.d for s in fom_states[1:]], [s.d for s in rom_states[1:]], problem.X_s)
    return ef, es
