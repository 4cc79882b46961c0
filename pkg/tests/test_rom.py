import warnings

import numpy as np
import pytest
import scipy.linalg as sla

from conftest import square_problem
from fsiopt.problem import ProblemData
from fsiopt.rom import (FluidLift, ReducedBasis, ReducedModel, ReducedSpaces, RomConfig, SnapshotSet,
                        build_spaces, build_test_space, energy_modes, enrich, mgs, pod, project,
                        projection_errors, trajectory_errors)
from fsiopt.solvers import CouplingConfig, integrate, sqp_time_step


def random_spd(n, rng):
    M = rng.normal(size=(n, n))
    return M @ M.T / n + np.eye(n)


# --- POD ---------------------------------------------------------------------------

def test_energy_criterion():
    assert energy_modes([4, 3, 2, 1], 0.5) == 2
    assert energy_modes([4, 3, 2, 1], 0.0) == 4
    assert energy_modes([0, 0], 0.1) == 0


def test_pod_orthogonal_snapshots():
    S = np.diag(np.sqrt([4.0, 3.0, 2.0, 1.0]))
    b = pod(S, tol=0.5)
    assert b.n == 2
    assert np.allclose(b.eigenvalues, [4, 3, 2, 1])


def test_pod_single_snapshot(rng):
    X = random_spd(6, rng)
    s = rng.normal(size=6)
    b = pod(s, X, tol=0.0)
    assert b.n == 1
    z = b.Z[:, 0]
    assert np.allclose(np.abs(z), np.abs(s) / np.sqrt(s @ X @ s), rtol=1e-12)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pod_matches_weighted_svd(seed):
    rng = np.random.default_rng(seed)
    n, m = int(rng.integers(100, 500)), int(rng.integers(5, 50))
    X = random_spd(n, rng)
    S = rng.normal(size=(n, m)) * 0.7 ** np.arange(m)
    b = pod(S, X, n=min(m, 10))
    R = sla.cholesky(X)                 # X = R^T R
    U, sv, _ = np.linalg.svd(R @ S, full_matrices=False)
    lam = sv ** 2
    assert np.abs(b.eigenvalues - lam).max() <= 1e-10 * lam[0]
    ref = sla.solve_triangular(R, U[:, :b.n])
    sign = np.sign(np.sum(ref * b.Z, axis=0))
    assert np.abs(b.Z - ref * sign).max() <= 1e-10 * np.abs(ref).max()


def test_discarded_energy_equals_projection_error(rng):
    X = random_spd(80, rng)
    S = rng.normal(size=(80, 30))
    b = pod(S, X, n=12)
    R = S - project(b.Z, X, S)
    err = np.einsum("ij,ij->", R, X @ R)
    assert err == pytest.approx(b.eigenvalues[12:].sum(), rel=1e-8)
    assert np.allclose(b.Z.T @ X @ b.Z, np.eye(12), atol=1e-12)


def test_pod_zero_energy_warns():
    with pytest.warns(UserWarning):
        b = pod(np.zeros((5, 3)), tol=1e-3)
    assert b.n == 0


def test_pod_zero_tolerance_keeps_nonzero_modes(rng):
    S = rng.normal(size=(20, 3)) @ rng.normal(size=(3, 8))      # rank 3
    assert pod(S, tol=0.0).n == 3


def test_mgs_drops_dependent_columns(rng):
    A = rng.normal(size=(10, 3))
    Z = mgs(np.column_stack([A, A[:, 0] + A[:, 1]]))
    assert Z.shape[1] == 3 and np.allclose(Z.T @ Z, np.eye(3))


def test_projection_errors(rng):
    Z = np.linalg.qr(rng.normal(size=(10, 3)))[0]
    assert np.allclose(projection_errors(Z, None, Z), 0, atol=1e-14)
    v = rng.normal(size=(10, 1))
    v -= Z @ (Z.T @ v)
    assert np.allclose(projection_errors(Z, None, v), 1.0)


# --- enrichment --------------------------------------------------------------------

def test_enrich_noop_cases(rng):
    X = random_spd(12, rng)
    base = pod(rng.normal(size=(12, 4)), X, n=2)
    same, n_en = enrich(base, np.zeros((12, 0)), X, 0.1)
    assert n_en == 0 and same.Z is base.Z
    same, n_en = enrich(base, rng.normal(size=(12, 5)), X, 1.0)
    assert n_en == 0 and same.Z is base.Z


def test_enrich_meets_tolerance(rng):
    X = random_spd(30, rng)
    base = pod(rng.normal(size=(30, 4)), X, n=2)
    pert = rng.normal(size=(30, 6))
    out, n_en = enrich(base, pert, X, 0.1)
    assert 0 < n_en <= 6 and out.n == base.n + n_en
    assert projection_errors(out.Z, X, pert).max() < 0.1
    assert np.allclose(out.Z.T @ X @ out.Z, np.eye(out.n), atol=1e-10)


# --- spaces from a short trajectory ------------------------------------------------------

def forced_problem():
    pb = square_problem(dt=0.05)
    F = np.zeros(pb.n_s)
    free = np.setdiff1d(np.arange(pb.n_s), pb.masks.s_dir)
    F[free[0::2]] = 0.05
    pb.data = ProblemData(solid_load=lambda t: np.sin(4 * t) * F)
    return pb


@pytest.fixture(scope="module")
def trajectory():
    pb = forced_problem()
    states = [pb.zero_state()]
    integrate(pb, states[0], 6, "sqp-exact", CouplingConfig(tol=1e-10),
              callback=lambda s, r: states.append(s))
    return pb, SnapshotSet(states, np.arange(1, 7))


def test_test_space_orthonormal(trajectory):
    pb, snaps = trajectory
    Zf = pod(np.column_stack([s.w for s in snaps.states[1:]]), pb.X_f, tol=0.0).Z
    Y = build_test_space(pb, snaps, Zf, 2 * Zf.shape[1])
    assert np.allclose(Y.T @ (pb.X_f @ Y), np.eye(Y.shape[1]), atol=1e-10)
    assert not np.any(Y[pb.masks.f_dir])


def test_test_space_duplicate_samples(trajectory):
    pb, snaps = trajectory
    Zf = pod(np.column_stack([s.w for s in snaps.states[1:]]), pb.X_f, n=1).Z
    dup = SnapshotSet(snaps.states, np.array([2, 2, 2]))
    with pytest.warns(UserWarning):
        Y = build_test_space(pb, dup, Zf, 3)
    assert Y.shape[1] == 1


def test_build_spaces_counts(trajectory):
    pb, snaps = trajectory
    sp_ = build_spaces(pb, snaps, RomConfig(tol_pod_f=1e-4, tol_pod_s=1e-4, tol_pod_c=1e-4))
    info = sp_.info
    assert info["n_f"] == sp_.fluid.n and info["n_s"] == sp_.solid.n and info["n_c"] == sp_.control.n
    assert sp_.test.shape[1] >= sp_.fluid.n


def test_lift_for_separable_data(trajectory):
    pb, snaps = trajectory
    lift = FluidLift(SnapshotSet(snaps.states, snaps.samples, ramp=lambda t: 2.0))
    mean = np.mean([snaps.states[k].w for k in snaps.samples], axis=0)
    assert np.allclose(lift(0.3), mean)
    assert np.array_equal(FluidLift(snaps)(0.3), snaps.states[0].w)


# --- degenerate (identity) reductions --------------------------------------------------

def full_basis(n, free, X):
    E = np.eye(n)[:, free]
    return ReducedBasis(mgs(E, X), np.ones(len(free)))


def identity_spaces(pb, state0):
    ff = np.setdiff1d(np.arange(pb.n_f), pb.masks.f_dir)
    fs = np.setdiff1d(np.arange(pb.n_s), pb.masks.s_dir)
    fluid = full_basis(pb.n_f, ff, pb.X_f)
    return ReducedSpaces(fluid, full_basis(pb.n_s, fs, pb.X_s.toarray()),
                         full_basis(pb.n_c, np.arange(pb.n_c), pb.X_c.toarray()),
                         fluid.Z, FluidLift(SnapshotSet([state0], np.array([], int))), state0.d)


@pytest.mark.parametrize("model", ["lspg", "galerkin"])
def test_identity_rom_reproduces_sqp(trajectory, model):
    pb, snaps = trajectory
    cfg = CouplingConfig(tol=1e-12, max_iter=40)
    spaces = identity_spaces(pb, snaps.states[0])
    rom = ReducedModel(pb, spaces, RomConfig(fluid_model=model, rank_rtol=0.0), cfg)
    st = snaps.states[3]
    ref = sqp_time_step(pb, st, pb.step_data(st), cfg)
    res = rom.step(st)
    assert res.converged
    for a, b in ((res.w, ref.w), (res.d, ref.d), (res.g, ref.g)):
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_identity_hybrid_reproduces_sqp(trajectory):
    pb, snaps = trajectory
    cfg = CouplingConfig(tol=1e-12, max_iter=40)
    spaces = identity_spaces(pb, snaps.states[0])
    spaces = ReducedSpaces(None, spaces.solid, spaces.control, None, spaces.lift, spaces.d0)
    hyb = ReducedModel(pb, spaces, RomConfig(rank_rtol=0.0), cfg, hybrid=True)
    st = snaps.states[4]
    ref = sqp_time_step(pb, st, pb.step_data(st), cfg)
    res = hyb.step(st)
    for a, b in ((res.w, ref.w), (res.d, ref.d), (res.g, ref.g)):
        assert np.linalg.norm(a - b) <= 1e-8 * np.linalg.norm(b)


def test_identity_rom_trajectory_error_is_zero(trajectory):
    pb, snaps = trajectory
    cfg = CouplingConfig(tol=1e-12, max_iter=40)
    rom = ReducedModel(pb, identity_spaces(pb, snaps.states[0]), RomConfig(rank_rtol=0.0), cfg)
    fom = [snaps.states[0]]
    integrate(pb, fom[0], 3, "sqp-exact", cfg, callback=lambda s, r: fom.append(s))
    out = rom.run(fom[0], 3, snaps)
    ef, es = trajectory_errors(pb, fom, out)
    assert ef <= 1e-8 and es <= 1e-8


def test_reduced_solid_galerkin_columns(trajectory):
    pb, snaps = trajectory
    sp_ = build_spaces(pb, snaps, RomConfig(tol_pod_f=1e-6, tol_pod_s=1e-6, tol_pod_c=1e-6))
    rom = ReducedModel(pb, sp_, RomConfig())
    st = snaps.states[2]
    step = pb.step_data(st)
    _, _, a_s, S_s, _, _ = rom._condense(step, st.w, st.d, True)
    R_s, K_s = pb.solid_system(st.d, step)
    Zs = sp_.solid.Z
    lhs = Zs.T @ (K_s @ (Zs @ S_s)) + rom.Es_hat
    assert np.abs(lhs).max() <= 1e-10 * max(1.0, np.abs(rom.Es_hat).max())
    assert np.abs(Zs.T @ (K_s @ (Zs @ a_s)) + Zs.T @ R_s).max() <= 1e-10


def test_lspg_stationarity(trajectory):
    pb, snaps = trajectory
    sp_ = build_spaces(pb, snaps, RomConfig(tol_pod_f=1e-6, tol_pod_s=1e-6, tol_pod_c=1e-6))
    rom = ReducedModel(pb, sp_, RomConfig(), CouplingConfig(tol=1e-12, max_iter=40))
    res = rom.step(snaps.states[2])
    assert res.converged and res.stationarity <= 1e-8
