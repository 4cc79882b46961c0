import numpy as np
import pytest
import scipy.sparse as sp

from conftest import random_state, square_problem
from fsiopt.fem.interface import ForceEvaluator, assemble_ale_extension, edge_gramians
from fsiopt.fem.solid import SolidAssembler
from fsiopt.mesh import INTERFACE, LEFT, RIGHT, build_dof_masks, generate_structured_rect, retag


def fd_jacobian(fun, x, eps=1e-6):
    cols = []
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = eps
        cols.append((fun(x + e) - fun(x - e)) / (2 * eps))
    return np.column_stack(cols)


def rel_err(A, B):
    A = A.toarray() if sp.issparse(A) else A
    return np.abs(A - B).max() / np.abs(B).max()


# --- mesh motion -----------------------------------------------------------------

def test_ale_extension_is_identity_on_interface():
    pb = square_problem()
    assert np.abs(pb.P_f @ pb.W - np.eye(pb.n_c)).max() == 0.0
    assert not np.any(pb.W @ np.zeros(pb.n_c))


def test_ale_extension_vanishes_on_outer_boundary():
    pb = square_problem()
    fm = pb.fluid_mesh
    outer = np.setdiff1d(np.unique(np.concatenate([fm.boundary_edges.ravel(), fm.boundary_mid])),
                         pb.masks.f_gamma_nodes)
    dofs = np.concatenate([2 * outer, 2 * outer + 1])
    assert np.abs(pb.W[dofs]).max() == 0.0


def test_ale_constant_trace_translates_interface():
    pb = square_problem()
    c = np.tile([0.01, -0.02], pb.masks.n_gamma)
    assert np.allclose(pb.P_f @ (pb.W @ c), c, atol=1e-15)


def test_ale_unstiffened_matches_stiffened_on_interface():
    pb = square_problem()
    W1 = assemble_ale_extension(pb.fluid_mesh, pb.masks, pb.params.lam_m, pb.params.mu_m, stiffening=0.0)
    assert np.allclose(pb.P_f @ W1, np.eye(pb.n_c))


# --- fluid -------------------------------------------------------------------------

def test_divergence_of_constant_is_zero():
    pb = square_problem()
    u = np.tile([0.7, -1.3], pb.fluid_mesh.n_nodes)
    assert np.abs(pb.fasm.divergence_matrix() @ u).max() <= 1e-14


def test_fluid_residual_zero_at_rest():
    pb = square_problem()
    st = pb.zero_state()
    step = pb.step_data(st)
    fs = pb.fluid_system(st.w, pb.P_s @ st.d, step, shape=True)
    assert not np.any(fs.R)
    R_s, _ = pb.solid_system(st.d, step)
    assert not np.any(R_s)


@pytest.mark.parametrize("seed", [0, 1])
def test_fluid_state_jacobian_matches_fd(seed):
    pb = square_problem()
    st = random_state(pb, seed)
    step = pb.step_data(st)
    dG = pb.P_s @ st.d
    K = pb.fluid_system(st.w, dG, step).K
    J = fd_jacobian(lambda w: pb.fluid_system(w, dG, step, jacobian=False).R, st.w)
    n_u = pb.n_u
    assert rel_err(K[:, :n_u], J[:, :n_u]) <= 1e-5      # velocity block
    assert rel_err(K[:, n_u:], J[:, n_u:]) <= 1e-5      # pressure block


@pytest.mark.parametrize("seed", [0, 1])
def test_fluid_shape_jacobian_matches_fd(seed):
    pb = square_problem()
    st = random_state(pb, seed)
    step = pb.step_data(st)
    dG = pb.P_s @ st.d
    Jfs = pb.fluid_system(st.w, dG, step, shape=True).Jfs
    J = fd_jacobian(lambda x: pb.fluid_system(st.w, x, step, jacobian=False).R, dG)
    assert rel_err(Jfs, J) <= 1e-5


@pytest.mark.parametrize("law", ["linear", "stvk"])
def test_solid_jacobian_matches_fd(law):
    pb = square_problem(law=law)
    st = random_state(pb, 2, scale=0.1)
    step = pb.step_data(st)
    _, K = pb.solid_system(st.d, step)
    J = fd_jacobian(lambda d: pb.solid_system(d, step, jacobian=False)[0], st.d)
    assert rel_err(K, J) <= 1e-5


def test_linear_law_is_linear(rng):
    pb = square_problem()
    d1, d2 = rng.normal(size=(2, pb.n_s))
    f = pb.sasm.internal_force
    assert np.allclose(f(2 * d1 - 3 * d2), 2 * f(d1) - 3 * f(d2), atol=1e-12)


@pytest.mark.parametrize("law", ["linear", "stvk"])
def test_zero_displacement_zero_stress_and_energy(law):
    pb = square_problem(law=law)
    assert not np.any(pb.sasm.internal_force(np.zeros(pb.n_s)))
    assert pb.sasm.strain_energy(np.zeros(pb.n_s)) == 0.0


def test_rigid_translation_is_stress_free():
    pb = square_problem(law="stvk")
    d = np.tile([0.3, -0.1], pb.solid_mesh.n_nodes)
    assert np.abs(pb.sasm.internal_force(d)).max() <= 1e-12


# --- coupling ----------------------------------------------------------------------

def test_coupling_signs_and_conformity():
    pb = square_problem()
    Bf = (pb.P_f @ pb.Et_f).toarray()
    Bs = (pb.P_s @ pb.Et_s).toarray()
    assert np.array_equal(Bf, Bs)
    Ef = (pb.P_f @ pb.E_f[:pb.n_u]).toarray()
    Es = (pb.P_s @ pb.E_s).toarray()
    assert np.array_equal(Ef, -Es)
    assert pb.E_f[pb.n_u:].nnz == 0


def test_partition_of_unity():
    pb = square_problem()
    g = np.tile([1.0, 0.0], pb.masks.n_gamma)
    assert (pb.Et_s @ g)[0::2].sum() == pytest.approx(1.0, abs=1e-13)


def p2_line_mass(L):
    return L / 30 * np.array([[4, 2, -1], [2, 16, 2], [-1, 2, 4]])


def p2_line_stiffness(L):
    return 1 / (3 * L) * np.array([[7, -8, 1], [-8, 16, -8], [1, -8, 7]])


def test_interface_mass_and_stiffness_match_1d_oracle():
    pb = square_problem(h=1 / 6)
    m = pb.masks
    xs = pb.fluid_mesh.nodes[m.f_gamma_nodes, 0]
    M = np.zeros((m.n_gamma, m.n_gamma))
    K = np.zeros_like(M)
    for tri in m.gamma_edges:
        L = abs(xs[tri[2]] - xs[tri[0]])
        M[np.ix_(tri, tri)] += p2_line_mass(L)
        K[np.ix_(tri, tri)] += p2_line_stiffness(L)
    Es = (pb.P_s @ pb.Et_s).toarray()
    assert np.abs(Es[0::2, 0::2] - M).max() <= 1e-12
    assert np.abs(Es[0::2, 1::2]).max() == 0.0
    g = np.random.default_rng(0).normal(size=m.n_c)
    KG = pb.K_G.toarray()
    oracle = g[0::2] @ K @ g[0::2] + g[1::2] @ K @ g[1::2]
    assert g @ KG @ g == pytest.approx(oracle, rel=1e-12)


def test_interface_seminorm():
    pb = square_problem()
    m = pb.masks
    x = pb.fluid_mesh.nodes[m.f_gamma_nodes, 0]
    const = np.tile([2.0, -1.0], m.n_gamma)
    assert abs(const @ (pb.K_G @ const)) <= 1e-12
    lin = np.column_stack([x, np.zeros_like(x)]).ravel()
    assert lin @ (pb.K_G @ lin) == pytest.approx(pb.interface_length, rel=1e-12)


def test_edge_gramians_single_edge():
    coords = np.array([[0.0, 0.0], [0.25, 0.0], [0.5, 0.0]])
    M, K = edge_gramians(coords, np.array([[0, 1, 2]]), 3)
    assert np.allclose(M.toarray(), p2_line_mass(0.5), atol=1e-15)
    assert np.allclose(K.toarray(), p2_line_stiffness(0.5), atol=1e-13)


# --- forces ------------------------------------------------------------------------------

def vertical_interface():
    fluid = retag(generate_structured_rect((0, 1), (0, 1), 0.25), {LEFT: INTERFACE})
    solid = retag(generate_structured_rect((-0.25, 0), (0, 1), nx=1, ny=4), {RIGHT: INTERFACE})
    masks = build_dof_masks(fluid, solid, INTERFACE, ((), ()))
    return fluid, masks


def test_drag_of_constant_pressure():
    fluid, masks = vertical_interface()
    forces = ForceEvaluator(fluid, masks, mu=0.1)
    c = 2.5
    drag, lift = forces(np.zeros(2 * fluid.n_nodes), np.full(fluid.n_vertices, c))
    assert drag == pytest.approx(-c, rel=1e-13)
    assert abs(lift) <= 1e-13


def test_zero_state_has_no_force():
    fluid, masks = vertical_interface()
    forces = ForceEvaluator(fluid, masks, mu=0.1)
    assert forces(np.zeros(2 * fluid.n_nodes), np.zeros(fluid.n_vertices)) == (0.0, 0.0)


def test_solid_mass_integrates_density():
    mesh = generate_structured_rect((0, 2), (0, 1), 0.5)
    sa = SolidAssembler(mesh, 1.0, 1.0, 1.0)
    one = np.tile([1.0, 0.0], mesh.n_nodes)
    assert one @ (sa.mass @ one) == pytest.approx(2.0, rel=1e-13)
