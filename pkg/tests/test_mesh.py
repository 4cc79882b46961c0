import numpy as np
import pytest

from fsiopt.fem.basis import TRI_POINTS, geometry, p2_basis
from fsiopt.mesh import (BOTTOM, INTERFACE, TOP, InvertedElementError, Mesh, MeshError, MeshParseError,
                         NonConformingInterfaceError, build_dof_masks, generate_structured_rect,
                         load_mesh, parse_mesh, retag)


def square_pair(h):
    fluid = retag(generate_structured_rect((0, 1), (0, 1), h), {TOP: INTERFACE})
    solid = retag(generate_structured_rect((0, 1), (1, 1.25), nx=round(1 / h), ny=1), {BOTTOM: INTERFACE})
    return fluid, solid


def test_unit_square_counts():
    m = generate_structured_rect((0, 1), (0, 1), 0.5)
    assert (m.n_elements, m.n_nodes, m.n_vertices) == (8, 25, 9)
    assert m.area() == pytest.approx(1.0)


def test_strip_counts():
    m = generate_structured_rect((0, 1), (1, 1.25), 0.25)
    assert m.n_elements == 8


def test_uniform_jacobians():
    m = generate_structured_rect((0, 1), (0, 1), 1 / 15)
    _, dN = p2_basis(TRI_POINTS)
    det, _, _ = geometry(m.nodes[m.p2], dN)
    assert det.min() > 0
    assert np.ptp(det) <= 1e-14


def test_spacing_must_divide():
    with pytest.raises(MeshError):
        generate_structured_rect((0, 1), (0, 1), 0.3)


def test_single_triangle_file(tmp_path):
    path = tmp_path / "one.msh"
    path.write_text("fsimesh v1\nnodes 3\n0 0\n1 0\n0 1\ntris 1\n0 1 2\nedges 3\n0 1 1\n1 2 2\n2 0 3\n")
    m = load_mesh(path)
    assert (m.n_elements, m.n_vertices, m.n_nodes) == (1, 3, 6)


def test_flipped_triangle():
    with pytest.raises(InvertedElementError) as exc:
        parse_mesh("fsimesh v1\nnodes 3\n0 0\n0 1\n1 0\ntris 1\n0 1 2\nedges 0\n")
    assert exc.value.elements == [0]


def test_parse_error_line():
    with pytest.raises(MeshParseError) as exc:
        parse_mesh("fsimesh v1\nnodes 2\n0 0\n1 x\n")
    assert exc.value.line == 4


def test_round_trip_bit_exact(tmp_path):
    xs = np.array([0.0, 0.1, 1 / 3, 1.0])
    from fsiopt.mesh import generate_tensor_grid
    m = generate_tensor_grid(xs, xs * np.pi)
    m.save(tmp_path / "m.msh")
    m2 = load_mesh(tmp_path / "m.msh")
    assert np.array_equal(m.vertices, m2.vertices)
    assert np.array_equal(m.triangles, m2.triangles)
    assert m2.dumps() == m.dumps()


def test_interface_masks():
    fluid, solid = square_pair(0.5)
    masks = build_dof_masks(fluid, solid, INTERFACE, ((BOTTOM,), (TOP,)))
    assert masks.n_gamma == 5 and masks.n_c == 10
    assert np.allclose(fluid.nodes[masks.f_gamma_nodes], solid.nodes[masks.s_gamma_nodes], atol=0)
    assert np.allclose(fluid.nodes[masks.f_gamma_nodes, 1], 1.0)


def test_nonconforming_interface():
    fluid, solid = square_pair(0.5)
    v = np.array(solid.vertices)
    j = int(np.flatnonzero((np.abs(v[:, 1] - 1) < 1e-12) & (np.abs(v[:, 0] - 0.5) < 1e-12))[0])
    v[j, 0] += 1e-3
    moved = Mesh(v, solid.triangles, np.column_stack([solid.boundary_edges, solid.boundary_tags]))
    with pytest.raises(NonConformingInterfaceError) as exc:
        build_dof_masks(fluid, moved, INTERFACE, ((BOTTOM,), (TOP,)))
    assert exc.value.distance == pytest.approx(1e-3, rel=1e-6)


def test_locate():
    m = generate_structured_rect((0, 1), (0, 1), 0.5)
    k, xi = m.locate((0.3, 0.1))
    assert 0 <= k < m.n_elements and xi.min() >= 0
    with pytest.raises(MeshError):
        m.locate((2.0, 0.0))
