"""Triangular Taylor-Hood meshes, the ``fsimesh v1`` text format, and dof masks.

P2 node numbering: mesh vertices first, then one midpoint per unique edge in
lexicographic order of the (sorted) vertex pair.  Local P2 ordering on a
triangle ``(v0, v1, v2)`` is ``(v0, v1, v2, m01, m12, m20)``.  Vector-valued
dofs are node-major: dof ``2*node + component``.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

LEFT, RIGHT, BOTTOM, TOP = 1, 2, 3, 4
HEADER = "fsimesh v1"


class MeshError(ValueError):
    pass


class MeshParseError(MeshError):
    def __init__(self, message, line):
        super().__init__(f"line {line}: {message}")
        self.line = line


class InvertedElementError(MeshError):
    def __init__(self, elements):
        self.elements = list(map(int, elements))
        super().__init__(f"inverted or degenerate elements: {self.elements[:20]}")


class NonConformingInterfaceError(MeshError):
    def __init__(self, distance):
        self.distance = float(distance)
        super().__init__(f"fluid and solid interfaces do not conform (worst node distance {distance:.3e})")


def _signed_areas(vertices, triangles):
    p0, p1, p2 = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1])
                  - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))


class Mesh:
    """Straight-sided triangulation with P1 (vertex) and P2 (vertex + midpoint) layouts."""

    def __init__(self, vertices, triangles, edges):
        self.vertices = np.array(vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
        edges = np.array(edges, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = edges[:, :2].copy()
        self.boundary_tags = edges[:, 2].copy()
        self._validate()
        self._build_p2()
        self.vertices.setflags(write=False)
        self.triangles.setflags(write=False)

    # --- construction -------------------------------------------------
    def _validate(self):
        nv = len(self.vertices)
        if self.triangles.size and (self.triangles.min() < 0 or self.triangles.max() >= nv):
            raise MeshError("triangle references a missing vertex")
        area = _signed_areas(self.vertices, self.triangles)
        bad = np.flatnonzero(area <= 0.0)
        if bad.size:
            raise InvertedElementError(bad)
        self.areas = area

    def _build_p2(self):
        tri = self.triangles
        local = np.array([[0, 1], [1, 2], [2, 0]])
        all_edges = np.sort(tri[:, local].reshape(-1, 2), axis=1)
        uniq, inverse, counts = np.unique(all_edges, axis=0, return_inverse=True, return_counts=True)
        inverse = inverse.ravel()
        nv = len(self.vertices)
        self.edges = uniq
        self.n_vertices = nv
        mids = 0.5 * (self.vertices[uniq[:, 0]] + self.vertices[uniq[:, 1]])
        self.nodes = np.vstack([self.vertices, mids])
        self.p2 = np.hstack([tri, nv + inverse.reshape(-1, 3)])
        self.n_nodes = len(self.nodes)
        self._edge_index = {tuple(e): i for i, e in enumerate(uniq)}
        # which triangle (and local edge) owns each boundary edge
        owners = {}
        for k, (e, c) in enumerate(zip(inverse, np.repeat([[0, 1, 2]], len(tri), axis=0).ravel())):
            owners.setdefault(int(e), []).append((k // 3, int(c)))
        b_owner = []
        for v0, v1 in self.boundary_edges:
            key = (min(v0, v1), max(v0, v1))
            idx = self._edge_index.get(key)
            if idx is None:
                raise MeshError(f"boundary edge {key} is not an edge of the mesh")
            if counts[idx] != 1:
                raise MeshError(f"boundary edge {key} is shared by {counts[idx]} elements")
            b_owner.append(owners[idx][0])
        self.boundary_owner = np.array(b_owner, dtype=np.int64).reshape(-1, 2)
        self.boundary_mid = np.array(
            [nv + self._edge_index[(min(a, b), max(a, b))] for a, b in self.boundary_edges],
            dtype=np.int64)
        self.nodes.setflags(write=False)
        self.p2.setflags(write=False)

    # --- queries --------------------------------------------------------
    @property
    def n_elements(self):
        return len(self.triangles)

    def area(self):
        return float(self.areas.sum())

    def tag_edges(self, tags):
        """Boundary edges (as P2 node triples ``v0, mid, v1``) carrying any of ``tags``."""
        tags = np.atleast_1d(tags)
        sel = np.flatnonzero(np.isin(self.boundary_tags, tags))
        trip = np.column_stack([self.boundary_edges[sel, 0], self.boundary_mid[sel],
                                self.boundary_edges[sel, 1]])
        return sel, trip

    def tag_nodes(self, tags):
        _, trip = self.tag_edges(tags)
        return np.unique(trip)

    def locate(self, point, tol=1e-12):
        """Return ``(element, barycentric coordinates)`` of ``point`` or raise."""
        p = np.asarray(point, dtype=float)
        v = self.vertices[self.triangles]
        d1 = v[:, 1] - v[:, 0]
        d2 = v[:, 2] - v[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        r = p - v[:, 0]
        xi = (r[:, 0] * d2[:, 1] - r[:, 1] * d2[:, 0]) / det
        eta = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / det
        inside = (xi >= -tol) & (eta >= -tol) & (xi + eta <= 1 + tol)
        hits = np.flatnonzero(inside)
        if not hits.size:
            raise MeshError(f"point {tuple(p)} lies outside the mesh")
        k = int(hits[0])
        return k, np.array([xi[k], eta[k]])

    # --- io ---------------------------------------------------------------
    def dumps(self):
        lines = [HEADER, f"nodes {len(self.vertices)}"]
        lines += [f"{x!r} {y!r}" for x, y in self.vertices.tolist()]
        lines.append(f"tris {len(self.triangles)}")
        lines += [f"{a} {b} {c}" for a, b, c in self.triangles.tolist()]
        lines.append(f"edges {len(self.boundary_edges)}")
        lines += [f"{a} {b} {t}" for (a, b), t in zip(self.boundary_edges.tolist(), self.boundary_tags.tolist())]
        return "\n".join(lines) + "\n"

    def save(self, path):
        atomic_write_text(path, self.dumps())


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def parse_mesh(text):
    lines = text.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            raise MeshParseError("unexpected end of file", pos + 1)
        pos += 1
        return pos, lines[pos - 1].split()

    def section(name):
        ln, tok = next_line()
        if len(tok) != 2 or tok[0] != name:
            raise MeshParseError(f"expected '{name} <count>'", ln)
        try:
            return int(tok[1])
        except ValueError:
            raise MeshParseError(f"bad count {tok[1]!r}", ln) from None

    def rows(count, width, conv):
        out = []
        for _ in range(count):
            ln, tok = next_line()
            if len(tok) != width:
                raise MeshParseError(f"expected {width} fields, found {len(tok)}", ln)
            try:
                out.append([conv(t) for t in tok])
            except ValueError:
                raise MeshParseError(f"cannot parse {' '.join(tok)!r}", ln) from None
        return out

    ln, tok = next_line()
    if " ".join(tok) != HEADER:
        raise MeshParseError(f"missing '{HEADER}' header", ln)
    verts = rows(section("nodes"), 2, float)
    tris = rows(section("tris"), 3, int)
    edges = rows(section("edges"), 3, int)
    return Mesh(verts, tris, edges)


def load_mesh(path):
    return parse_mesh(Path(path).read_text())


def generate_tensor_grid(xs, ys, keep=None, tagger=None):
    """Triangulate the tensor grid ``xs x ys``.

    Each cell is split along its lower-left to upper-right diagonal.  ``keep(xc, yc)``
    selects cells by centroid; ``tagger(p0, p1)`` returns the tag of a boundary
    edge (default: ``LEFT/RIGHT/BOTTOM/TOP`` of the bounding box).
    """
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    nx, ny = len(xs) - 1, len(ys) - 1
    vid = -np.ones((nx + 1, ny + 1), dtype=np.int64)
    cells = [(i, j) for j in range(ny) for i in range(nx)
             if keep is None or keep(0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1]))]
    verts = []
    for i, j in cells:
        for a, b in ((i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)):
            if vid[a, b] < 0:
                vid[a, b] = -2
    order = [(a, b) for b in range(ny + 1) for a in range(nx + 1) if vid[a, b] == -2]
    for n, (a, b) in enumerate(order):
        vid[a, b] = n
        verts.append((xs[a], ys[b]))
    tris = []
    for i, j in cells:
        a, b, c, d = vid[i, j], vid[i + 1, j], vid[i + 1, j + 1], vid[i, j + 1]
        tris += [(a, b, c), (a, c, d)]
    tris = np.array(tris, dtype=np.int64)
    verts = np.array(verts)
    local = np.array([[0, 1], [1, 2], [2, 0]])
    directed = tris[:, local].reshape(-1, 2)
    key = np.sort(directed, axis=1)
    _, inv, cnt = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    bnd = directed[cnt[inv.ravel()] == 1]
    if tagger is None:
        x0, x1, y0, y1 = xs[0], xs[-1], ys[0], ys[-1]

        def tagger(p, q):
            if p[0] == x0 and q[0] == x0:
                return LEFT
            if p[0] == x1 and q[0] == x1:
                return RIGHT
            if p[1] == y0 and q[1] == y0:
                return BOTTOM
            if p[1] == y1 and q[1] == y1:
                return TOP
            return 0
    edges = [(a, b, tagger(verts[a], verts[b])) for a, b in bnd]
    edges.sort(key=lambda e: (e[2], min(e[0], e[1]), max(e[0], e[1])))
    return Mesh(verts, tris, edges)


def _cells(length, h, what):
    n = length / h
    m = round(n)
    if m < 1 or abs(n - m) > 1e-12 * max(1.0, n):
        raise MeshError(f"spacing {h} does not divide the {what} extent {length}")
    return m


def generate_structured_rect(x_range, y_range, h=None, nx=None, ny=None):
    """Uniform triangulation of a rectangle with spacing ``h``.

    ``nx``/``ny`` override the cell counts per direction (for extents that ``h``
    does not divide).  Boundary edges are tagged LEFT/RIGHT/BOTTOM/TOP.
    """
    (x0, x1), (y0, y1) = x_range, y_range
    if x1 <= x0 or y1 <= y0:
        raise MeshError("rectangle must have positive extents")
    if nx is None:
        nx = _cells(x1 - x0, h, "x")
    if ny is None:
        ny = _cells(y1 - y0, h, "y")
    return generate_tensor_grid(np.linspace(x0, x1, nx + 1), np.linspace(y0, y1, ny + 1))


@dataclass(frozen=True)
class DofMasks:
    """Interface / Dirichlet / interior index sets of the coupled problem."""

    n_u: int
    n_p: int
    n_s: int
    f_gamma_nodes: np.ndarray
    s_gamma_nodes: np.ndarray
    f_dir: np.ndarray
    s_dir: np.ndarray
    gamma_edges: np.ndarray          # (n_edges, 3) interface-local node triples
    f_gamma_owner: np.ndarray        # (n_edges, 2) fluid element, local edge
    s_gamma_owner: np.ndarray

    @property
    def n_gamma(self):
        return len(self.f_gamma_nodes)

    @property
    def n_c(self):
        return 2 * self.n_gamma

    @property
    def n_f(self):
        return self.n_u + self.n_p

    @property
    def f_gamma(self):
        return _vector_dofs(self.f_gamma_nodes)

    @property
    def s_gamma(self):
        return _vector_dofs(self.s_gamma_nodes)

    @property
    def f_in(self):
        return np.setdiff1d(np.arange(self.n_u), self.f_dir)

    @property
    def s_in(self):
        return np.setdiff1d(np.arange(self.n_s), self.s_dir)

    @property
    def P_f(self):
        return _selector(self.f_gamma, self.n_u)

    @property
    def P_s(self):
        return _selector(self.s_gamma, self.n_s)

    @property
    def gamma_dirichlet_both(self):
        """Control dofs whose fluid and solid interface dofs are both Dirichlet."""
        return np.isin(self.f_gamma, self.f_dir) & np.isin(self.s_gamma, self.s_dir)


def _vector_dofs(nodes):
    nodes = np.asarray(nodes, dtype=np.int64)
    return np.column_stack([2 * nodes, 2 * nodes + 1]).ravel()


def _selector(idx, n):
    m = len(idx)
    return sp.csr_matrix((np.ones(m), (np.arange(m), idx)), shape=(m, n))


def build_dof_masks(fluid: Mesh, solid: Mesh, interface_tag, dirichlet_tags, tol=1e-10):
    """Match the fluid and solid interface nodes and collect Dirichlet dofs.

    ``dirichlet_tags`` is a pair ``(fluid_tags, solid_tags)``.  Interface node
    ``j`` of the fluid coincides geometrically with interface node ``j`` of the solid.
    """
    fluid_tags, solid_tags = dirichlet_tags
    f_sel, f_trip = fluid.tag_edges(interface_tag)
    s_sel, s_trip = solid.tag_edges(interface_tag)
    if not len(f_sel):
        raise MeshError(f"fluid mesh has no edges tagged {interface_tag}")
    f_nodes = np.array(sorted(set(f_trip.ravel().tolist()),
                              key=lambda n: (fluid.nodes[n, 0], fluid.nodes[n, 1])), dtype=np.int64)
    s_all = np.unique(s_trip)
    if len(s_all) != len(f_nodes):
        raise NonConformingInterfaceError(np.inf)
    tree = cKDTree(solid.nodes[s_all])
    dist, idx = tree.query(fluid.nodes[f_nodes])
    if dist.max() > tol or len(set(idx.tolist())) != len(idx):
        raise NonConformingInterfaceError(dist.max())
    s_nodes = s_all[idx]
    local = {int(n): j for j, n in enumerate(f_nodes)}
    gamma_edges = np.array([[local[int(v)] for v in t] for t in f_trip], dtype=np.int64)
    # solid owner info in the fluid edge order
    s_local = {int(n): j for j, n in enumerate(s_nodes)}
    s_edge_key = {tuple(sorted((s_local[int(a)], s_local[int(b)]))): k
                  for k, (a, _, b) in enumerate(s_trip)}
    s_order = [s_edge_key[tuple(sorted((a, b)))] for a, _, b in gamma_edges]
    f_dir = np.unique(_vector_dofs(fluid.tag_nodes(fluid_tags))) if len(fluid_tags) else np.zeros(0, np.int64)
    s_dir = np.unique(_vector_dofs(solid.tag_nodes(solid_tags))) if len(solid_tags) else np.zeros(0, np.int64)
    return DofMasks(
        n_u=2 * fluid.n_nodes, n_p=fluid.n_vertices, n_s=2 * solid.n_nodes,
        f_gamma_nodes=f_nodes, s_gamma_nodes=s_nodes, f_dir=f_dir, s_dir=s_dir,
        gamma_edges=gamma_edges,
        f_gamma_owner=fluid.boundary_owner[f_sel],
        s_gamma_owner=solid.boundary_owner[s_sel][s_order],
    )


INTERFACE = 5


def retag(mesh: Mesh, mapping) -> Mesh:
    """Copy of ``mesh`` with boundary tags renamed through ``mapping`` (missing keys kept)."""
    tags = np.array([mapping.get(int(t), int(t)) for t in mesh.boundary_tags], dtype=np.int64)
    return Mesh(mesh.vertices, mesh.triangles, np.column_stack([mesh.boundary_edges, tags]))
