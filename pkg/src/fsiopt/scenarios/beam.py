"""Elastic beam clamped to the floor of a channel with a ramped parabolic inflow.

Geometry (channel length 6, height 2.5): the beam occupies ``[1.9, 2.1] x [0, 1]``
and is meshed with 2 x 10 structured cells.  The fluid mesh is a graded tensor grid
conforming to the beam.  The shipped mesh files are produced by ``beam_meshes``.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np
from scipy.optimize import brentq

from ..mesh import INTERFACE, build_dof_masks, generate_tensor_grid, load_mesh
from ..params import MaterialParams
from ..linalg import SparseLU
from ..problem import FsiProblem, ProblemData, dirichlet_rows
from ..time_stepping import TimeScheme

INLET, OUTLET, FLOOR, CEILING = 1, 2, 3, 4
LENGTH, HEIGHT = 6.0, 2.5
BEAM_X = (1.9, 2.1)
BEAM_TOP = 1.0
CELL = 0.1
U_INF = 1.0
PROBE = (BEAM_X[1], BEAM_TOP)        # top-right corner of the structure

PARAMS = MaterialParams.from_young(rho_f=1.0, mu_f=0.035, rho_s=1.1, E=1000.0, nu=0.3)


def graded(x0, x1, n, h0, reverse=False):
    """``n`` cells on ``[x0, x1]`` growing geometrically from size ``h0``."""
    span = x1 - x0
    if abs(n * h0 - span) < 1e-12:
        steps = np.full(n, h0)
    else:
        r = brentq(lambda r: h0 * (r ** n - 1) / (r - 1) - span, 1.0 + 1e-9, 3.0)
        steps = h0 * r ** np.arange(n)
    if reverse:
        steps = steps[::-1]
    pts = x0 + np.concatenate([[0.0], np.cumsum(steps)])
    pts[-1] = x1
    return pts


def beam_meshes():
    """Generate the conforming ``(fluid, solid)`` meshes."""
    xl, xr = BEAM_X
    xs = np.concatenate([graded(0.0, xl, 12, CELL, reverse=True)[:-1],
                         np.linspace(xl, xr, 3)[:-1],
                         graded(xr, LENGTH, 26, CELL)])
    ys = np.concatenate([np.linspace(0.0, BEAM_TOP, 11)[:-1], graded(BEAM_TOP, HEIGHT, 10, CELL)])
    ys = np.round(ys, 15)
    xs = np.round(xs, 15)

    def in_beam(x, y):
        return xl < x < xr and y < BEAM_TOP

    def fluid_tag(p, q):
        if p[0] == 0.0 and q[0] == 0.0:
            return INLET
        if p[0] == LENGTH and q[0] == LENGTH:
            return OUTLET
        if p[1] == 0.0 and q[1] == 0.0:
            return FLOOR
        if p[1] == HEIGHT and q[1] == HEIGHT:
            return CEILING
        return INTERFACE

    fluid = generate_tensor_grid(xs, ys, keep=lambda x, y: not in_beam(x, y), tagger=fluid_tag)
    bx = np.linspace(xl, xr, 3)
    by = np.linspace(0.0, BEAM_TOP, 11)
    solid = generate_tensor_grid(bx, by, tagger=lambda p, q: FLOOR if p[1] == 0.0 and q[1] == 0.0 else INTERFACE)
    return fluid, solid


def load_beam_meshes():
    """Load the shipped mesh files (falls back to generation if absent)."""
    base = resources.files("fsiopt") / "data"
    try:
        with resources.as_file(base / "beam_fluid.msh") as f, resources.as_file(base / "beam_solid.msh") as s:
            return load_mesh(f), load_mesh(s)
    except FileNotFoundError:
        return beam_meshes()


def inflow_ramp(t):
    return 0.5 * (1 - np.cos(np.pi * t / 2)) if t <= 2.0 else 1.0


@dataclass
class BeamCase:
    problem: FsiProblem
    state0: object
    variant: str


def release_ramp(t, duration):
    return 0.5 * (1 + np.cos(np.pi * t / duration)) if t < duration else 0.0


def build_beam(dt=0.05, variant="inflow", params=PARAMS, bdf_order=2, amplitude=1e-4,
               gamma=0.5, beta=0.25, meshes=None, ale_velocity="bdf", release=0.2):
    """Beam-in-channel problem.

    ``variant="inflow"`` is the driven benchmark.  ``variant="isolated"`` closes
    every outer fluid boundary except the outlet, which stays traction free.  The
    beam starts at rest in static equilibrium under a uniform lateral load of
    deflection ``amplitude``; the load is released smoothly over ``release``.
    """
    fluid, solid = meshes or load_beam_meshes()
    dir_tags = (INLET, FLOOR, CEILING)
    masks = build_dof_masks(fluid, solid, INTERFACE, (dir_tags, (FLOOR,)))
    scheme = TimeScheme(dt=dt, gamma=gamma, beta=beta, bdf_order=bdf_order, ale_velocity=ale_velocity)
    if variant == "inflow":
        inlet_nodes = fluid.tag_nodes(INLET)
        y = fluid.nodes[inlet_nodes, 1]
        profile = np.zeros(masks.n_u)
        profile[2 * inlet_nodes] = 4 * U_INF / HEIGHT ** 2 * y * (HEIGHT - y)
        base = profile[masks.f_dir]
        data = ProblemData(fluid_dirichlet=lambda t: inflow_ramp(t) * base, ramp=inflow_ramp)
    elif variant == "isolated":
        data = ProblemData()
    else:
        raise ValueError(f"unknown beam variant {variant!r}")
    pb = FsiProblem(fluid, solid, masks, params, scheme, data, u_ref=U_INF)
    state0 = pb.zero_state()
    if variant == "isolated":
        sa = pb.sasm
        fq = np.zeros(sa.wJ.shape + (2,))
        fq[..., 0] = 1.0
        K = dirichlet_rows(sa.linearize(np.zeros(sa.n_s))[1], masks.s_dir)
        F = sa.load_vector(fq)
        F[masks.s_dir] = 0.0
        d = SparseLU(K).solve(F)
        scale = amplitude / np.abs(d[0::2]).max()
        state0.d[:] = scale * d
        F = scale * F
        pb.data = ProblemData(solid_load=lambda t: release_ramp(t, release) * F)
    return BeamCase(pb, state0, variant)
