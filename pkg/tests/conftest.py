import sys

import numpy as np
import pytest

from fsiopt.mesh import BOTTOM, INTERFACE, TOP, build_dof_masks
from fsiopt.params import MaterialParams
from fsiopt.problem import FsiProblem, FsiState
from fsiopt.scenarios.manufactured import PARAMS, build_meshes
from fsiopt.time_stepping import TimeScheme


def square_problem(h=0.25, law="linear", frozen=False, dt=0.1, data=None):
    """Unit-square fluid under a (0,1)x(1,1.25) solid, fluid clamped at the bottom, solid at the top."""
    fluid, solid = build_meshes(h)
    masks = build_dof_masks(fluid, solid, INTERFACE, ((BOTTOM,), (TOP,)))
    params = MaterialParams(rho_f=PARAMS.rho_f, mu_f=PARAMS.mu_f, rho_s=PARAMS.rho_s,
                            mu_s=PARAMS.mu_s, lam_s=PARAMS.lam_s, law=law)
    return FsiProblem(fluid, solid, masks, params, TimeScheme(dt=dt), data, frozen=frozen)


def random_state(pb, seed=0, scale=0.02, k=1):
    """Smooth-ish random state with a small interface displacement and nonzero history."""
    rng = np.random.default_rng(seed)
    m = pb.masks
    u = rng.normal(size=m.n_u)
    u[m.f_dir] = 0.0
    d = scale * rng.normal(size=m.n_s)
    d[m.s_dir] = 0.0
    return FsiState(k, k * pb.scheme.dt, u, rng.normal(size=m.n_p), d, rng.normal(size=m.n_s),
                    rng.normal(size=m.n_s), rng.normal(size=m.n_c),
                    u_prev=rng.normal(size=m.n_u), d_prev=d + scale * rng.normal(size=m.n_s))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[k])
