"""Error norms, relative ROM errors, probes and signal summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .fem.basis import TRI_POINTS, TRI_WEIGHTS, geometry, p2_basis, vector_dofs


class QuadratureField:
    """Evaluate P2 vector fields and their gradients at the quadrature points of a mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.N, dN = p2_basis(TRI_POINTS)
        X = mesh.nodes[mesh.p2]
        det, self.dNx, _ = geometry(X, dN)
        self.wJ = TRI_WEIGHTS[None, :] * det
        self.points = np.einsum("qa,eai->eqi", self.N, X)
        self.dofs = vector_dofs(mesh.p2)

    def values(self, vec):
        ve = np.asarray(vec)[self.dofs].reshape(-1, 6, 2)
        return np.einsum("qa,eai->eqi", self.N, ve), np.einsum("eai,eqaj->eqij", ve, self.dNx)

    def h1_error_sq(self, vec, exact, grad):
        """``|v_h - v|_{H1}^2`` with ``exact(x, y) -> (n, 2)``, ``grad(x, y) -> (n, 2, 2)``."""
        val, gr = self.values(vec)
        x, y = self.points[..., 0].ravel(), self.points[..., 1].ravel()
        ev = np.asarray(exact(x, y)).reshape(val.shape)
        eg = np.asarray(grad(x, y)).reshape(gr.shape)
        err = np.sum((val - ev) ** 2, axis=-1) + np.sum((gr - eg) ** 2, axis=(-1, -2))
        return float(np.sum(self.wJ * err))


def time_averaged_error(errors_sq):
    """``sqrt(mean_k e_k^2)`` over the computed steps."""
    e = np.asarray(errors_sq, dtype=float)
    return float(np.sqrt(e.mean()))


def convergence_rates(errors):
    """``-log2`` of successive error ratios."""
    e = np.asarray(errors, dtype=float)
    return -np.log2(e[1:] / e[:-1])


def relative_error(fom, rom, X):
    """``sqrt(sum |fom - rom|_X^2 / sum |fom|_X^2)`` over a trajectory; ``nan`` if undefined."""
    num = den = 0.0
    for a, b in zip(fom, rom):
        a = np.asarray(a, dtype=float)
        e = a - np.asarray(b, dtype=float)
        num += float(e @ (X @ e))
        den += float(a @ (X @ a))
    if den == 0.0:
        return math.nan
    return math.sqrt(num / den)


def rom_error_report(fom_fluid, rom_fluid, fom_solid, rom_solid, X_f, X_s):
    return relative_error(fom_fluid, rom_fluid, X_f), relative_error(fom_solid, rom_solid, X_s)


class Probe:
    """P2 interpolation of a vector field at a fixed reference point."""

    def __init__(self, mesh, point):
        elem, xi = mesh.locate(point)
        self.point = tuple(map(float, point))
        N, _ = p2_basis(xi[None, :])
        self.N = N[0]
        self.dofs = vector_dofs(mesh.p2[elem:elem + 1])[0].reshape(6, 2)

    def __call__(self, vec):
        return self.N @ np.asarray(vec)[self.dofs]


def probe_displacement(mesh, displacements, point):
    """Time series ``(K, 2)`` of the displacement at ``point``."""
    probe = Probe(mesh, point)
    return np.array([probe(d) for d in displacements])


@dataclass
class SignalSummary:
    mean: float
    amplitude: float
    frequency: float


def zero_crossing_frequency(signal, dt):
    """Dominant-cycle frequency of a sampled signal from its mean crossings."""
    s = np.asarray(signal, dtype=float)
    s = s - s.mean()
    idx = np.flatnonzero((s[:-1] < 0) & (s[1:] >= 0))
    if len(idx) < 2:
        return 0.0
    # linear interpolation of the upward crossing times
    tc = (idx + (-s[idx]) / (s[idx + 1] - s[idx])) * dt
    return float((len(tc) - 1) / (tc[-1] - tc[0]))


def summarize_signal(signal, dt, window=2.0):
    """Mean, half peak-to-peak and frequency over the last ``window`` time units."""
    s = np.asarray(signal, dtype=float)
    n = min(len(s), max(2, int(round(window / dt)) + 1))
    tail = s[-n:]
    return SignalSummary(float(tail.mean()), 0.5 * float(tail.max() - tail.min()),
                         zero_crossing_frequency(tail, dt))


def energy_ledger(energies, dt):
    """Per-step energy balance from a list of ``problem.energies`` dictionaries.

    The defect at step K is ``E(t_K) - E(t_0) + int D - int P``, with the viscous
    dissipation ``D`` and the load power ``P`` integrated by the trapezoidal rule.
    """
    rows = []
    dissipated = supplied = 0.0
    E0 = None
    prev = None
    for k, e in enumerate(energies):
        total = e["kinetic_fluid"] + e["kinetic_solid"] + e["elastic"]
        if k == 0:
            E0 = total
        else:
            dissipated += 0.5 * dt * (e["dissipation_rate"] + prev["dissipation_rate"])
            supplied += 0.5 * dt * (e.get("load_power", 0.0) + prev.get("load_power", 0.0))
        prev = e
        rows.append({"step": k, **{key: e[key] for key in ("kinetic_fluid", "kinetic_solid", "elastic")},
                     "total": total, "dissipated": dissipated, "supplied": supplied,
                     "defect": total - E0 + dissipated - supplied})
    return rows
