"""Convergence tables and energy-balance reports over the scenarios."""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..metrics import convergence_rates, energy_ledger
from ..solvers import integrate
from .manufactured import run_manufactured


@dataclass
class ConvergenceRow:
    h: float
    dt: float
    E_s: float
    eta_s: float
    E_f: float
    eta_f: float
    iterations: float


def convergence_study(bdf_order, pairs, T=1.0, solver="sqp-exact", config=None, metric="nodal"):
    """Errors and rates on the manufactured problem for jointly refined ``(h, dt)`` pairs."""
    Ef, Es, its = [], [], []
    for h, dt in pairs:
        ef, es, rec = run_manufactured(h, dt, bdf_order=bdf_order, T=T, solver=solver, config=config,
                                       metric=metric)
        Ef.append(ef)
        Es.append(es)
        its.append(sum(r.iterations for r in rec) / max(len(rec), 1))
    rf = [math.nan] + list(convergence_rates(Ef))
    rs = [math.nan] + list(convergence_rates(Es))
    return [ConvergenceRow(h, dt, Es[i], rs[i], Ef[i], rf[i], its[i]) for i, (h, dt) in enumerate(pairs)]


def energy_balance_report(problem, state0, n_steps, solver="sqp-exact", config=None):
    """Integrate and return the per-step energy ledger."""
    energies = [problem.energies(state0)]
    integrate(problem, state0, n_steps, solver, config,
              callback=lambda st, rec: energies.append(problem.energies(st)))
    return energy_ledger(energies, problem.scheme.dt)
