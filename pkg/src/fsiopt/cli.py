"""``fsiopt`` command-line front end.

    fsiopt solve|pod|rom|hybrid|convergence|compare --config run.ini [--out DIR] [--deterministic] [--text]

Exit codes: 0 success, 2 configuration error, 3 solver non-convergence, 4 IO error.
"""
from __future__ import annotations

import argparse
import configparser
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

log = logging.getLogger("fsiopt")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
SCENARIOS = ("beam", "beam-isolated", "manufactured")
SOLVER_NAMES = ("sqp-exact", "sqp-inexact", "dtn", "monolithic")
STRATEGIES = ("lspg", "pg-lagged", "galerkin")


class ConfigError(ValueError):
    pass


# --- configuration ----------------------------------------------------------------------

def _number(text):
    text = text.strip()
    try:
        return float(Fraction(text)) if "/" in text else float(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not a number: {text!r}") from exc


def _bool(text):
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


@dataclass
class RunConfig:
    scenario: str = "beam"
    h: float = 1 / 15
    fluid: dict = None
    solid: dict = None
    law: str = "linear"
    dt: float | None = None
    T: float | None = None
    bdf_order: int = 2
    gamma: float = 0.5
    beta: float = 0.25
    sample_dt: float | None = None
    solver: str = "sqp-exact"
    delta: float = 1e-8
    tol: float = 1e-6
    theta0: float = 0.05
    max_iter: int = 50
    tol_pod_f: float = 1e-5
    tol_pod_s: float = 1e-5
    tol_pod_c: float = 1e-5
    tol_en: float = 0.1
    enrich: bool = True
    jes_factor: float = 2.0
    strategy: str = "lspg"
    pairs: tuple = ((1 / 15, 0.01), (1 / 30, 0.005))
    schemes: tuple = (2, 1)
    compare_steps: int = 10
    compare_solvers: tuple = ("sqp-exact", "sqp-inexact", "dtn")
    out: str = "out"
    text: bool = False

    def scenario_settings(self):
        """Everything that defines the full-order trajectory (hashed into archives)."""
        return {"scenario": self.scenario, "h": self.h if self.scenario == "manufactured" else None,
                "fluid": self.fluid, "solid": self.solid, "law": self.law, "dt": self.dt, "T": self.T,
                "bdf_order": self.bdf_order, "gamma": self.gamma, "beta": self.beta}


def load_config(path) -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        with open(path) as f:
            cp.read_file(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config {path}: {exc}") from exc
    c = RunConfig()
    known = {"scenario", "fluid", "solid", "time", "coupling", "rom", "convergence", "compare", "output"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    g = lambda sec, key: cp.get(sec, key, fallback=None)
    if g("scenario", "name") is not None:
        c.scenario = g("scenario", "name").strip()
    if c.scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {c.scenario!r}; expected one of {SCENARIOS}")
    if g("scenario", "h") is not None:
        c.h = _number(g("scenario", "h"))
    c.fluid = {k: _number(v) for k, v in cp.items("fluid")} if cp.has_section("fluid") else {}
    c.solid = {k: _number(v) for k, v in cp.items("solid") if k != "law"} if cp.has_section("solid") else {}
    c.law = (g("solid", "law") or "linear").strip()
    bad = set(c.fluid) - {"rho", "mu"}
    bad |= set(c.solid) - {"rho", "mu", "lam", "E", "nu"}
    if bad:
        raise ConfigError(f"unknown material keys: {sorted(bad)}")
    for key in ("dt", "T", "gamma", "beta", "sample_dt"):
        if g("time", key) is not None:
            setattr(c, key, _number(g("time", key)))
    if g("time", "bdf_order") is not None:
        c.bdf_order = int(_number(g("time", "bdf_order")))
    if g("coupling", "solver") is not None:
        c.solver = g("coupling", "solver").strip()
    for key in ("delta", "tol", "theta0"):
        if g("coupling", key) is not None:
            setattr(c, key, _number(g("coupling", key)))
    if g("coupling", "max_iter") is not None:
        c.max_iter = int(_number(g("coupling", "max_iter")))
    if g("rom", "tol_pod") is not None:
        c.tol_pod_f = c.tol_pod_s = c.tol_pod_c = _number(g("rom", "tol_pod"))
    for key in ("tol_pod_f", "tol_pod_s", "tol_pod_c", "tol_en", "jes_factor"):
        if g("rom", key) is not None:
            setattr(c, key, _number(g("rom", key)))
    if g("rom", "enrich") is not None:
        c.enrich = _bool(g("rom", "enrich"))
    if g("rom", "strategy") is not None:
        c.strategy = g("rom", "strategy").strip()
    if g("convergence", "pairs") is not None:
        c.pairs = tuple(tuple(_number(x) for x in p.split(":")) for p in g("convergence", "pairs").split(","))
        if any(len(p) != 2 for p in c.pairs):
            raise ConfigError("convergence pairs must look like 'h:dt, h:dt'")
    if g("convergence", "schemes") is not None:
        names = [s.strip().lower() for s in g("convergence", "schemes").split(",")]
        if any(n not in ("bdf1", "bdf2") for n in names):
            raise ConfigError(f"unknown schemes {names}")
        c.schemes = tuple(int(n[-1]) for n in names)
    if g("compare", "steps") is not None:
        c.compare_steps = int(_number(g("compare", "steps")))
    if g("compare", "solvers") is not None:
        c.compare_solvers = tuple(s.strip() for s in g("compare", "solvers").split(","))
    if g("output", "dir") is not None:
        c.out = g("output", "dir").strip()
    if g("output", "text") is not None:
        c.text = _bool(g("output", "text"))
    _validate(c)
    return c


def _validate(c: RunConfig):
    if c.solver not in SOLVER_NAMES or any(s not in SOLVER_NAMES for s in c.compare_solvers):
        raise ConfigError(f"solver must be one of {SOLVER_NAMES}")
    if c.strategy not in STRATEGIES:
        raise ConfigError(f"rom strategy must be one of {STRATEGIES}")
    if c.law not in ("linear", "stvk"):
        raise ConfigError(f"unknown solid law {c.law!r}")
    if c.bdf_order not in (1, 2):
        raise ConfigError("bdf_order must be 1 or 2")
    for key in ("h", "tol", "theta0"):
        if not getattr(c, key) > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("dt", "T", "sample_dt"):
        v = getattr(c, key)
        if v is not None and not v > 0:
            raise ConfigError(f"{key} must be positive")
    if c.delta < 0 or min(c.tol_pod_f, c.tol_pod_s, c.tol_pod_c) < 0 or c.tol_en <= 0:
        raise ConfigError("tolerances must be nonnegative (tol_en positive)")
    if c.max_iter < 1 or c.compare_steps < 1:
        raise ConfigError("iteration and step counts must be positive")


# --- scenario construction ------------------------------------------------------------------

def _params(c: RunConfig, default):
    from .params import MaterialParams
    kw = {"rho_f": c.fluid.get("rho", default.rho_f), "mu_f": c.fluid.get("mu", default.mu_f),
          "rho_s": c.solid.get("rho", default.rho_s), "law": c.law}
    if "E" in c.solid or "nu" in c.solid:
        if "E" not in c.solid or "nu" not in c.solid:
            raise ConfigError("give both E and nu for the solid")
        return MaterialParams.from_young(E=c.solid["E"], nu=c.solid["nu"], **kw)
    return MaterialParams(mu_s=c.solid.get("mu", default.mu_s), lam_s=c.solid.get("lam", default.lam_s), **kw)


@dataclass
class Built:
    problem: object
    state0: object
    dt: float
    n_steps: int
    probe: object = None
    exact_errors: object = None


def build(c: RunConfig) -> Built:
    from .metrics import Probe
    try:
        if c.scenario == "manufactured":
            from .scenarios import manufactured as mf
            dt = c.dt or 0.01
            case = mf.build_manufactured(c.h, dt, bdf_order=c.bdf_order, gamma=c.gamma, beta=c.beta,
                                         params=_params(c, mf.PARAMS))
            T = c.T or 1.0
            return Built(case.problem, case.state0, dt, int(round(T / dt)), None, case.errors_sq)
        from .scenarios import beam
        dt = c.dt or 0.05
        variant = "isolated" if c.scenario == "beam-isolated" else "inflow"
        case = beam.build_beam(dt=dt, variant=variant, params=_params(c, beam.PARAMS), bdf_order=c.bdf_order,
                               gamma=c.gamma, beta=c.beta)
        T = c.T or 6.0
        return Built(case.problem, case.state0, dt, int(round(T / dt)), Probe(case.problem.solid_mesh, beam.PROBE))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def coupling_config(c: RunConfig):
    from .solvers import CouplingConfig
    return CouplingConfig(delta=c.delta, tol=c.tol, theta0=c.theta0, max_iter=c.max_iter)


def rom_config(c: RunConfig):
    from .rom import RomConfig
    return RomConfig(tol_pod_f=c.tol_pod_f, tol_pod_s=c.tol_pod_s, tol_pod_c=c.tol_pod_c, tol_en=c.tol_en,
                     enrich=c.enrich, jes_factor=c.jes_factor, fluid_model=c.strategy)


# --- outputs -----------------------------------------------------------------------------

HISTORY = ["step[-]", "t[time]", "iterations[-]", "converged[-]", "drag[force]", "lift[force]",
           "probe_dx[length]", "probe_dy[length]"]


def history_row(b: Built, state, iterations, converged):
    drag, lift = b.problem.drag_lift(state)
    px, py = b.probe(state.d) if b.probe is not None else (math.nan, math.nan)
    return [int(state.k), float(state.t), int(iterations), int(bool(converged)), float(drag), float(lift),
            float(px), float(py)]


def _write_json(path, obj):
    from .io import write_atomic
    write_atomic(path, (json.dumps(obj, sort_keys=True, indent=1) + "\n").encode())


# --- commands ----------------------------------------------------------------------------

def cmd_solve(c: RunConfig, out: Path, deterministic: bool):
    from .io import SnapshotArchive, scenario_hash, write_csv
    from .solvers import NonConvergenceError, integrate
    b = build(c)
    states = [b.state0]
    rows = [history_row(b, b.state0, 0, True)]
    walls = [0.0]

    def cb(st, rec):
        states.append(st)
        rows.append(history_row(b, st, rec.iterations, rec.converged))
        walls.append(rec.wall)

    failure = None
    try:
        integrate(b.problem, b.state0, b.n_steps, c.solver, coupling_config(c), callback=cb)
    except NonConvergenceError as exc:
        failure = str(exc)
    extra = {"solver": c.solver, "failed": failure}
    arch = SnapshotArchive.from_states(states, scenario_hash(c.scenario_settings()), b.dt, c.sample_dt or b.dt, extra)
    arch.write(out / "snapshots", text=c.text)
    header = HISTORY + ([] if deterministic else ["wall[s]"])
    if not deterministic:
        rows = [r + [w] for r, w in zip(rows, walls)]
    write_csv(out / "history.csv", header, rows)
    summary = {"steps": len(states) - 1, "requested_steps": b.n_steps, "failed": failure,
               "avg_iterations": float(np.mean([r[2] for r in rows[1:]])) if len(rows) > 1 else 0.0}
    if b.exact_errors is not None and len(states) > 1:
        from .metrics import time_averaged_error
        e = np.array([b.exact_errors(s) for s in states[1:]])
        summary["E_f"] = time_averaged_error(e[:, 0])
        summary["E_s"] = time_averaged_error(e[:, 1])
    _write_json(out / "summary.json", summary)
    if failure:
        log.error("%s (last good step %d retained)", failure, len(states) - 1)
        return EXIT_SOLVER
    return EXIT_OK


def _load_archive(c: RunConfig, out: Path):
    from .io import ArchiveError, SnapshotArchive, scenario_hash
    arch = SnapshotArchive.read(out / "snapshots")
    if arch.manifest["scenario_hash"] != scenario_hash(c.scenario_settings()):
        raise ArchiveError("snapshot archive was produced by a different scenario configuration (hash mismatch)")
    return arch


def _snapshot_set(c, b: Built, arch):
    from .rom import SnapshotSet
    states = arch.states()
    stride = max(1, int(round((c.sample_dt or b.dt) / b.dt)))
    samples = np.arange(stride, len(states), stride)
    return SnapshotSet(states, samples, b.problem.data.ramp)


def cmd_pod(c: RunConfig, out: Path, deterministic: bool):
    from .io import write_basis, write_csv
    from .rom import build_spaces
    b = build(c)
    arch = _load_archive(c, out)
    snaps = _snapshot_set(c, b, arch)
    spaces = build_spaces(b.problem, snaps, rom_config(c), fluid=True)
    bases = out / "bases"
    for name, basis in (("fluid", spaces.fluid), ("solid", spaces.solid), ("control", spaces.control)):
        write_basis(bases / f"{name}.txt", basis.Z, name, basis.inner, basis.eigenvalues, n_pod=basis.n_pod)
        lam = np.clip(basis.eigenvalues, 0, None)
        tail = 1 - np.cumsum(lam) / lam.sum() if lam.sum() > 0 else np.zeros_like(lam)
        write_csv(out / f"eigenvalues_{name}.csv", ["index[-]", "eigenvalue[energy]", "discarded_fraction[-]"],
                  [[i + 1, float(x), float(max(r, 0.0))] for i, (x, r) in enumerate(zip(lam, tail))])
    write_basis(bases / "test.txt", spaces.test, "fluid-test", "h1-l2-fluid", ())
    _write_json(out / "pod_summary.json", {**spaces.info, "samples": len(snaps.samples)})
    return EXIT_OK


def _load_spaces(c, b: Built, snaps, out: Path, hybrid):
    from .io import read_basis
    from .rom import FluidLift, ReducedBasis, ReducedSpaces
    parts = {}
    for name in ("fluid", "solid", "control", "test"):
        path = out / "bases" / f"{name}.txt"
        if hybrid and name in ("fluid", "test"):
            continue
        Z, eig, head = read_basis(path)
        parts[name] = ReducedBasis(Z, eig, head.get("inner", ""), head.get("n_pod", Z.shape[1]))
    return ReducedSpaces(parts.get("fluid"), parts["solid"], parts["control"],
                         None if hybrid else parts["test"].Z, FluidLift(snaps), snaps.states[0].d)


def cmd_rom(c: RunConfig, out: Path, deterministic: bool, hybrid=False):
    from .io import write_csv
    from .rom import ReducedModel, trajectory_errors
    b = build(c)
    arch = _load_archive(c, out)
    snaps = _snapshot_set(c, b, arch)
    spaces = _load_spaces(c, b, snaps, out, hybrid)
    model = ReducedModel(b.problem, spaces, rom_config(c), coupling_config(c), hybrid=hybrid)
    fom = snaps.states
    rows = [history_row(b, fom[0], 0, True)]
    rom_states = model.run(fom[0], len(fom) - 1, snaps,
                           callback=lambda st, r: rows.append(history_row(b, st, r.iterations, r.converged)))
    tag = "hybrid" if hybrid else "rom"
    write_csv(out / f"{tag}_history.csv", HISTORY, rows)
    ef, es = trajectory_errors(b.problem, fom, rom_states)
    write_csv(out / f"{tag}_errors.csv", ["E_f_rel[-]", "E_s_rel[-]"], [[ef, es]])
    return EXIT_OK


def cmd_convergence(c: RunConfig, out: Path, deterministic: bool):
    from .io import write_csv
    from .scenarios.studies import convergence_study
    for order in c.schemes:
        rows = convergence_study(order, c.pairs, T=c.T or 1.0, solver=c.solver, config=coupling_config(c))
        write_csv(out / f"convergence_bdf{order}.csv",
                  ["h[length]", "dt[time]", "E_s[-]", "eta_s[-]", "E_f[-]", "eta_f[-]", "avg_iterations[-]"],
                  [[r.h, r.dt, r.E_s, r.eta_s, r.E_f, r.eta_f, r.iterations] for r in rows])
    return EXIT_OK


def cmd_compare(c: RunConfig, out: Path, deterministic: bool):
    from .io import write_csv
    from .solvers import integrate
    rows = []
    for solver in c.compare_solvers:
        b = build(c)
        t0 = time.perf_counter()
        _, rec = integrate(b.problem, b.state0, min(c.compare_steps, b.n_steps), solver, coupling_config(c))
        wall = time.perf_counter() - t0
        rows.append([solver, float(np.mean([r.iterations for r in rec])), "" if deterministic else float(wall)])
    write_csv(out / "compare.csv", ["method", "avg_iters[-]", "time[s]"], rows)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "pod": cmd_pod, "rom": cmd_rom,
            "hybrid": lambda c, o, d: cmd_rom(c, o, d, hybrid=True),
            "convergence": cmd_convergence, "compare": cmd_compare}


def main(argv=None):
    ap = argparse.ArgumentParser(prog="fsiopt", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True)
    ap.add_argument("--out")
    ap.add_argument("--deterministic", action="store_true", help="omit wall-clock columns")
    ap.add_argument("--text", action="store_true", help="decimal CSV snapshot records")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    from .io import ArchiveError
    from .rom import RankDeficiencyError
    from .solvers import NonConvergenceError
    try:
        c = load_config(args.config)
        if args.text:
            c = replace(c, text=True)
        out = Path(args.out or c.out)
        return COMMANDS[args.command](c, out, args.deterministic)
    except ConfigError as exc:
        print(f"fsiopt: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NonConvergenceError, RankDeficiencyError) as exc:
        print(f"fsiopt: solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (OSError, ArchiveError) as exc:
        print(f"fsiopt: IO error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
