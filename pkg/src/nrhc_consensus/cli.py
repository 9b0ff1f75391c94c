"""Command-line front end: scenario presets, config files and CSV output.

Config files are JSON; see ``CONFIG_SCHEMA`` for the layout. Matrices are
row-major nested lists (or flat lists); weights and ``As`` also accept a
diagonal vector.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import oracle
from .dynamics import LinearModel
from .graph import EXAMPLE3_ADJACENCY, SwitchingSchedule, Topology, paired_edge_topologies
from .ocp import (CostWeights, HorizonSchedule, NeighborSnapshot, grad_H_u, grad_H_x, hamiltonian,
                  terminal_cost, terminal_gradient)
from .sim import SimConfig, SimulationDiverged, TrajectoryLog, run
from .sweep import AgentSolverState, IntegratorConfig, backward_sweep, horizon_grid

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_DIVERGENCE = 3
EXIT_IO = 4

PRESETS = ("example1", "example2", "example3")

# initial states of the four agents, one row per agent
EXAMPLE_X0 = np.array([
    [-1.0, 10.0, 2.0],
    [2.0, -1.0, 5.0],
    [-10.0, 20.0, 8.0],
    [9.0, -10.0, -2.0],
])
EXAMPLE1_DWELL = 0.5

_matrix = {"type": "array", "items": {"anyOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]}}
_weights = {
    "type": "object",
    "required": ["Q", "QN", "R"],
    "additionalProperties": False,
    "properties": {"Q": _matrix, "QN": _matrix, "R": _matrix},
}

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["x0", "topologies", "switching"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "model": {"type": "string"},
        "gauss_newton": {"type": "boolean"},
        "x0": {"type": "array", "minItems": 1, "items": {"type": "array", "minItems": 1, "items": {"type": "number"}}},
        "weights": {"anyOf": [_weights, {"type": "array", "minItems": 1, "items": _weights}]},
        "horizon": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"Tf": {"type": "number"}, "alpha": {"type": "number"}},
        },
        "integrator": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ts": {"type": "number"},
                "tau_step": {"type": "number"},
                "As": {"anyOf": [{"type": "number"}, _matrix]},
                "scheme": {"enum": ["rk4", "euler"]},
            },
        },
        "t_end": {"type": "number"},
        "delay": {"type": "number"},
        "topologies": {"type": "array", "minItems": 1, "items": _matrix},
        "switching": {
            "type": "object",
            "required": ["mode"],
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["fixed", "auto"]},
                "switches": {
                    "type": "array",
                    "items": {"type": "array", "prefixItems": [{"type": "number"}, {"type": "integer"}],
                              "minItems": 2, "maxItems": 2},
                },
                "initial": {"type": "integer"},
            },
        },
    },
}


class ConfigError(ValueError):
    """Invalid scenario configuration; the message names the offending field."""


def _field(label: str, build, *args, **kwargs):
    try:
        return build(*args, **kwargs)
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigError(f"{label}: {exc}") from exc


def config_from_dict(doc: dict) -> SimConfig:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None

    x0 = np.array(doc["x0"], dtype=float) if _rectangular(doc["x0"]) else None
    if x0 is None:
        raise ConfigError("x0: rows must all have the same length")
    n = x0.shape[1]

    raw_w = doc.get("weights", {"Q": [1.0] * n, "QN": [1.0] * n, "R": [1.0] * n})
    if isinstance(raw_w, dict):
        raw_w = [raw_w]
    weights = [_field(f"weights[{i}]", CostWeights, np.array(w["Q"], float), np.array(w["QN"], float),
                      np.array(w["R"], float)) for i, w in enumerate(raw_w)]

    hz = doc.get("horizon", {})
    horizon = _field("horizon", HorizonSchedule, float(hz.get("Tf", 1.0)), float(hz.get("alpha", 0.01)))

    ig = doc.get("integrator", {})
    As = ig.get("As", -50.0)
    As = np.array(As, dtype=float)
    if As.ndim == 0:
        As = float(As) * np.eye(n)
    elif As.ndim == 1 and As.size == n * n and n > 1:
        As = As.reshape(n, n)
    integrator = _field("integrator", IntegratorConfig, float(ig.get("tau_step", 0.005)),
                        float(ig.get("ts", 0.01)), As, ig.get("scheme", "rk4"))

    topologies = [_field(f"topologies[{k}]", Topology, np.array(a, dtype=float))
                  for k, a in enumerate(doc["topologies"])]
    sw = doc["switching"]
    if sw["mode"] == "auto":
        if "switches" in sw:
            raise ConfigError("switching/switches: not allowed in auto mode")
        schedule = _field("switching", SwitchingSchedule.auto, topologies, int(sw.get("initial", 0)))
    else:
        if "switches" not in sw:
            raise ConfigError("switching/switches: required in fixed mode")
        schedule = _field("switching", SwitchingSchedule.fixed, topologies,
                          [(float(t), int(k)) for t, k in sw["switches"]])

    return _field("config", SimConfig, x0=x0, schedule=schedule, weights=weights, horizon=horizon,
                  integrator=integrator, t_end=float(doc.get("t_end", 20.0)),
                  delay=float(doc.get("delay", 0.0)), model=doc.get("model", "lorenz"),
                  gauss_newton=bool(doc.get("gauss_newton", False)), name=doc.get("name", "custom"))


def _rectangular(rows) -> bool:
    return len({len(r) for r in rows}) == 1


def _mat(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.asarray(a)]


def config_to_dict(config: SimConfig) -> dict:
    sched = config.schedule
    if sched.is_auto:
        switching = {"mode": "auto", "initial": sched.initial}
    else:
        switching = {"mode": "fixed", "switches": [[t, k] for t, k in sched.switches]}
    ig = config.integrator
    return {
        "name": config.name,
        "model": config.model,
        "gauss_newton": config.gauss_newton,
        "x0": _mat(config.x0),
        "weights": [{"Q": _mat(w.Q), "QN": _mat(w.QN), "R": _mat(w.R)} for w in config.weights],
        "horizon": {"Tf": config.horizon.Tf, "alpha": config.horizon.alpha},
        "integrator": {"ts": ig.ts, "tau_step": ig.tau_step, "As": _mat(ig.As), "scheme": ig.scheme},
        "t_end": config.t_end,
        "delay": config.delay,
        "topologies": [_mat(t.adjacency) for t in sched.topologies],
        "switching": switching,
    }


def emit_config(config: SimConfig, path=None) -> str:
    text = json.dumps(config_to_dict(config), indent=2)
    if path is not None:
        Path(path).write_text(text + "\n")
    return text


def preset_config(name: str, t_end: Optional[float] = None, delay: Optional[float] = None) -> SimConfig:
    """Example scenarios. ``example3`` defaults to ``t_d = 0.2`` and needs ``t_d > 0``."""
    if name not in PRESETS:
        raise ConfigError(f"preset: unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    common = dict(x0=EXAMPLE_X0, weights=[CostWeights.identity(3)], horizon=HorizonSchedule(1.0, 0.01),
                  integrator=IntegratorConfig(0.005, 0.01, -50.0 * np.eye(3), "rk4"), model="lorenz", name=name)
    if name == "example3":
        t_end = 30.0 if t_end is None else t_end
        delay = 0.2 if delay is None else delay
        if not delay > 0:
            raise ConfigError("delay: example3 requires a positive communication delay")
        schedule = SwitchingSchedule.constant(Topology(EXAMPLE3_ADJACENCY))
    else:
        t_end = 20.0 if t_end is None else t_end
        delay = 0.0 if delay is None else delay
        topos = paired_edge_topologies()
        if name == "example1":
            schedule = SwitchingSchedule.round_robin(topos, EXAMPLE1_DWELL, t_end)
        else:
            schedule = SwitchingSchedule.auto(topos, initial=0)
    return _field("config", SimConfig, schedule=schedule, t_end=float(t_end), delay=float(delay), **common)


def load_config(source, t_end: Optional[float] = None, delay: Optional[float] = None) -> SimConfig:
    """Build a config from a preset name, a JSON file path or an already parsed dict.

    ``t_end`` and ``delay`` override the loaded values when given.
    """
    if isinstance(source, str) and source in PRESETS:
        return preset_config(source, t_end, delay)
    if isinstance(source, dict):
        doc = dict(source)
    else:
        path = Path(source)
        text = path.read_text()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: not valid JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
    if t_end is not None:
        doc["t_end"] = t_end
    if delay is not None:
        doc["delay"] = delay
    return config_from_dict(doc)


TRAJECTORY_HEADER = ["t", "agent", "x1", "x2", "x3", "u1", "u2", "u3", "sigma", "J", "P_norm", "consensus_err"]


def _header(n: int) -> list:
    if n == 3:
        return list(TRAJECTORY_HEADER)
    return (["t", "agent"] + [f"x{k + 1}" for k in range(n)] + [f"u{k + 1}" for k in range(n)]
            + ["sigma", "J", "P_norm", "consensus_err"])


def _num(v) -> str:
    return repr(float(v))


def write_trajectory(log: TrajectoryLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(_header(log.n))
        for k in range(len(log)):
            for i in range(log.m):
                w.writerow([_num(log.t[k]), i]
                           + [_num(v) for v in log.x[k][i]] + [_num(v) for v in log.u[k][i]]
                           + [log.sigma[k], _num(log.J[k][i]), _num(log.P_norm[k][i]), _num(log.consensus[k])])


def write_switching(log: TrajectoryLog, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "from", "to"])
        for t, a, b in log.switch_events():
            w.writerow([_num(t), a, b])


def metrics(log: TrajectoryLog, config: SimConfig, diverged: Optional[str] = None) -> dict:
    total = [float(np.sum(J)) for J in log.J]
    return {
        "name": config.name,
        "samples": len(log),
        "t_final": log.t[-1] if len(log) else None,
        "initial_consensus_error": log.consensus[0] if len(log) else None,
        "final_consensus_error": log.consensus[-1] if len(log) else None,
        "final_total_cost": total[-1] if total else None,
        "max_P_norm_final": float(np.max(log.P_norm[-1])) if len(log) else None,
        "diverged": diverged,
        "switch_events": [{"t": t, "from": a, "to": b} for t, a, b in log.switch_events()],
    }


def run_and_emit(config: SimConfig, out_dir, stream=None) -> int:
    """Simulate ``config`` and write ``trajectory.csv``, ``switching.csv``, ``metrics.json``."""
    stream = sys.stdout if stream is None else stream
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    t0 = time.perf_counter()
    status, diverged = EXIT_OK, None
    try:
        log = run(config)
    except SimulationDiverged as exc:
        log, diverged, status = exc.log, str(exc), EXIT_DIVERGENCE
        print(f"error: solver diverged: {exc}", file=sys.stderr)
    wall = time.perf_counter() - t0
    m = metrics(log, config, diverged)
    try:
        write_trajectory(log, out / "trajectory.csv")
        write_switching(log, out / "switching.csv")
        (out / "metrics.json").write_text(json.dumps(m, indent=2) + "\n")
    except OSError as exc:
        print(f"error: writing outputs to {out} failed: {exc}", file=sys.stderr)
        return EXIT_IO
    if len(log):
        print(f"{config.name}: t={log.t[-1]:g}  consensus error {m['final_consensus_error']:.6g} "
              f"(initial {m['initial_consensus_error']:.6g})  total cost {m['final_total_cost']:.6g}  "
              f"wall {wall:.1f} s", file=stream)
    return status


def fd_report(weights: CostWeights, model, n_points: int = 1000, seed: int = 0, bound: float = 20.0,
              spec: oracle.FiniteDifferenceSpec = oracle.FiniteDifferenceSpec()) -> dict:
    """Worst relative error of the analytic gradients against central differences.

    Points draw ``x``, ``u``, ``lam`` and up to three neighbour states from
    ``[-bound, bound]`` with neighbour weights in ``[0.5, 2]``.
    """
    rng = np.random.default_rng(seed)
    n = weights.n
    worst = {"grad_H_x": 0.0, "grad_H_u": 0.0, "terminal_gradient": 0.0}
    for _ in range(n_points):
        x, u, lam = rng.uniform(-bound, bound, (3, n))
        k = int(rng.integers(0, 4))
        nb = NeighborSnapshot([(j, rng.uniform(0.5, 2.0), rng.uniform(-bound, bound, n)) for j in range(k)], n=n)
        e = oracle.rel_err(grad_H_x(x, u, lam, nb, weights, model),
                           oracle.fd_gradient(lambda z: hamiltonian(z, u, lam, nb, weights, model), x, spec))
        worst["grad_H_x"] = max(worst["grad_H_x"], e)
        e = oracle.rel_err(grad_H_u(u, lam, weights),
                           oracle.fd_gradient(lambda z: hamiltonian(x, z, lam, nb, weights, model), u, spec))
        worst["grad_H_u"] = max(worst["grad_H_u"], e)
        e = oracle.rel_err(terminal_gradient(x, nb, weights),
                           oracle.fd_gradient(lambda z: terminal_cost(z, nb, weights), x, spec))
        worst["terminal_gradient"] = max(worst["terminal_gradient"], e)
    return worst


def sweep_riccati(A0, B_inv_R, Cq, S_T, T: float = 1.0, tau_step: float = 0.005) -> np.ndarray:
    """``S`` from the production backward sweep for the LTI agent ``F = A0 x``.

    ``C = Cq`` comes from one neighbour of weight 1 with ``Q = Cq``; ``B = R^-1``.
    """
    A0 = np.atleast_2d(np.array(A0, dtype=float))
    n = A0.shape[0]
    R = np.linalg.inv(np.atleast_2d(np.array(B_inv_R, dtype=float)))
    w = CostWeights(np.atleast_2d(np.array(Cq, dtype=float)), np.eye(n), 0.5 * (R + R.T))
    model = LinearModel(A0)
    nb = NeighborSnapshot([(0, 1.0, np.zeros(n))], n=n)
    st = AgentSolverState(lam=np.zeros(n))
    grid = horizon_grid(T, tau_step)
    st.grid = grid
    st.x_star = np.zeros((len(grid), n))
    st.lam_star = np.zeros((len(grid), n))
    st._xdot = np.zeros((len(grid), n))
    st._ldot = np.zeros((len(grid), n))
    backward_sweep(st, nb, w, model, np.atleast_2d(np.array(S_T, dtype=float)), np.zeros(n))
    return st.S


def _cmd_run(args) -> int:
    if args.config:
        config = load_config(args.config, args.t_end, args.delay)
    else:
        config = load_config(args.preset or "example1", args.t_end, args.delay)
    return run_and_emit(config, args.out)


def _cmd_check(args) -> int:
    config = load_config(args.config)
    print(f"ok: {config.name}: {config.m} agents, n={config.n}, t_end={config.t_end:g}, "
          f"delay={config.delay:g}, {'auto' if config.schedule.is_auto else 'fixed'} switching")
    return EXIT_OK


def _cmd_oracle(args) -> int:
    if args.check == "riccati-scalar":
        grid = horizon_grid(1.0, 0.005)
        ref = float(oracle.riccati_reference([[0.0]], [[1.0]], [[1.0]], [[0.0]], grid)[0, 0, 0])
        sw = float(sweep_riccati([[0.0]], [[1.0]], [[1.0]], [[0.0]])[0, 0, 0])
        exact = oracle.scalar_riccati_tanh(1.0)
        print(f"S(0) exact tanh(1) = {exact!r}")
        print(f"S(0) reference     = {ref!r}  err {abs(ref - exact):.3e}")
        print(f"S(0) sweep         = {sw!r}  err {abs(sw - exact):.3e}")
        return EXIT_OK if max(abs(ref - exact), abs(sw - exact)) < 1e-9 else 1
    config = load_config(args.preset)
    w = config.weights[0]
    t0 = time.perf_counter()
    worst = fd_report(w, config.build_model(), n_points=args.points, seed=args.seed)
    wall = time.perf_counter() - t0
    for key, val in worst.items():
        print(f"{key:18s} max rel err {val:.3e}  {'PASS' if val < 1e-6 else 'FAIL'}")
    print(f"{args.points} points in {wall:.2f} s")
    return EXIT_OK if max(worst.values()) < 1e-6 else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nrhc-consensus", description="Receding-horizon consensus of Lorenz agents.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a preset or config file")
    r.add_argument("--preset", choices=PRESETS)
    r.add_argument("--config", help="JSON config file (overrides --preset)")
    r.add_argument("--out", default="out", help="output directory")
    r.add_argument("--t-end", type=float, dest="t_end")
    r.add_argument("--delay", type=float)
    r.set_defaults(func=_cmd_run)

    c = sub.add_parser("check", help="validate a config file without running")
    c.add_argument("--config", required=True)
    c.set_defaults(func=_cmd_check)

    o = sub.add_parser("oracle", help="print certification reports")
    o.add_argument("check", choices=["riccati-scalar", "fd-check"])
    o.add_argument("--preset", choices=PRESETS, default="example1")
    o.add_argument("--points", type=int, default=1000)
    o.add_argument("--seed", type=int, default=0)
    o.set_defaults(func=_cmd_oracle)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
