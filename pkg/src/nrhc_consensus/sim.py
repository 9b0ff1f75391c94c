"""Closed-loop multi-agent simulation.

Each sample ``t_k = k * ts`` is synchronous: the active topology is
resolved, every agent receives a frozen (possibly delayed) snapshot of its
neighbours, all agents run one solver pass, and only then do the plants
advance. The control applied over ``[t_k, t_k + ts)`` is ``-R^-1 Lam(t_k)``,
i.e. the value produced by the previous pass.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .dynamics import DynamicsModel, get_model
from .graph import SwitchingSchedule, Topology, neighbors, sigma_at
from .ocp import CostWeights, HorizonSchedule, NeighborSnapshot, horizon_cost
from .sweep import AgentSolverState, IntegratorConfig, SolverDivergence, advance


def _steps(value: float, ts: float, what: str) -> int:
    k = round(value / ts)
    if abs(k * ts - value) > 1e-9 * max(1.0, abs(value)):
        raise ValueError(f"{what}={value} is not an integer multiple of ts={ts}")
    return int(k)


@dataclass(eq=False)
class SimConfig:
    x0: np.ndarray
    schedule: SwitchingSchedule
    weights: Sequence[CostWeights]
    horizon: HorizonSchedule = field(default_factory=HorizonSchedule)
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    t_end: float = 20.0
    delay: float = 0.0
    model: str = "lorenz"
    gauss_newton: bool = False
    name: str = "custom"

    def __post_init__(self):
        x0 = np.array(self.x0, dtype=float)
        if x0.ndim != 2:
            raise ValueError("x0 must be an m x n array")
        self.x0 = x0
        m, n = x0.shape
        if m < 1:
            raise ValueError("need at least one agent")
        if isinstance(self.weights, CostWeights):
            self.weights = [self.weights] * m
        self.weights = list(self.weights)
        if len(self.weights) == 1 and m > 1:
            self.weights = self.weights * m
        if len(self.weights) != m:
            raise ValueError(f"weights: expected {m} entries, got {len(self.weights)}")
        for i, w in enumerate(self.weights):
            if w.n != n:
                raise ValueError(f"weights[{i}] has dimension {w.n}, states have {n}")
        if self.schedule.m != m:
            raise ValueError(f"schedule topologies have {self.schedule.m} nodes, x0 has {m} agents")
        if self.integrator.As.shape != (n, n):
            raise ValueError(f"As must be {n}x{n}")
        if not self.t_end >= 0:
            raise ValueError("t_end must be non-negative")
        if self.delay < 0:
            raise ValueError("delay must be non-negative")
        self.delay_steps = _steps(self.delay, self.integrator.ts, "delay")
        self.n_steps = int(math.floor(self.t_end / self.integrator.ts + 1e-9))
        dyn = self.build_model()
        if dyn.n != n:
            raise ValueError(f"model {self.model!r} has dimension {dyn.n}, states have {n}")

    @property
    def m(self) -> int:
        return self.x0.shape[0]

    @property
    def n(self) -> int:
        return self.x0.shape[1]

    @property
    def ts(self) -> float:
        return self.integrator.ts

    def build_model(self) -> DynamicsModel:
        return get_model(self.model, gauss_newton=self.gauss_newton)

    def __eq__(self, other):
        if not isinstance(other, SimConfig):
            return NotImplemented
        return (np.array_equal(self.x0, other.x0)
                and self.schedule == other.schedule
                and self.weights == other.weights
                and self.horizon == other.horizon
                and self.integrator == other.integrator
                and self.t_end == other.t_end and self.delay == other.delay
                and self.model == other.model and self.gauss_newton == other.gauss_newton)


class DelayBuffer:
    """Per-agent history of sampled states, indexed by sample number.

    Lookups older than the stored history return the initial state.
    """

    def __init__(self, x0: np.ndarray, delay_steps: int):
        self.delay_steps = delay_steps
        self.x0 = np.array(x0, dtype=float)
        self._hist = deque(maxlen=delay_steps + 1)
        self._hist.append((0, self.x0.copy()))

    def push(self, k: int, states: np.ndarray) -> None:
        if k != self._hist[-1][0] + 1:
            raise ValueError(f"samples must be pushed in order; got {k} after {self._hist[-1][0]}")
        self._hist.append((k, np.array(states, dtype=float)))

    def delayed(self, k: int) -> np.ndarray:
        """States at sample ``k - delay_steps`` (initial states before that)."""
        target = k - self.delay_steps
        if target <= 0:
            return self.x0
        k0 = self._hist[0][0]
        if not k0 <= target <= self._hist[-1][0]:
            raise LookupError(f"sample {target} not in buffer [{k0}, {self._hist[-1][0]}]")
        return self._hist[target - k0][1]

    def lookup(self, agent: int, k: int) -> np.ndarray:
        return self.delayed(k)[agent]


def _snapshot_from(states: np.ndarray, i: int, topo: Topology) -> NeighborSnapshot:
    a = topo.adjacency[i]
    return NeighborSnapshot([(j, a[j], states[j]) for j in sorted(neighbors(topo, i))],
                            n=states.shape[1])


def snapshot_neighbors(k: int, i: int, topo: Topology, buffer: DelayBuffer) -> NeighborSnapshot:
    """Neighbour states of agent ``i`` as seen at sample ``k`` (delayed)."""
    return _snapshot_from(buffer.delayed(k), i, topo)


def consensus_error(states) -> tuple:
    """Return ``(delta, max_norm)`` with ``delta_i = x_i - x_1`` stacked for i >= 2."""
    states = np.asarray(states, dtype=float)
    d = states[1:] - states[0]
    if len(d) == 0:
        return np.zeros(0), 0.0
    return d.ravel(), float(np.linalg.norm(d, axis=1).max())


@dataclass
class SwitchDecision:
    t: float
    chosen: int
    costs: np.ndarray
    # inputs kept for independent re-evaluation
    grids: Optional[list] = None
    x_stars: Optional[list] = None
    u_stars: Optional[list] = None
    neighbor_states: Optional[np.ndarray] = None


@dataclass
class TrajectoryLog:
    m: int
    n: int
    t: List[float] = field(default_factory=list)
    x: List[np.ndarray] = field(default_factory=list)
    u: List[np.ndarray] = field(default_factory=list)
    sigma: List[int] = field(default_factory=list)
    J: List[np.ndarray] = field(default_factory=list)
    P_norm: List[np.ndarray] = field(default_factory=list)
    consensus: List[float] = field(default_factory=list)
    delta: List[np.ndarray] = field(default_factory=list)
    decisions: List[SwitchDecision] = field(default_factory=list)

    def append(self, t, x, u, sigma, J, P_norm):
        delta, err = consensus_error(x)
        self.t.append(t)
        self.x.append(np.array(x))
        self.u.append(np.array(u))
        self.sigma.append(int(sigma))
        self.J.append(np.array(J))
        self.P_norm.append(np.array(P_norm))
        self.delta.append(delta)
        self.consensus.append(err)

    def __len__(self):
        return len(self.t)

    def arrays(self) -> dict:
        return {
            "t": np.array(self.t),
            "x": np.array(self.x).reshape(len(self), self.m, self.n),
            "u": np.array(self.u).reshape(len(self), self.m, self.n),
            "sigma": np.array(self.sigma, dtype=int),
            "J": np.array(self.J).reshape(len(self), self.m),
            "P_norm": np.array(self.P_norm).reshape(len(self), self.m),
            "consensus": np.array(self.consensus),
        }

    def switch_events(self) -> list:
        """``(t, from, to)`` for every change of the active topology."""
        ev = []
        for k in range(1, len(self.sigma)):
            if self.sigma[k] != self.sigma[k - 1]:
                ev.append((self.t[k], self.sigma[k - 1], self.sigma[k]))
        return ev


class SimulationDiverged(RuntimeError):
    def __init__(self, cause: SolverDivergence, log: TrajectoryLog):
        super().__init__(str(cause))
        self.cause = cause
        self.log = log


class World:
    """Mutable simulation state advanced by :func:`step`."""

    def __init__(self, config: SimConfig, record_decisions: bool = False, buffered: bool = True):
        if not buffered and config.delay_steps:
            raise ValueError("unbuffered snapshots require zero delay")
        self.config = config
        self.buffered = buffered
        self.model = config.build_model()
        self.k = 0
        self.states = config.x0.copy()
        self.buffer = DelayBuffer(config.x0, config.delay_steps)
        self.log = TrajectoryLog(config.m, config.n)
        self.record_decisions = record_decisions
        sched = config.schedule
        self.sigma = sched.initial if sched.is_auto else sigma_at(sched, 0.0)
        topo = sched.topologies[self.sigma]
        self.solvers = [
            AgentSolverState.initial(config.x0[i], _snapshot_from(config.x0, i, topo), config.weights[i])
            for i in range(config.m)
        ]

    @property
    def t(self) -> float:
        # rounding keeps switch instants such as 1.5 exact
        return round(self.k * self.config.ts, 10)

    def neighbor_states(self) -> np.ndarray:
        return self.buffer.delayed(self.k) if self.buffered else self.states

    def snapshots(self, topo: Topology) -> List[NeighborSnapshot]:
        states = self.neighbor_states()
        return [_snapshot_from(states, i, topo) for i in range(self.config.m)]


def candidate_costs(world: World, candidates: Sequence[Topology]) -> np.ndarray:
    """Total cost ``sum_i J_i`` of each candidate on the agents' latest horizon solutions."""
    cfg = world.config
    states = world.neighbor_states()
    costs = np.empty(len(candidates))
    for c, topo in enumerate(candidates):
        total = 0.0
        for i, st in enumerate(world.solvers):
            nb = _snapshot_from(states, i, topo)
            total += horizon_cost(st.grid, st.x_star, st.u_star, nb, cfg.weights[i])
        costs[c] = total
    return costs


def select_topology(world: World, t: float, candidates: Sequence[Topology]) -> int:
    """Index of the cheapest candidate; ties go to the lowest index."""
    if len(candidates) == 0:
        raise ValueError("no candidate topologies")
    costs = candidate_costs(world, candidates)
    chosen = int(np.argmin(costs))
    if world.record_decisions:
        world.log.decisions.append(SwitchDecision(
            t=t, chosen=chosen, costs=costs,
            grids=[s.grid.copy() for s in world.solvers],
            x_stars=[s.x_star.copy() for s in world.solvers],
            u_stars=[s.u_star.copy() for s in world.solvers],
            neighbor_states=world.neighbor_states().copy(),
        ))
    else:
        world.log.decisions.append(SwitchDecision(t=t, chosen=chosen, costs=costs))
    return chosen


def _plant_step(model: DynamicsModel, x: np.ndarray, u: np.ndarray, ts: float, substeps: int) -> np.ndarray:
    f = model._f
    h = ts / substeps
    for _ in range(substeps):
        k1 = f(x) + u
        k2 = f(x + 0.5 * h * k1) + u
        k3 = f(x + 0.5 * h * k2) + u
        k4 = f(x + h * k3) + u
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def step(world: World, integrate: bool = True) -> World:
    """Process sample ``k``: topology, snapshots, solver passes, log, plant."""
    cfg = world.config
    sched = cfg.schedule
    t = world.t
    if sched.is_auto:
        if world.k > 0:
            world.sigma = select_topology(world, t, sched.topologies)
    else:
        world.sigma = sigma_at(sched, t)
    topo = sched.topologies[world.sigma]
    snaps = world.snapshots(topo)

    u_applied = np.array([-(w.R_inv @ s.lam) for w, s in zip(cfg.weights, world.solvers)])
    J = np.empty(cfg.m)
    P_norm = np.empty(cfg.m)
    for i, (st, nb) in enumerate(zip(world.solvers, snaps)):
        try:
            advance(st, world.states[i], nb, cfg.weights[i], world.model, t, cfg.integrator, cfg.horizon)
        except SolverDivergence as exc:
            raise exc.locate(agent=i, t=t)
        J[i] = horizon_cost(st.grid, st.x_star, st.u_star, nb, cfg.weights[i])
        P_norm[i] = float(np.linalg.norm(st.P))
    world.log.append(t, world.states, u_applied, world.sigma, J, P_norm)

    if integrate:
        substeps = max(1, math.ceil(cfg.ts / cfg.integrator.tau_step - 1e-9))
        new = np.array([_plant_step(world.model, world.states[i], u_applied[i], cfg.ts, substeps)
                        for i in range(cfg.m)])
        if not np.all(np.isfinite(new)):
            raise SolverDivergence("non-finite plant state", t=t)
        world.states = new
        world.k += 1
        world.buffer.push(world.k, new)
    return world


def run(config: SimConfig, record_decisions: bool = False, progress=None,
        buffered: bool = True) -> TrajectoryLog:
    """Simulate from ``t = 0`` to ``t_end``; one log record per sample."""
    world = World(config, record_decisions=record_decisions, buffered=buffered)
    try:
        for k in range(config.n_steps):
            step(world)
            if progress is not None:
                progress(world)
        step(world, integrate=False)
    except SolverDivergence as exc:
        raise SimulationDiverged(exc, world.log) from exc
    return world.log
