"""Weighted directed topologies and switching schedules.

Orientation: ``a_ij > 0`` means agent ``i`` receives agent ``j``'s state,
so information flows along ``j -> i``. A family of topologies is jointly
connected when the union of their supports has a directed spanning tree,
i.e. some root reaches every node along information-flow edges.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np


@dataclass(frozen=True, eq=False)
class Topology:
    adjacency: np.ndarray

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=float)
        if a.ndim == 1:
            m = int(round(np.sqrt(a.size)))
            if m * m != a.size:
                raise ValueError(f"flat adjacency of length {a.size} is not square")
            a = a.reshape(m, m)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
            raise ValueError(f"adjacency must be a non-empty square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("adjacency contains non-finite entries")
        if np.any(a < 0):
            raise ValueError("adjacency weights must be non-negative")
        if np.any(np.diag(a) != 0):
            raise ValueError("adjacency must have a zero diagonal (no self loops)")
        a.setflags(write=False)
        object.__setattr__(self, "adjacency", a)

    @property
    def m(self) -> int:
        return self.adjacency.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Topology):
            return NotImplemented
        return np.array_equal(self.adjacency, other.adjacency)

    def __hash__(self):
        return hash(self.adjacency.tobytes())

    def to_list(self) -> List[float]:
        return [float(v) for v in self.adjacency.ravel()]


def neighbors(topo: Topology, i: int) -> frozenset:
    if not 0 <= i < topo.m:
        raise IndexError(f"node index {i} out of range for {topo.m} nodes")
    return frozenset(int(j) for j in np.flatnonzero(topo.adjacency[i] > 0))


def degree_laplacian(topo: Topology) -> Tuple[np.ndarray, np.ndarray]:
    """Return ``(D, L)`` with ``D = diag(row sums)`` and ``L = D - A``."""
    # in-degree sums over every column j (not j < M as sometimes printed)
    D = np.diag(topo.adjacency.sum(axis=1))
    return D, D - topo.adjacency


def _check_family(topologies: Sequence[Topology]) -> int:
    if len(topologies) == 0:
        raise ValueError("need at least one topology")
    m = topologies[0].m
    for k, t in enumerate(topologies):
        if t.m != m:
            raise ValueError(f"topology {k} has {t.m} nodes, expected {m}")
    return m


def union_graph(topologies: Sequence[Topology]) -> Topology:
    _check_family(topologies)
    return Topology(np.maximum.reduce([t.adjacency for t in topologies]))


def reachability(topo: Topology) -> np.ndarray:
    """Boolean ``R[i, j]``: information from ``j`` reaches ``i`` (reflexive)."""
    m = topo.m
    R = (topo.adjacency > 0) | np.eye(m, dtype=bool)
    # repeated squaring of the reflexive support gives the transitive closure
    steps = 1
    while steps < m - 1:
        R = (R.astype(np.int64) @ R.astype(np.int64)) > 0
        steps *= 2
    return R


def has_spanning_tree(topo: Topology) -> bool:
    """True if some root's information reaches every node."""
    return bool(reachability(topo).all(axis=0).any())


def is_jointly_connected(topologies: Sequence[Topology]) -> bool:
    return has_spanning_tree(union_graph(topologies))


@dataclass(frozen=True)
class SwitchingSchedule:
    """Piecewise-constant topology signal.

    ``switches`` holds ``(time, index)`` pairs for a fixed signal; ``None``
    marks an automatic schedule whose index is chosen online by the
    simulator (``initial`` gives the index used at ``t = 0``).
    """

    topologies: Tuple[Topology, ...]
    switches: Optional[Tuple[Tuple[float, int], ...]] = None
    initial: int = 0

    def __post_init__(self):
        topos = tuple(self.topologies)
        object.__setattr__(self, "topologies", topos)
        _check_family(topos)
        if not 0 <= self.initial < len(topos):
            raise ValueError(f"initial index {self.initial} out of range")
        if self.switches is None:
            return
        sw = tuple((float(t), int(k)) for t, k in self.switches)
        if not sw:
            raise ValueError("fixed schedule needs at least one switch")
        if sw[0][0] != 0.0:
            raise ValueError("first switch time must be 0")
        times = [t for t, _ in sw]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("switch times must be strictly increasing")
        for _, k in sw:
            if not 0 <= k < len(topos):
                raise ValueError(f"switch references topology {k}, only {len(topos)} given")
        object.__setattr__(self, "switches", sw)

    @property
    def is_auto(self) -> bool:
        return self.switches is None

    @property
    def m(self) -> int:
        return self.topologies[0].m

    @classmethod
    def fixed(cls, topologies, switches) -> "SwitchingSchedule":
        return cls(tuple(topologies), tuple(switches))

    @classmethod
    def auto(cls, topologies, initial: int = 0) -> "SwitchingSchedule":
        return cls(tuple(topologies), None, initial)

    @classmethod
    def constant(cls, topology: Topology) -> "SwitchingSchedule":
        return cls((topology,), ((0.0, 0),))

    @classmethod
    def round_robin(cls, topologies, dwell: float, t_end: float) -> "SwitchingSchedule":
        topologies = tuple(topologies)
        if dwell <= 0:
            raise ValueError("dwell must be positive")
        count = max(1, int(np.ceil(t_end / dwell)))
        switches = [(k * dwell, k % len(topologies)) for k in range(count)]
        return cls(topologies, tuple(switches))


def sigma_at(schedule: SwitchingSchedule, t: float) -> int:
    if t < 0:
        raise ValueError(f"time must be non-negative, got {t}")
    if schedule.is_auto:
        raise RuntimeError("automatic schedules are resolved by the simulator")
    times = [s for s, _ in schedule.switches]
    k = int(np.searchsorted(times, t, side="right")) - 1
    return schedule.switches[k][1]


def _from_edges(m: int, edges) -> Topology:
    a = np.zeros((m, m))
    for src, dst in edges:
        a[dst, src] = 1.0
    return Topology(a)


def ring_edge_topologies(m: int = 4) -> List[Topology]:
    """One directed edge per subgraph: ``0->1, 1->2, ..., (m-1)->0``."""
    return [_from_edges(m, [(k, (k + 1) % m)]) for k in range(m)]


def paired_edge_topologies() -> List[Topology]:
    """Four 4-node subgraphs with two disjoint directed edges each.

    ``{0->1, 2->3}``, ``{1->2, 3->0}``, ``{1->0, 3->2}``, ``{2->1, 0->3}``.
    No subgraph has a spanning tree; the union is a bidirectional ring.
    """
    return [
        _from_edges(4, [(0, 1), (2, 3)]),
        _from_edges(4, [(1, 2), (3, 0)]),
        _from_edges(4, [(1, 0), (3, 2)]),
        _from_edges(4, [(2, 1), (0, 3)]),
    ]


default_topologies = paired_edge_topologies


EXAMPLE3_ADJACENCY = np.array([
    [0, 0, 1, 0],
    [1, 0, 1, 0],
    [0, 1, 0, 1],
    [1, 0, 0, 0],
], dtype=float)
