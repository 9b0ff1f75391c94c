"""Distributed receding-horizon consensus of nonlinear agents over switching topologies."""
from .dynamics import DynamicsModel, IntegratorModel, LinearModel, LorenzModel, get_model, register_model
from .graph import (SwitchingSchedule, Topology, has_spanning_tree, is_jointly_connected, neighbors,
                    sigma_at, union_graph)
from .ocp import CostWeights, HorizonSchedule, NeighborSnapshot
from .sim import DelayBuffer, SimConfig, SimulationDiverged, TrajectoryLog, World, run, step
from .sweep import AgentSolverState, IntegratorConfig, SolverDivergence, advance

__all__ = [
    "AgentSolverState", "CostWeights", "DelayBuffer", "DynamicsModel", "HorizonSchedule", "IntegratorConfig",
    "IntegratorModel", "LinearModel", "LorenzModel", "NeighborSnapshot", "SimConfig", "SimulationDiverged",
    "SolverDivergence", "SwitchingSchedule", "Topology", "TrajectoryLog", "World", "advance", "get_model",
    "has_spanning_tree", "is_jointly_connected", "neighbors", "register_model", "run", "sigma_at", "step",
    "union_graph",
]
