"""Discrete-event network simulation of blame rounds on a mesh."""

from .election import ElectionResult, run_election
from .events import CausalityError, EventKind, EventQueue, FloodSchedule, SimEvent, adjacency_of, flood
from .topology import MeshTopology, TopologyError, build_mesh, default_time_params
from .round import (
    BlameKind,
    GridFlood,
    Latencies,
    Phase,
    PhaseMetrics,
    RoundResult,
    Scenario,
    WireSizes,
    grid_flood,
    run_round,
)
