"""flmesh: discrete-event simulation and exact optimization of hierarchical
federated-learning aggregation over capacitated edge/cloud networks.

Physical topologies carry clients, edge nodes, and a cloud joined by
capacitated links; training-round requests arrive stochastically; placement
strategies (two-level baseline vs. overlay-mesh consolidation, plus an
exact small-scale optimizer) claim node and link capacity; metrics report
failure rates, utilization, and weighted-capacity cost.
"""

__version__ = "0.1.0"

from .allocators import (
    CostParams,
    OverlayEdge,
    OverlayTopology,
    PlacementDecision,
    aggregator_edge_cost,
    cloud_report_cost,
    hfel_edge_association,
    hfel_mesh_overlay,
    place_request,
)
from .engine import (
    LatencyConstants,
    ResultsLog,
    SimConfig,
    aggregation_latency,
    run,
    training_latency,
    transfer_latency,
)
from .ilp import IlpModel, IlpSolution, build_model, export_standard_form, verify_solution
from .ilp_oracle import brute_force_oracle
from .ilp_solver import SolveLimits, solve_exact
from .metrics import RunSummary, cumulative_weighted_capacity, export, mur, summarize, trfr
from .network import ClaimSet, NetworkState
from .scenario import Scenario, parse_scenario
from .topology import (
    AuxiliaryGraph,
    PhysicalGraph,
    PhysicalLink,
    PhysicalNode,
    PhysicalRoute,
    TopologyError,
    build_auxiliary_graph,
    builtin_topology,
    load_topology,
    shortest_physical_route,
)
from .workload import (
    ModelArch,
    TrainingRoundRequest,
    WorkloadConfig,
    generate_batch,
    generate_requests,
    model_catalog,
    request_link_load,
)
