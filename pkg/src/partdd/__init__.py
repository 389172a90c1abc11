"""Partitioned dual decomposition for block-structured convex problems over a network."""

__version__ = "0.1.0"

from .blockspace import BlockLayout, Partition
from .duals import DualLayout, dual_cost, dual_gradient, lipschitz_constants
from .engine_async import run_async, run_coordinate_reference, step_size_async
from .engine_sync import run_sync, step_size_sync
from .graph import Graph, complete_graph, erdos_renyi, path_graph
from .local_solver import project_polyhedron, solve_local
from .oracle import fd_dual_gradient, solve_centralized
from .problem import PartitionedProblem, PolyhedralConstraint, QuadraticObjective, UtilityObjective

__all__ = [
    "BlockLayout",
    "Partition",
    "DualLayout",
    "dual_cost",
    "dual_gradient",
    "lipschitz_constants",
    "run_async",
    "run_coordinate_reference",
    "step_size_async",
    "run_sync",
    "step_size_sync",
    "Graph",
    "complete_graph",
    "erdos_renyi",
    "path_graph",
    "project_polyhedron",
    "solve_local",
    "fd_dual_gradient",
    "solve_centralized",
    "PartitionedProblem",
    "PolyhedralConstraint",
    "QuadraticObjective",
    "UtilityObjective",
]
