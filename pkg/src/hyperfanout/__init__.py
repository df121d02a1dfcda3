from importlib.metadata import version

from hyperfanout.graph import (
    AllowedTargets,
    BalanceSpec,
    BipartiteGraph,
    EdgeList,
    PartitionState,
    apply_moves,
    build_graph,
    init_random_partition,
)
from hyperfanout.io import (
    generate_planted,
    read_edge_list,
    read_hmetis,
    read_hypergraph,
    read_partition,
    read_snap,
    write_edge_list,
    write_hmetis,
    write_partition,
)
from hyperfanout.metrics import MetricsReport, evaluate
from hyperfanout.objective import (
    NeighborData,
    ScoreFunction,
    clique_weight,
    move_gain,
    score_query,
    soed,
    total_objective,
    weighted_edge_cut,
)
from hyperfanout.recurse import direct_partition, recursive_partition, run_direct, run_recursive
from hyperfanout.refine import RefineParams, epsilon_schedule, refine_loop

__all__ = [
    "EdgeList",
    "BipartiteGraph",
    "AllowedTargets",
    "PartitionState",
    "BalanceSpec",
    "build_graph",
    "init_random_partition",
    "apply_moves",
    "ScoreFunction",
    "NeighborData",
    "score_query",
    "total_objective",
    "move_gain",
    "clique_weight",
    "weighted_edge_cut",
    "soed",
    "RefineParams",
    "refine_loop",
    "epsilon_schedule",
    "direct_partition",
    "recursive_partition",
    "run_direct",
    "run_recursive",
    "MetricsReport",
    "evaluate",
    "read_hypergraph",
    "read_hmetis",
    "write_hmetis",
    "read_edge_list",
    "write_edge_list",
    "read_snap",
    "read_partition",
    "write_partition",
    "generate_planted",
]

__version__ = version("hyperfanout")
