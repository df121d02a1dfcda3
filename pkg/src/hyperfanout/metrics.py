from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

from hyperfanout._constants._constants import Defaults, ReportKeys
from hyperfanout.graph import BipartiteGraph, PartitionState
from hyperfanout.objective import NeighborData, ScoreFunction, objective_sum, soed, weighted_edge_cut

__all__ = ["MetricsReport", "evaluate"]


@dataclass(frozen=True)
class MetricsReport:
    """Quality of a partition; serialized with the field names of :class:`ReportKeys`."""

    k: int
    p: float
    num_queries: int
    num_data: int
    num_edges: int
    average_fanout: float
    p_fanout: float
    soed: int
    weighted_edge_cut: int
    hyperedge_cut: int
    max_imbalance: float
    bucket_sizes: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            ReportKeys.K.v: self.k,
            ReportKeys.P.v: self.p,
            ReportKeys.NUM_QUERIES.v: self.num_queries,
            ReportKeys.NUM_DATA.v: self.num_data,
            ReportKeys.NUM_EDGES.v: self.num_edges,
            ReportKeys.AVERAGE_FANOUT.v: self.average_fanout,
            ReportKeys.P_FANOUT.v: self.p_fanout,
            ReportKeys.SOED.v: self.soed,
            ReportKeys.WEIGHTED_EDGE_CUT.v: self.weighted_edge_cut,
            ReportKeys.HYPEREDGE_CUT.v: self.hyperedge_cut,
            ReportKeys.MAX_IMBALANCE.v: self.max_imbalance,
            ReportKeys.BUCKET_SIZES.v: list(self.bucket_sizes),
        }


def evaluate(graph: BipartiteGraph, state: PartitionState, p: float = Defaults.P) -> MetricsReport:
    """
    Evaluate a partition of the data vertices of ``graph``.

    Parameters
    ----------
    graph
        The graph.
    state
        Any partition of its data vertices, however it was produced.
    p
        Probability of the p-fanout.

    Returns
    -------
    :class:`MetricsReport`. Fanouts are averaged over the queries, the imbalance is ``max_i |V_i| / (n / k) - 1``.
    """
    if state.num_data != graph.num_data:
        raise ValueError(f"The partition covers {state.num_data} vertices, the graph has {graph.num_data}.")
    nd = NeighborData.from_state(graph, state)
    fanout = nd.fanout()
    num_queries = graph.num_queries
    n = graph.num_data
    return MetricsReport(
        k=state.k,
        p=float(p),
        num_queries=num_queries,
        num_data=n,
        num_edges=graph.num_edges,
        average_fanout=float(nd.nnz) / num_queries if num_queries else 0.0,
        p_fanout=objective_sum(nd, ScoreFunction.p_fanout(p)) / num_queries if num_queries else 0.0,
        soed=soed(graph, state, nd),
        weighted_edge_cut=weighted_edge_cut(graph, state, nd),
        hyperedge_cut=int(np.count_nonzero(fanout > 1)),
        max_imbalance=float(state.bucket_size.max() / (n / state.k) - 1.0) if n else 0.0,
        bucket_sizes=tuple(int(s) for s in state.bucket_size),
    )
