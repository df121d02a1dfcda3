from __future__ import annotations

import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any, Optional, Union

import numpy as np
from scipy.sparse import csr_matrix

from hyperfanout._logging import logger
from hyperfanout._utils import NDArrayA

__all__ = [
    "EdgeList",
    "BipartiteGraph",
    "AllowedTargets",
    "PartitionState",
    "BalanceSpec",
    "build_graph",
    "init_random_partition",
    "apply_moves",
]

# guards floor((1+eps)*n/k) against values like 2.9999999999999996
_CAPACITY_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class EdgeList:
    """
    Query/data incidences as read from a file, in external ids.

    Parameters
    ----------
    queries
        Query id of every incidence.
    data
        Data id of every incidence.
    all_data
        Optional data ids that must exist in the graph even if they appear in no incidence.
    """

    queries: NDArrayA
    data: NDArrayA
    all_data: Optional[NDArrayA] = None

    def __post_init__(self) -> None:
        if len(self.queries) != len(self.data):
            raise ValueError(
                f"`queries` and `data` must have the same length, found {len(self.queries)} and {len(self.data)}."
            )

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Any, Any]], all_data: Optional[Iterable[Any]] = None) -> EdgeList:
        """Build an edge list from ``(query_id, data_id)`` pairs."""
        pairs = list(pairs)
        queries = np.asarray([q for q, _ in pairs])
        data = np.asarray([d for _, d in pairs])
        extra = None if all_data is None else np.asarray(list(all_data))
        return cls(queries, data, extra)

    def __len__(self) -> int:
        return len(self.queries)


class BipartiteGraph:
    """
    Immutable query/data incidence structure of a hypergraph.

    Queries are hyperedges and data vertices are the vertices being partitioned. Both adjacency directions are kept
    in CSR form with sorted neighbor lists; internal ids are dense in ``[0, num_queries)`` and ``[0, num_data)``.

    Parameters
    ----------
    incidence
        ``num_queries x num_data`` matrix with one stored entry per edge.
    query_ids
        External id of every query.
    data_ids
        External id of every data vertex.
    """

    def __init__(self, incidence: csr_matrix, query_ids: NDArrayA, data_ids: NDArrayA) -> None:
        incidence = csr_matrix(incidence, dtype=np.int64)
        incidence.sort_indices()
        if incidence.shape != (len(query_ids), len(data_ids)):
            raise ValueError(
                f"Incidence shape {incidence.shape} does not match {len(query_ids)} queries and "
                f"{len(data_ids)} data vertices."
            )
        transposed = incidence.T.tocsr()
        transposed.sort_indices()
        self._incidence = incidence
        self._transposed = transposed
        self.query_ids = np.asarray(query_ids)
        self.data_ids = np.asarray(data_ids)
        self.query_indptr = incidence.indptr.astype(np.int64)
        self.query_indices = incidence.indices.astype(np.int64)
        self.data_indptr = transposed.indptr.astype(np.int64)
        self.data_indices = transposed.indices.astype(np.int64)

    @property
    def incidence(self) -> csr_matrix:
        """Query by data incidence matrix."""
        return self._incidence

    @property
    def num_queries(self) -> int:
        return len(self.query_ids)

    @property
    def num_data(self) -> int:
        return len(self.data_ids)

    @property
    def num_edges(self) -> int:
        return len(self.query_indices)

    @property
    def query_degrees(self) -> NDArrayA:
        return np.diff(self.query_indptr)

    @property
    def data_degrees(self) -> NDArrayA:
        return np.diff(self.data_indptr)

    @property
    def max_query_degree(self) -> int:
        return int(self.query_degrees.max()) if self.num_queries else 0

    def query_adj(self, q: int) -> NDArrayA:
        """Sorted data neighbors of query ``q``."""
        return self.query_indices[self.query_indptr[q] : self.query_indptr[q + 1]]

    def data_adj(self, v: int) -> NDArrayA:
        """Sorted query neighbors of data vertex ``v``."""
        return self.data_indices[self.data_indptr[v] : self.data_indptr[v + 1]]

    def edge_queries(self) -> NDArrayA:
        """Query endpoint of every edge, in CSR order."""
        return np.repeat(np.arange(self.num_queries, dtype=np.int64), self.query_degrees)

    def edges(self) -> EdgeList:
        """The graph's edges in external ids, isolated data vertices included."""
        return EdgeList(
            self.query_ids[self.edge_queries()],
            self.data_ids[self.query_indices],
            all_data=self.data_ids.copy(),
        )

    def equals(self, other: BipartiteGraph) -> bool:
        """Structural equality, including external ids."""
        return (
            self.num_queries == other.num_queries
            and self.num_data == other.num_data
            and np.array_equal(self.query_indptr, other.query_indptr)
            and np.array_equal(self.query_indices, other.query_indices)
            and np.array_equal(self.query_ids, other.query_ids)
            and np.array_equal(self.data_ids, other.data_ids)
        )

    def __repr__(self) -> str:
        return (
            f"{type(self).__name__}(num_queries={self.num_queries}, num_data={self.num_data}, "
            f"num_edges={self.num_edges})"
        )


def build_graph(edges: Union[EdgeList, Iterable[tuple[Any, Any]]]) -> BipartiteGraph:
    """
    Build the bipartite query/data graph of a hypergraph.

    Duplicate incidences are dropped, then queries left with fewer than two data neighbors are removed. Data
    vertices that only belonged to removed queries are kept as isolated vertices. Internal ids follow the sorted
    order of the external ids.

    Parameters
    ----------
    edges
        An :class:`EdgeList` or an iterable of ``(query_id, data_id)`` pairs.

    Returns
    -------
    :class:`BipartiteGraph`
    """
    if not isinstance(edges, EdgeList):
        edges = EdgeList.from_pairs(edges)
    if len(edges) == 0:
        raise ValueError("Cannot build a graph from an empty edge list.")

    query_ids, q = np.unique(edges.queries, return_inverse=True)
    universe = edges.data if edges.all_data is None else np.concatenate([edges.data, edges.all_data])
    data_ids, d = np.unique(universe, return_inverse=True)
    q = q.reshape(-1).astype(np.int64)
    d = d.reshape(-1)[: len(edges)].astype(np.int64)

    num_data = len(data_ids)
    pairs = np.unique(q * num_data + d)
    q, d = np.divmod(pairs, num_data)
    if len(pairs) < len(edges):
        logger.debug(f"Dropped {len(edges) - len(pairs)} duplicate incidences.")

    degree = np.bincount(q, minlength=len(query_ids))
    keep = degree >= 2
    if not keep.all():
        logger.info(f"Removed {int((~keep).sum())} queries of degree one.")
    remap = np.cumsum(keep) - 1
    mask = keep[q]
    q, d = remap[q[mask]], d[mask]
    query_ids = query_ids[keep]

    indptr = np.concatenate([[0], np.cumsum(np.bincount(q, minlength=len(query_ids)))]).astype(np.int64)
    incidence = csr_matrix(
        (np.ones(len(d), dtype=np.int64), d, indptr),
        shape=(len(query_ids), num_data),
    )
    return BipartiteGraph(incidence, query_ids, data_ids)


@dataclass(frozen=True, eq=False)
class AllowedTargets:
    """
    Buckets each data vertex may occupy.

    Vertices are grouped; every vertex of group ``g`` may occupy exactly the buckets in ``children[g]``. Rows of
    ``children`` are ascending and padded with ``-1``.
    """

    group_of: NDArrayA
    children: NDArrayA

    @classmethod
    def full(cls, n: int, k: int) -> AllowedTargets:
        """Every vertex may occupy every one of the ``k`` buckets."""
        return cls(np.zeros(n, dtype=np.int64), np.arange(k, dtype=np.int64)[None, :])

    @property
    def arity(self) -> int:
        """Maximum number of buckets a vertex may choose from."""
        return int(self.children.shape[1])

    def of(self, v: int) -> frozenset[int]:
        """The permitted buckets of vertex ``v``."""
        row = self.children[self.group_of[v]]
        return frozenset(int(b) for b in row[row >= 0])

    def candidates(self, vertices: NDArrayA) -> NDArrayA:
        """Padded ``len(vertices) x arity`` matrix of permitted buckets."""
        return self.children[self.group_of[vertices]]

    def contains(self, vertices: NDArrayA, targets: NDArrayA) -> NDArrayA:
        """Whether each ``targets[i]`` is permitted for ``vertices[i]``."""
        targets = np.asarray(targets, dtype=np.int64)
        rows = self.candidates(np.asarray(vertices, dtype=np.int64))
        return (targets >= 0) & (rows == targets[:, None]).any(axis=1)


@dataclass(frozen=True, eq=False)
class PartitionState:
    """
    Assignment of data vertices to buckets.

    ``bucket_size[i]`` always equals the number of vertices with ``bucket_of == i`` and every vertex sits in one
    of its allowed buckets. Instances are never mutated; :func:`apply_moves` returns a new state.
    """

    bucket_of: NDArrayA
    k: int
    bucket_size: NDArrayA
    allowed: AllowedTargets

    @classmethod
    def from_assignment(
        cls, bucket_of: Sequence[int] | NDArrayA, k: int, allowed: Optional[AllowedTargets] = None
    ) -> PartitionState:
        """Validate an assignment and derive the bucket sizes."""
        bucket_of = np.asarray(bucket_of, dtype=np.int64).copy()
        if k < 1:
            raise ValueError(f"The number of buckets must be positive, found {k}.")
        if len(bucket_of) and (bucket_of.min() < 0 or bucket_of.max() >= k):
            raise ValueError(f"Bucket ids must lie in [0, {k}).")
        if allowed is None:
            allowed = AllowedTargets.full(len(bucket_of), k)
        elif not allowed.contains(np.arange(len(bucket_of)), bucket_of).all():
            raise ValueError("Some vertices are assigned to buckets outside their allowed targets.")
        return cls(bucket_of, k, np.bincount(bucket_of, minlength=k).astype(np.int64), allowed)

    @property
    def num_data(self) -> int:
        return len(self.bucket_of)

    def allowed_targets(self, v: int) -> frozenset[int]:
        return self.allowed.of(v)

    def equals(self, other: PartitionState) -> bool:
        return (
            self.k == other.k
            and np.array_equal(self.bucket_of, other.bucket_of)
            and np.array_equal(self.bucket_size, other.bucket_size)
        )


def init_random_partition(graph: BipartiteGraph, k: int, seed: int) -> PartitionState:
    """
    Assign every data vertex to a bucket drawn uniformly from ``[0, k)``.

    Parameters
    ----------
    graph
        The graph whose data vertices are assigned.
    k
        Number of buckets, at least 2.
    seed
        Seed of the generator; equal seeds give equal assignments.

    Returns
    -------
    :class:`PartitionState`
    """
    if k < 2:
        raise ValueError(f"At least 2 buckets are required, found k={k}.")
    rng = np.random.default_rng(seed)
    return PartitionState.from_assignment(rng.integers(0, k, size=graph.num_data), k)


def apply_moves(state: PartitionState, moves: Sequence[tuple[int, int]] | NDArrayA) -> PartitionState:
    """
    Move vertices to new buckets.

    The batch is atomic: if any target is not allowed for its vertex, nothing moves and a :class:`ValueError`
    is raised.

    Parameters
    ----------
    state
        Current state, left untouched.
    moves
        ``(vertex, target_bucket)`` pairs, or an ``m x 2`` integer array.

    Returns
    -------
    The new :class:`PartitionState`.
    """
    moves = np.asarray(moves, dtype=np.int64).reshape(-1, 2)
    vertices, targets = moves[:, 0], moves[:, 1]
    if len(vertices) == 0:
        return state
    if vertices.min() < 0 or vertices.max() >= state.num_data:
        raise ValueError(f"Vertex ids must lie in [0, {state.num_data}).")
    if len(np.unique(vertices)) != len(vertices):
        raise ValueError("A vertex may be moved at most once per batch.")
    if targets.min() < 0 or targets.max() >= state.k:
        raise ValueError(f"Target buckets must lie in [0, {state.k}).")
    allowed = state.allowed.contains(vertices, targets)
    if not allowed.all():
        bad = int(np.flatnonzero(~allowed)[0])
        raise ValueError(
            f"Bucket {int(targets[bad])} is not an allowed target of vertex {int(vertices[bad])}; "
            "no move was applied."
        )

    bucket_of = state.bucket_of.copy()
    sources = bucket_of[vertices]
    bucket_of[vertices] = targets
    bucket_size = (
        state.bucket_size
        - np.bincount(sources, minlength=state.k)
        + np.bincount(targets, minlength=state.k)
    ).astype(np.int64)
    return PartitionState(bucket_of, state.k, bucket_size, state.allowed)


@dataclass(frozen=True)
class BalanceSpec:
    """
    Bucket capacity constraint ``|V_i| <= (1 + epsilon) n / k``.

    Parameters
    ----------
    epsilon
        Allowed imbalance, non-negative.
    """

    epsilon: float

    def __post_init__(self) -> None:
        if not self.epsilon >= 0:
            raise ValueError(f"`epsilon` must be non-negative, found {self.epsilon}.")

    def capacity(self, n: int, k: int) -> int:
        """``floor((1 + epsilon) n / k)``; raises if ``k`` such buckets cannot hold ``n`` vertices."""
        cap = math.floor((1.0 + self.epsilon) * n / k + _CAPACITY_TOLERANCE)
        if cap * k < n:
            raise ValueError(f"Infeasible balance: {k} buckets of capacity {cap} cannot hold {n} vertices.")
        return cap

    def capacities(self, n: int, k: int, split_factors: Optional[NDArrayA] = None) -> NDArrayA:
        """
        Capacity of every bucket.

        A bucket that will be split into ``t`` final buckets gets ``floor((1 + epsilon) n t / k)``; without
        ``split_factors`` every bucket gets :meth:`capacity`.
        """
        if split_factors is None:
            return np.full(k, self.capacity(n, k), dtype=np.int64)
        t = np.asarray(split_factors, dtype=np.float64)
        total = t.sum()
        return np.floor((1.0 + self.epsilon) * n * t / total + _CAPACITY_TOLERANCE).astype(np.int64)
