from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.sparse import csr_matrix

from hyperfanout._constants._constants import Defaults, ScoreKind
from hyperfanout._docs import inject_docs
from hyperfanout._utils import NDArrayA
from hyperfanout.graph import BipartiteGraph, PartitionState

__all__ = [
    "ScoreFunction",
    "ScoreTable",
    "NeighborData",
    "score_query",
    "total_objective",
    "move_gain",
    "clique_weight",
    "weighted_edge_cut",
    "soed",
]


@inject_docs(sk=ScoreKind)
@dataclass(frozen=True)
class ScoreFunction:
    """
    Contribution ``f(n)`` of one query-bucket pair with ``n`` neighbors of the query in the bucket.

    Kinds:

        - ``{sk.P_FANOUT!r}``: ``1 - (1 - p)^n``, the probability that the bucket is contacted when every
          neighbor is needed independently with probability ``p``.
        - ``{sk.RECURSIVE_APPROX!r}``: ``t (1 - (1 - p / t)^n)``, a pessimistic estimate of the final p-fanout
          of a bucket that will be split into ``t`` buckets.
        - ``{sk.EXACT_FANOUT!r}``: ``1`` if ``n > 0``, the plain fanout.

    Every kind has ``f(0) = 0`` and is nondecreasing in ``n``.
    """

    kind: ScoreKind = ScoreKind.P_FANOUT
    p: float = Defaults.P
    t: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ScoreKind(self.kind))
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"`p` must lie in (0, 1], found {self.p}.")
        if not self.t >= 1.0:
            raise ValueError(f"The split factor `t` must be at least 1, found {self.t}.")

    @classmethod
    def p_fanout(cls, p: float = Defaults.P) -> ScoreFunction:
        return cls(ScoreKind.P_FANOUT, p)

    @classmethod
    def exact_fanout(cls) -> ScoreFunction:
        return cls(ScoreKind.EXACT_FANOUT, 1.0)

    @classmethod
    def recursive_approx(cls, p: float = Defaults.P, t: float = 1.0) -> ScoreFunction:
        return cls(ScoreKind.RECURSIVE_APPROX, p, t)

    def values(self, counts: Union[int, NDArrayA], t: Optional[float] = None) -> NDArrayA:
        """Evaluate ``f`` element-wise; ``t`` overrides the split factor of ``recursive-approx``."""
        counts = np.asarray(counts, dtype=np.int64)
        if self.kind == ScoreKind.EXACT_FANOUT:
            return (counts > 0).astype(np.float64)
        t = self.t if t is None or self.kind != ScoreKind.RECURSIVE_APPROX else t
        scale = t if self.kind == ScoreKind.RECURSIVE_APPROX else 1.0
        powers = np.power(1.0 - self.p / scale, counts.astype(np.float64))
        powers = np.where(powers < Defaults.POWER_FLOOR, 0.0, powers)
        return scale * (1.0 - powers)

    def __call__(self, n: int) -> float:
        return float(self.values(n))


class ScoreTable:
    """
    Precomputed ``f(0..max_count)`` for every bucket.

    Buckets may carry their own split factor (``recursive-approx`` in a recursion level); buckets sharing a split
    factor share a table row.

    Parameters
    ----------
    score
        The score function.
    max_count
        Largest neighbor count that will be looked up.
    split_factors
        Optional split factor of every bucket.
    """

    def __init__(self, score: ScoreFunction, max_count: int, split_factors: Optional[NDArrayA] = None) -> None:
        counts = np.arange(max(max_count, 1) + 1, dtype=np.int64)
        if split_factors is None or score.kind != ScoreKind.RECURSIVE_APPROX:
            self._rows = score.values(counts)[None, :]
            self._row_of: Optional[NDArrayA] = None
        else:
            distinct, row_of = np.unique(np.asarray(split_factors, dtype=np.float64), return_inverse=True)
            self._rows = np.stack([score.values(counts, t=float(t)) for t in distinct])
            self._row_of = row_of.reshape(-1).astype(np.int64)
        self.score = score

    def values(self, buckets: NDArrayA, counts: NDArrayA) -> NDArrayA:
        """``f_bucket(count)`` element-wise."""
        if self._row_of is None:
            return self._rows[0, counts]
        return self._rows[self._row_of[buckets], counts]


class NeighborData:
    """
    Per query, the number of its data neighbors in every bucket, stored sparsely.

    Entries are kept as sorted keys ``query * k + bucket`` with strictly positive counts, so the number of entries
    of a query is its fanout.
    """

    def __init__(self, keys: NDArrayA, counts: NDArrayA, num_queries: int, k: int) -> None:
        self.keys = np.asarray(keys, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)
        self.num_queries = num_queries
        self.k = k

    @classmethod
    def from_state(cls, graph: BipartiteGraph, state: PartitionState) -> NeighborData:
        """Compute the neighbor data of every query from scratch."""
        onehot = csr_matrix(
            (np.ones(state.num_data, dtype=np.int64), (np.arange(state.num_data), state.bucket_of)),
            shape=(state.num_data, state.k),
        )
        counts = (graph.incidence @ onehot).tocsr()
        counts.eliminate_zeros()
        counts.sort_indices()
        rows = np.repeat(np.arange(graph.num_queries, dtype=np.int64), np.diff(counts.indptr))
        return cls(rows * state.k + counts.indices, counts.data, graph.num_queries, state.k)

    @classmethod
    def from_messages(cls, queries: NDArrayA, buckets: NDArrayA, num_queries: int, k: int) -> NeighborData:
        """Aggregate ``(query, bucket)`` announcements into neighbor data."""
        keys, counts = np.unique(
            np.asarray(queries, dtype=np.int64) * k + np.asarray(buckets, dtype=np.int64), return_counts=True
        )
        return cls(keys, counts, num_queries, k)

    @property
    def queries(self) -> NDArrayA:
        return self.keys // self.k

    @property
    def buckets(self) -> NDArrayA:
        return self.keys % self.k

    @property
    def nnz(self) -> int:
        return len(self.keys)

    def lookup(self, queries: NDArrayA, buckets: NDArrayA) -> NDArrayA:
        """``n_bucket(query)`` element-wise, zero where absent."""
        wanted = np.asarray(queries, dtype=np.int64) * self.k + np.asarray(buckets, dtype=np.int64)
        pos = np.searchsorted(self.keys, wanted)
        pos_clipped = np.minimum(pos, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            return np.zeros(wanted.shape, dtype=np.int64)
        hit = self.keys[pos_clipped] == wanted
        return np.where(hit, self.counts[pos_clipped], 0)

    def count(self, q: int, bucket: int) -> int:
        return int(self.lookup(np.array([q]), np.array([bucket]))[0])

    def entry(self, q: int) -> dict[int, int]:
        """Sparse map ``bucket -> n_bucket(q)`` of query ``q``."""
        lo, hi = np.searchsorted(self.keys, [q * self.k, (q + 1) * self.k])
        return {int(key % self.k): int(c) for key, c in zip(self.keys[lo:hi], self.counts[lo:hi])}

    def fanout(self) -> NDArrayA:
        """Number of buckets spanned by every query."""
        return np.bincount(self.queries, minlength=self.num_queries).astype(np.int64)

    def replace_rows(self, dirty: NDArrayA, fresh: NeighborData) -> NeighborData:
        """Keep the entries of clean queries and take those of ``dirty`` queries from ``fresh``."""
        keep = ~dirty[self.queries]
        take = dirty[fresh.queries]
        keys = np.concatenate([self.keys[keep], fresh.keys[take]])
        counts = np.concatenate([self.counts[keep], fresh.counts[take]])
        order = np.argsort(keys, kind="stable")
        return NeighborData(keys[order], counts[order], self.num_queries, self.k)


def score_query(
    counts: Union[Mapping[int, int], NeighborData],
    score: ScoreFunction,
    q: Optional[int] = None,
    split_factors: Optional[NDArrayA] = None,
) -> float:
    """
    Score of one query: the sum of ``f(n_i(q))`` over the buckets it touches.

    Parameters
    ----------
    counts
        The query's ``bucket -> count`` map, or a :class:`NeighborData` together with ``q``.
    score
        Score function; ``exact-fanout`` yields the query's fanout.
    q
        Query id, required when ``counts`` is a :class:`NeighborData`.
    split_factors
        Per-bucket split factors for ``recursive-approx``.

    Returns
    -------
    The score as a float.
    """
    if isinstance(counts, NeighborData):
        if q is None:
            raise ValueError("`q` is required when scoring from `NeighborData`.")
        counts = counts.entry(q)
    total = 0.0
    for bucket, n in sorted(counts.items()):
        if n <= 0:
            continue
        t = None if split_factors is None else float(split_factors[bucket])
        total += float(score.values(n, t=t))
    return total


def objective_sum(
    neighbor_data: NeighborData, score: ScoreFunction, split_factors: Optional[NDArrayA] = None
) -> float:
    """Unnormalized objective ``sum_q sum_i f(n_i(q))``."""
    if neighbor_data.nnz == 0:
        return 0.0
    if score.kind == ScoreKind.EXACT_FANOUT:
        return float(neighbor_data.nnz)
    table = ScoreTable(score, int(neighbor_data.counts.max()), split_factors)
    return float(np.sum(table.values(neighbor_data.buckets, neighbor_data.counts)))


def total_objective(
    graph: BipartiteGraph,
    state: PartitionState,
    score: ScoreFunction,
    split_factors: Optional[NDArrayA] = None,
) -> float:
    """
    Average query score ``(1/|Q|) sum_q score_query(q)``.

    With ``exact-fanout`` this is the average fanout of the partition; a graph without queries scores 0.
    """
    if graph.num_queries == 0:
        return 0.0
    return objective_sum(NeighborData.from_state(graph, state), score, split_factors) / graph.num_queries


def move_gain(
    graph: BipartiteGraph,
    v: int,
    source: int,
    target: int,
    neighbor_data: NeighborData,
    score: ScoreFunction,
    penalty: float = 0.0,
    *,
    initial_bucket: Optional[int] = None,
    split_factors: Optional[NDArrayA] = None,
) -> float:
    """
    Decrease of the unnormalized objective if ``v`` alone moved from ``source`` to ``target``.

    Positive values are improvements. For every query ``q`` of ``v`` the gain adds
    ``f(n_source) - f(n_source - 1) + f(n_target) - f(n_target + 1)``; for p-fanout this is
    ``p ((1 - p)^(n_source - 1) - (1 - p)^n_target)``.

    Parameters
    ----------
    graph
        The graph.
    v
        Data vertex, currently in ``source``.
    source
        Bucket of ``v``.
    target
        Candidate bucket.
    neighbor_data
        Neighbor data of the current iteration.
    score
        Score function.
    penalty
        Cost of leaving ``initial_bucket``; returning to it earns the same amount back.
    initial_bucket
        Bucket of ``v`` in the partition being updated incrementally.
    split_factors
        Per-bucket split factors for ``recursive-approx``.

    Returns
    -------
    The gain as a float; zero when ``source == target``.
    """
    if source == target:
        return 0.0
    queries = graph.data_adj(v)
    n_source = neighbor_data.lookup(queries, np.full(len(queries), source))
    n_target = neighbor_data.lookup(queries, np.full(len(queries), target))
    t_source = None if split_factors is None else float(split_factors[source])
    t_target = None if split_factors is None else float(split_factors[target])
    leave = score.values(n_source, t=t_source) - score.values(n_source - 1, t=t_source)
    join = score.values(n_target, t=t_target) - score.values(n_target + 1, t=t_target)
    gain = float(np.sum(leave + join))
    if penalty and initial_bucket is not None:
        if source == initial_bucket:
            gain -= penalty
        elif target == initial_bucket:
            gain += penalty
    return gain


def clique_weight(graph: BipartiteGraph, u: int, v: int) -> int:
    """Number of queries shared by data vertices ``u`` and ``v`` (clique-net edge weight)."""
    if u == v:
        raise ValueError("The clique-net weight is only defined for distinct vertices.")
    return int(np.intersect1d(graph.data_adj(u), graph.data_adj(v), assume_unique=True).size)


def weighted_edge_cut(
    graph: BipartiteGraph, state: PartitionState, neighbor_data: Optional[NeighborData] = None
) -> int:
    """
    Total clique-net weight of vertex pairs in different buckets.

    Computed per query as ``sum_{i<j} n_i n_j = (deg^2 - sum_i n_i^2) / 2`` without building the clique graph.
    """
    if neighbor_data is None:
        neighbor_data = NeighborData.from_state(graph, state)
    degrees = graph.query_degrees
    return int((np.sum(degrees * degrees) - np.sum(neighbor_data.counts * neighbor_data.counts)) // 2)


def soed(graph: BipartiteGraph, state: PartitionState, neighbor_data: Optional[NeighborData] = None) -> int:
    """Sum of external degrees: total fanout plus the number of queries spanning more than one bucket."""
    if neighbor_data is None:
        neighbor_data = NeighborData.from_state(graph, state)
    fanout = neighbor_data.fanout()
    return int(fanout.sum() + np.count_nonzero(fanout > 1))
