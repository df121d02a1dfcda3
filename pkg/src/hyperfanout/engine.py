from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from hyperfanout._constants._constants import Defaults
from hyperfanout._utils import NDArrayA, expand_ranges, vertex_ranges
from hyperfanout.graph import BipartiteGraph, PartitionState
from hyperfanout.histogram import GainHistogram, best_targets
from hyperfanout.objective import NeighborData, ScoreFunction, ScoreTable

__all__ = [
    "MessageCounters",
    "Proposals",
    "DirtySet",
    "IterationResult",
    "SuperstepEngine",
    "lazy_recompute",
    "run_iteration",
]

NUM_PHASES = 4


@dataclass
class MessageCounters:
    """
    Logical communication of one iteration.

    ``messages[t]`` and ``payload[t]`` count the messages and payload entries of superstep ``t + 1``: bucket
    announcements, neighbor-data replies, target proposals and move directives.
    """

    messages: list[int] = field(default_factory=lambda: [0] * NUM_PHASES)
    payload: list[int] = field(default_factory=lambda: [0] * NUM_PHASES)
    candidates_evaluated: int = 0
    recomputed_queries: int = 0
    recomputed_data: int = 0

    @property
    def phase2_payload(self) -> int:
        return self.payload[1]

    def record(self, phase: int, messages: int, payload: Optional[int] = None) -> None:
        self.messages[phase - 1] = int(messages)
        self.payload[phase - 1] = int(messages if payload is None else payload)


@dataclass(frozen=True, eq=False)
class Proposals:
    """Best target and its gain for every data vertex; ``target == -1`` where there is no alternative bucket."""

    target: NDArrayA
    gain: NDArrayA

    @classmethod
    def empty(cls, n: int) -> Proposals:
        return cls(np.full(n, -1, dtype=np.int64), np.zeros(n, dtype=np.float64))

    @property
    def proposing(self) -> NDArrayA:
        return np.flatnonzero(self.target >= 0)

    def equals(self, other: Proposals) -> bool:
        return np.array_equal(self.target, other.target) and np.array_equal(self.gain, other.gain)


@dataclass(frozen=True, eq=False)
class DirtySet:
    """Queries and data vertices whose neighbor data or proposals must be recomputed."""

    queries: NDArrayA
    data: NDArrayA

    @classmethod
    def everything(cls, graph: BipartiteGraph) -> DirtySet:
        return cls(np.ones(graph.num_queries, dtype=bool), np.ones(graph.num_data, dtype=bool))

    @property
    def num_queries(self) -> int:
        return int(self.queries.sum())

    @property
    def num_data(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True, eq=False)
class IterationResult:
    proposals: Proposals
    histogram: GainHistogram
    neighbor_data: NeighborData
    counters: MessageCounters
    dirty: DirtySet


def lazy_recompute(graph: BipartiteGraph, moved: NDArrayA) -> DirtySet:
    """
    Vertices affected by the moves of the previous iteration.

    A query is dirty iff it is adjacent to a moved vertex; a data vertex is dirty iff it is adjacent to a dirty
    query or moved itself (isolated vertices have no query to mark them).
    """
    moved = np.asarray(moved, dtype=np.int64)
    queries = np.zeros(graph.num_queries, dtype=bool)
    queries[graph.data_indices[expand_ranges(graph.data_indptr[moved], graph.data_indptr[moved + 1])]] = True
    dirty_q = np.flatnonzero(queries)
    data = np.zeros(graph.num_data, dtype=bool)
    data[graph.query_indices[expand_ranges(graph.query_indptr[dirty_q], graph.query_indptr[dirty_q + 1])]] = True
    data[moved] = True
    return DirtySet(queries, data)


class SuperstepEngine:
    """
    In-process bulk-synchronous executor of the first three supersteps of a refinement iteration.

    Workers own contiguous vertex-id ranges and exchange data only through the mailboxes returned at each
    barrier, which are concatenated in worker order. Neighbor data and proposals of clean vertices are cached
    between iterations.

    Parameters
    ----------
    graph
        The graph.
    k
        Number of buckets.
    score
        Score function the gains are computed for.
    split_factors
        Per-bucket split factors for ``recursive-approx``.
    penalty
        Cost of leaving ``initial_buckets``.
    initial_buckets
        Reference partition for the penalty.
    workers
        Number of threads.
    """

    def __init__(
        self,
        graph: BipartiteGraph,
        k: int,
        score: ScoreFunction,
        *,
        split_factors: Optional[NDArrayA] = None,
        penalty: float = Defaults.PENALTY,
        initial_buckets: Optional[NDArrayA] = None,
        workers: int = Defaults.WORKERS,
    ) -> None:
        if workers < 1:
            raise ValueError(f"`workers` must be at least 1, found {workers}.")
        self.graph = graph
        self.k = k
        self.score = score
        self.split_factors = split_factors
        self.penalty = float(penalty) if initial_buckets is not None else 0.0
        self.initial_buckets = None if initial_buckets is None else np.asarray(initial_buckets, dtype=np.int64)
        self.workers = workers
        self.table = ScoreTable(score, graph.max_query_degree + 1, split_factors)
        self._parallel = Parallel(n_jobs=workers, prefer="threads")
        self._neighbor_data: Optional[NeighborData] = None
        self._proposals = Proposals.empty(graph.num_data)

    def _map(self, fn, n: int) -> list:  # type: ignore[no-untyped-def,type-arg]
        return self._parallel(delayed(fn)(lo, hi) for lo, hi in vertex_ranges(n, self.workers))

    def _announce(self, state: PartitionState, dirty: DirtySet, lo: int, hi: int) -> tuple[NDArrayA, NDArrayA]:
        g = self.graph
        vertices = lo + np.flatnonzero(dirty.data[lo:hi])
        edges = expand_ranges(g.data_indptr[vertices], g.data_indptr[vertices + 1])
        queries = g.data_indices[edges]
        buckets = np.repeat(state.bucket_of[vertices], g.data_degrees[vertices])
        keep = dirty.queries[queries]
        return queries[keep], buckets[keep]

    def _reply(
        self, queries: NDArrayA, buckets: NDArrayA, bounds: NDArrayA, lo: int, hi: int
    ) -> tuple[NeighborData, int, int]:
        start, stop = bounds[lo], bounds[hi]
        fresh = NeighborData.from_messages(queries[start:stop], buckets[start:stop], self.graph.num_queries, self.k)
        fanout = np.bincount(fresh.queries - lo, minlength=hi - lo)
        degrees = self.graph.query_degrees[lo:hi]
        replying = fanout > 0
        return fresh, int(degrees[replying].sum()), int((fanout * degrees).sum())

    def _propose(
        self, state: PartitionState, nd: NeighborData, dirty: DirtySet, lo: int, hi: int
    ) -> tuple[NDArrayA, NDArrayA, NDArrayA, int]:
        g = self.graph
        vertices = lo + np.flatnonzero(dirty.data[lo:hi])
        own = state.bucket_of[vertices]
        candidates = state.allowed.candidates(vertices)
        degrees = g.data_degrees[vertices]
        edges = expand_ranges(g.data_indptr[vertices], g.data_indptr[vertices + 1])
        queries = g.data_indices[edges]
        owner = np.repeat(np.arange(len(vertices)), degrees)
        source = own[owner]
        n_source = nd.lookup(queries, source)
        leave = self.table.values(source, n_source) - self.table.values(source, n_source - 1)

        gains = np.zeros(candidates.shape, dtype=np.float64)
        evaluated = 0
        for column in range(candidates.shape[1]):
            target = candidates[:, column]
            valid = (target >= 0) & (target != own)
            evaluated += int(valid.sum())
            if not valid.any():
                continue
            safe = np.where(valid, target, own)[owner]
            n_target = nd.lookup(queries, safe)
            join = self.table.values(safe, n_target) - self.table.values(safe, n_target + 1)
            gains[:, column] = np.bincount(owner, weights=leave + join, minlength=len(vertices))
            if self.penalty:
                initial = self.initial_buckets[vertices]  # type: ignore[index]
                gains[:, column] += np.where(own == initial, -self.penalty, 0.0)
                gains[:, column] += np.where(target == initial, self.penalty, 0.0)
        target, gain = best_targets(candidates, gains, own)
        return vertices, target, gain, evaluated

    def _histogram(self, state: PartitionState, proposals: Proposals, lo: int, hi: int) -> GainHistogram:
        return GainHistogram.from_proposals(
            self.k, state.bucket_of[lo:hi], proposals.target[lo:hi], proposals.gain[lo:hi]
        )

    def run_iteration(self, state: PartitionState, moved: Optional[NDArrayA] = None) -> IterationResult:
        """
        Run supersteps 1 to 3 on ``state``.

        Parameters
        ----------
        state
            Snapshot all gains are computed against.
        moved
            Vertices moved since the previous call; ``None`` recomputes everything.

        Returns
        -------
        Proposals of every vertex, the merged gain histogram, the neighbor data and the message counters.
        """
        g = self.graph
        counters = MessageCounters()
        if moved is None or self._neighbor_data is None:
            dirty = DirtySet.everything(g)
            previous = NeighborData(np.zeros(0), np.zeros(0), g.num_queries, self.k)
            self._proposals = Proposals.empty(g.num_data)
        else:
            dirty = lazy_recompute(g, moved)
            previous = self._neighbor_data
        counters.recomputed_queries = dirty.num_queries
        counters.recomputed_data = dirty.num_data

        # superstep 1: dirty data vertices announce their bucket to their dirty queries
        mailbox = self._map(lambda lo, hi: self._announce(state, dirty, lo, hi), g.num_data)
        queries = np.concatenate([m[0] for m in mailbox])
        buckets = np.concatenate([m[1] for m in mailbox])
        counters.record(1, len(queries))

        # superstep 2: dirty queries aggregate the announcements and reply with their neighbor data
        order = np.argsort(queries, kind="stable")
        queries, buckets = queries[order], buckets[order]
        bounds = np.searchsorted(queries, np.arange(g.num_queries + 1))
        replies = self._map(lambda lo, hi: self._reply(queries, buckets, bounds, lo, hi), g.num_queries)
        fresh = NeighborData(
            np.concatenate([np.zeros(0, dtype=np.int64)] + [r[0].keys for r in replies]),
            np.concatenate([np.zeros(0, dtype=np.int64)] + [r[0].counts for r in replies]),
            g.num_queries,
            self.k,
        )
        nd = previous.replace_rows(dirty.queries, fresh)
        counters.record(2, sum(r[1] for r in replies), sum(r[2] for r in replies))

        # superstep 3: dirty data vertices compute gains and propose their best target to the master
        computed = self._map(lambda lo, hi: self._propose(state, nd, dirty, lo, hi), g.num_data)
        target = self._proposals.target.copy()
        gain = self._proposals.gain.copy()
        for vertices, t, gn, _ in computed:
            target[vertices] = t
            gain[vertices] = gn
        proposals = Proposals(target, gain)
        counters.candidates_evaluated = sum(c[3] for c in computed)
        counters.record(3, sum(int((c[1] >= 0).sum()) for c in computed))

        parts = self._map(lambda lo, hi: self._histogram(state, proposals, lo, hi), g.num_data)
        histogram = GainHistogram.merge(self.k, parts)

        self._neighbor_data = nd
        self._proposals = proposals
        return IterationResult(proposals, histogram, nd, counters, dirty)


def run_iteration(
    graph: BipartiteGraph,
    state: PartitionState,
    score: ScoreFunction,
    *,
    split_factors: Optional[NDArrayA] = None,
    penalty: float = Defaults.PENALTY,
    initial_buckets: Optional[NDArrayA] = None,
    workers: int = Defaults.WORKERS,
) -> IterationResult:
    """Run supersteps 1 to 3 from scratch; see :meth:`SuperstepEngine.run_iteration`."""
    engine = SuperstepEngine(
        graph,
        state.k,
        score,
        split_factors=split_factors,
        penalty=penalty,
        initial_buckets=initial_buckets,
        workers=workers,
    )
    return engine.run_iteration(state)
