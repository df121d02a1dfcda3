from __future__ import annotations

import time
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import pandas as pd

from hyperfanout._constants._constants import Defaults, MoveMode, TraceKeys
from hyperfanout._docs import inject_docs
from hyperfanout._logging import logger
from hyperfanout._utils import NDArrayA, vertex_hash, vertex_uniform
from hyperfanout.engine import MessageCounters, Proposals, SuperstepEngine
from hyperfanout.graph import BalanceSpec, BipartiteGraph, PartitionState, apply_moves
from hyperfanout.histogram import BIN_REPRESENTATIVE, NUM_BINS, ZERO_BIN, GainHistogram, gain_bin
from hyperfanout.objective import NeighborData, ScoreFunction, objective_sum

__all__ = [
    "RefineParams",
    "MoveDirective",
    "RefineResult",
    "select_targets",
    "match_histograms",
    "compute_directives",
    "apply_directives",
    "rebalance",
    "refine_loop",
    "epsilon_schedule",
]

# hash streams of the different random decisions within one iteration
_STREAM_APPLY = 0
_STREAM_REBALANCE = 1


def _stream(level: int, iteration: int, tag: int) -> int:
    return (level << 40) | (iteration << 8) | tag


@inject_docs(mm=MoveMode)
@dataclass(frozen=True)
class RefineParams:
    """
    Parameters of the refinement loop.

    Parameters
    ----------
    score
        Objective the gains are computed for.
    max_iterations
        Iteration limit.
    converged_move_fraction
        The loop stops once fewer than this fraction of the data vertices moved in an iteration.
    epsilon
        Allowed imbalance; recursion levels override it with :func:`epsilon_schedule`.
    move_mode
        ``{mm.EXACT_QUOTA!r}`` moves exactly the matched number of vertices of every bin,
        ``{mm.PROBABILISTIC!r}`` moves every vertex independently with its bin's fraction.
    seed
        Seed of all random decisions.
    penalty
        Cost of moving a vertex out of its initial bucket.
    workers
        Number of engine threads; results do not depend on it.
    """

    score: ScoreFunction = field(default_factory=ScoreFunction.p_fanout)
    max_iterations: int = Defaults.MAX_ITERATIONS_DIRECT
    converged_move_fraction: float = Defaults.CONVERGED_MOVE_FRACTION
    epsilon: float = Defaults.EPSILON
    move_mode: MoveMode = Defaults.MOVE_MODE
    seed: int = Defaults.SEED
    penalty: float = Defaults.PENALTY
    workers: int = Defaults.WORKERS

    def __post_init__(self) -> None:
        object.__setattr__(self, "move_mode", MoveMode(self.move_mode))
        if self.max_iterations < 1:
            raise ValueError(f"`max_iterations` must be positive, found {self.max_iterations}.")
        if not self.converged_move_fraction >= 0:
            raise ValueError(f"`converged_move_fraction` must be non-negative, found {self.converged_move_fraction}.")
        if not self.epsilon >= 0:
            raise ValueError(f"`epsilon` must be non-negative, found {self.epsilon}.")
        if not self.penalty >= 0:
            raise ValueError(f"`penalty` must be non-negative, found {self.penalty}.")
        if self.workers < 1:
            raise ValueError(f"`workers` must be at least 1, found {self.workers}.")


@dataclass(frozen=True)
class MoveDirective:
    """Move ``quota`` of the ``count`` vertices proposing ``source -> target`` in gain bin ``bin``."""

    source: int
    target: int
    bin: int
    quota: int
    count: int

    @property
    def fraction(self) -> float:
        return self.quota / self.count if self.count else 0.0


@dataclass(frozen=True, eq=False)
class RefineResult:
    """Final state of a refinement loop together with its per-iteration trace."""

    state: PartitionState
    trace: pd.DataFrame
    iterations: int
    converged: bool
    counters: list[MessageCounters]
    bucket_sizes: list[NDArrayA]


def select_targets(gains: Mapping[int, float], own: int) -> Optional[tuple[int, float]]:
    """
    Best target of one vertex.

    Parameters
    ----------
    gains
        Gain of every allowed bucket.
    own
        The vertex's current bucket, never a target.

    Returns
    -------
    ``(target, gain)`` with the maximum gain, ties broken by the lowest bucket id, or ``None`` if no other bucket
    is allowed. Non-positive best gains are still reported.
    """
    best: Optional[tuple[int, float]] = None
    for bucket in sorted(gains):
        if bucket == own:
            continue
        if best is None or gains[bucket] > best[1]:
            best = (bucket, float(gains[bucket]))
    return best


def match_histograms(
    hist_ab: NDArrayA, hist_ba: NDArrayA, slack_ab: int, slack_ba: int
) -> tuple[NDArrayA, NDArrayA]:
    """
    Number of vertices to move from every bin of two opposite histograms.

    Bins are matched greedily from the highest gains downwards while the representative gains of the two current
    bins sum to a positive value, so both directions move the same number of matched vertices. Afterwards up to
    ``slack_ab`` (``slack_ba``) unmatched vertices with positive gain move without a partner, best bins first.

    Parameters
    ----------
    hist_ab
        Bin counts of the proposals ``a -> b``.
    hist_ba
        Bin counts of the proposals ``b -> a``.
    slack_ab
        Free capacity of ``b`` for unmatched moves.
    slack_ba
        Free capacity of ``a`` for unmatched moves.

    Returns
    -------
    Per-bin quotas of both directions.
    """
    left_a = np.asarray(hist_ab, dtype=np.int64).copy()
    left_b = np.asarray(hist_ba, dtype=np.int64).copy()
    quota_a = np.zeros(NUM_BINS, dtype=np.int64)
    quota_b = np.zeros(NUM_BINS, dtype=np.int64)

    a = b = 0
    while True:
        while a < NUM_BINS and left_a[a] == 0:
            a += 1
        while b < NUM_BINS and left_b[b] == 0:
            b += 1
        if a == NUM_BINS or b == NUM_BINS or BIN_REPRESENTATIVE[a] + BIN_REPRESENTATIVE[b] <= 0:
            break
        matched = min(left_a[a], left_b[b])
        quota_a[a] += matched
        quota_b[b] += matched
        left_a[a] -= matched
        left_b[b] -= matched

    for left, quota, slack in ((left_a, quota_a, slack_ab), (left_b, quota_b, slack_ba)):
        slack = max(int(slack), 0)
        for bin_ in range(ZERO_BIN):
            if slack == 0:
                break
            extra = min(int(left[bin_]), slack)
            quota[bin_] += extra
            slack -= extra
    return quota_a, quota_b


def compute_directives(histogram: GainHistogram, bucket_size: NDArrayA, capacities: NDArrayA) -> list[MoveDirective]:
    """
    Move directives of the master for one iteration.

    Unordered bucket pairs are processed in ascending order; the slack of every direction is the remaining room of
    the receiving bucket given the net flows already committed, so no bucket exceeds its capacity.

    Parameters
    ----------
    histogram
        Merged gain histogram of the iteration.
    bucket_size
        Bucket sizes at the start of the iteration.
    capacities
        Capacity of every bucket.

    Returns
    -------
    Directives with a positive quota, sorted by ``(source, target, bin)``.
    """
    projected = np.asarray(bucket_size, dtype=np.int64).copy()
    capacities = np.asarray(capacities, dtype=np.int64)
    pairs = histogram.pairs()
    unordered = sorted({(int(min(i, j)), int(max(i, j))) for i, j in pairs})

    directives: list[MoveDirective] = []
    for i, j in unordered:
        hist_ij, hist_ji = histogram.get(i, j), histogram.get(j, i)
        quota_ij, quota_ji = match_histograms(
            hist_ij, hist_ji, capacities[j] - projected[j], capacities[i] - projected[i]
        )
        flow = int(quota_ij.sum() - quota_ji.sum())
        projected[j] += flow
        projected[i] -= flow
        for source, target, hist, quota in ((i, j, hist_ij, quota_ij), (j, i, hist_ji, quota_ji)):
            for bin_ in np.flatnonzero(quota):
                directives.append(MoveDirective(source, target, int(bin_), int(quota[bin_]), int(hist[bin_])))
    return sorted(directives, key=lambda d: (d.source, d.target, d.bin))


def apply_directives(
    state: PartitionState,
    proposals: Proposals,
    directives: list[MoveDirective],
    mode: MoveMode = Defaults.MOVE_MODE,
    seed: int = Defaults.SEED,
    stream: int = 0,
) -> tuple[PartitionState, NDArrayA]:
    """
    Move vertices according to the master's directives.

    In ``exact-quota`` mode the vertices of every ``(source, target, bin)`` group are ranked by a seeded hash of
    their id and exactly ``quota`` of them move. In ``probabilistic`` mode every vertex of the group moves
    independently with probability ``quota / count``.

    Parameters
    ----------
    state
        Current state.
    proposals
        Proposals the directives were computed from.
    directives
        Output of :func:`compute_directives`.
    mode
        Move mode.
    seed
        Seed of the random decisions.
    stream
        Distinguishes the decisions of different iterations.

    Returns
    -------
    The new state and the sorted ids of the moved vertices.
    """
    mode = MoveMode(mode)
    k = state.k
    vertices = proposals.proposing
    if not directives or len(vertices) == 0:
        return state, np.zeros(0, dtype=np.int64)

    targets = proposals.target[vertices]
    group = (state.bucket_of[vertices] * k + targets) * NUM_BINS + gain_bin(proposals.gain[vertices])
    directive_keys = np.array([(d.source * k + d.target) * NUM_BINS + d.bin for d in directives], dtype=np.int64)
    order = np.argsort(directive_keys)
    directive_keys = directive_keys[order]
    quotas = np.array([d.quota for d in directives], dtype=np.int64)[order]
    fractions = np.array([d.fraction for d in directives], dtype=np.float64)[order]

    pos = np.minimum(np.searchsorted(directive_keys, group), len(directive_keys) - 1)
    has_directive = directive_keys[pos] == group

    if mode == MoveMode.EXACT_QUOTA:
        ranking = np.lexsort((vertex_hash(seed, stream, vertices), group))
        sorted_group = group[ranking]
        first = np.searchsorted(sorted_group, sorted_group)
        rank = np.empty(len(vertices), dtype=np.int64)
        rank[ranking] = np.arange(len(vertices)) - first
        move = has_directive & (rank < quotas[pos])
    else:
        move = has_directive & (vertex_uniform(seed, stream, vertices) < fractions[pos])

    moved = vertices[move]
    return apply_moves(state, np.stack([moved, targets[move]], axis=1)), moved


def rebalance(
    state: PartitionState, capacities: NDArrayA, seed: int = Defaults.SEED, stream: int = 0
) -> tuple[PartitionState, NDArrayA]:
    """
    Bring every bucket within its capacity.

    Overloaded buckets, in ascending order, shed their excess vertices (lowest seeded hash first) one at a time to
    the allowed bucket with the most remaining room.

    Parameters
    ----------
    state
        Current state.
    capacities
        Capacity of every bucket.
    seed
        Seed of the hash ranking.
    stream
        Hash stream.

    Returns
    -------
    The repaired state and the sorted ids of the moved vertices.
    """
    capacities = np.asarray(capacities, dtype=np.int64)
    sizes = state.bucket_size.copy()
    overloaded = np.flatnonzero(sizes > capacities)
    if len(overloaded) == 0:
        return state, np.zeros(0, dtype=np.int64)

    moves: list[tuple[int, int]] = []
    for bucket in overloaded:
        members = np.flatnonzero(state.bucket_of == bucket)
        excess = int(sizes[bucket] - capacities[bucket])
        chosen = members[np.argsort(vertex_hash(seed, stream, members), kind="stable")[:excess]]
        candidates = state.allowed.candidates(chosen[:1])[0]
        candidates = candidates[(candidates >= 0) & (candidates != bucket)]
        for v in chosen:
            room = capacities[candidates] - sizes[candidates] if len(candidates) else np.zeros(0)
            if len(room) == 0 or room.max() <= 0:
                raise ValueError(
                    f"Infeasible balance: bucket {int(bucket)} holds {int(sizes[bucket])} vertices with capacity "
                    f"{int(capacities[bucket])} and no allowed bucket has room."
                )
            target = int(candidates[np.argmax(room)])
            moves.append((int(v), target))
            sizes[bucket] -= 1
            sizes[target] += 1
    logger.info(f"Rebalanced {len(moves)} vertices out of {len(overloaded)} overloaded buckets.")
    moved = np.array(sorted(v for v, _ in moves), dtype=np.int64)
    return apply_moves(state, moves), moved


def epsilon_schedule(level: int, total_levels: int, epsilon: float) -> float:
    """Imbalance allowed at recursion ``level`` of ``total_levels``: ``epsilon * level / total_levels``."""
    if not 1 <= level <= total_levels:
        raise ValueError(f"`level` must lie in [1, {total_levels}], found {level}.")
    return epsilon * level / total_levels


def refine_loop(
    graph: BipartiteGraph,
    state: PartitionState,
    params: RefineParams,
    *,
    capacities: Optional[NDArrayA] = None,
    split_factors: Optional[NDArrayA] = None,
    initial_buckets: Optional[NDArrayA] = None,
    level: int = 1,
) -> RefineResult:
    """
    Local refinement: repeat iterations until convergence or the iteration limit.

    Every iteration runs the engine's supersteps, computes the master's directives and applies them. The loop
    stops after an iteration moving fewer than ``converged_move_fraction * n`` vertices, or none. In
    ``probabilistic`` mode the balance is repaired before every iteration and once more at the end.

    Parameters
    ----------
    graph
        The graph.
    state
        Starting state; overloaded buckets are repaired with :func:`rebalance` first.
    params
        Loop parameters.
    capacities
        Per-bucket capacities; defaults to ``floor((1 + epsilon) n / k)`` for every bucket.
    split_factors
        Per-bucket split factors for ``recursive-approx``.
    initial_buckets
        Reference partition of the penalty.
    level
        Recursion level recorded in the trace.

    Returns
    -------
    :class:`RefineResult` whose trace has one row per iteration with the columns of
    :class:`~hyperfanout._constants._constants.TraceKeys`.
    """
    n = graph.num_data
    if capacities is None:
        capacities = BalanceSpec(params.epsilon).capacities(n, state.k)
    engine = SuperstepEngine(
        graph,
        state.k,
        params.score,
        split_factors=split_factors,
        penalty=params.penalty,
        initial_buckets=initial_buckets,
        workers=params.workers,
    )

    state, _ = rebalance(state, capacities, params.seed, _stream(level, 0, _STREAM_REBALANCE))
    moved: Optional[NDArrayA] = None
    rows: list[dict[str, float]] = []
    counters: list[MessageCounters] = []
    sizes: list[NDArrayA] = []
    converged = False
    start = time.perf_counter()

    iteration = 0
    for iteration in range(1, params.max_iterations + 1):
        if params.move_mode == MoveMode.PROBABILISTIC and iteration > 1:
            state, repaired = rebalance(state, capacities, params.seed, _stream(level, iteration, _STREAM_REBALANCE))
            if len(repaired):
                moved = np.union1d(moved, repaired) if moved is not None else repaired

        result = engine.run_iteration(state, moved)
        directives = compute_directives(result.histogram, state.bucket_size, capacities)
        result.counters.record(4, len(directives))
        state, moved = apply_directives(
            state,
            result.proposals,
            directives,
            params.move_mode,
            params.seed,
            _stream(level, iteration, _STREAM_APPLY),
        )

        nd = NeighborData.from_state(graph, state)
        num_queries = max(graph.num_queries, 1)
        fraction = len(moved) / n if n else 0.0
        rows.append(
            {
                TraceKeys.LEVEL.v: level,
                TraceKeys.ITERATION.v: iteration,
                TraceKeys.OBJECTIVE.v: objective_sum(nd, params.score, split_factors) / num_queries,
                TraceKeys.EXACT_FANOUT.v: nd.nnz / num_queries,
                TraceKeys.MOVED_FRACTION.v: fraction,
                TraceKeys.PHASE2_PAYLOAD.v: result.counters.phase2_payload,
                TraceKeys.ELAPSED_MS.v: (time.perf_counter() - start) * 1000.0,
            }
        )
        counters.append(result.counters)
        sizes.append(state.bucket_size.copy())
        logger.debug(
            f"level {level} iteration {iteration}: objective={rows[-1][TraceKeys.OBJECTIVE.v]:.6f} "
            f"moved={len(moved)} phase2_payload={result.counters.phase2_payload}"
        )
        if len(moved) == 0 or fraction < params.converged_move_fraction:
            converged = True
            break

    if params.move_mode == MoveMode.PROBABILISTIC:
        state, _ = rebalance(state, capacities, params.seed, _stream(level, iteration + 1, _STREAM_REBALANCE))
    trace = pd.DataFrame(rows, columns=TraceKeys.values())
    return RefineResult(state, trace, iteration, converged, counters, sizes)
