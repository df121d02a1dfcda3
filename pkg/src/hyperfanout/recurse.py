from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np
import pandas as pd

from hyperfanout._constants._constants import Defaults, ScoreKind, TraceKeys
from hyperfanout._logging import logger
from hyperfanout._utils import NDArrayA
from hyperfanout.graph import AllowedTargets, BalanceSpec, BipartiteGraph, PartitionState, init_random_partition
from hyperfanout.objective import ScoreFunction
from hyperfanout.refine import RefineParams, RefineResult, epsilon_schedule, refine_loop

__all__ = ["RecursionPlan", "PartitionRun", "run_direct", "run_recursive", "direct_partition", "recursive_partition"]


@dataclass(frozen=True)
class RecursionPlan:
    """
    Split tree of recursive ``r``-ary partitioning into ``k`` buckets.

    The tree has ``levels = ceil(log_r k)`` levels below the root and is pruned left to right to ``k`` leaves.
    Node ``j`` of level ``l`` covers the leaves ``[j w, (j + 1) w) & [0, k)`` with ``w = r^(levels - l)``; its
    split factor ``t`` is the number of leaves it covers and its parent is node ``j // r`` of level ``l - 1``.
    Bucket ids are the node indices of the level, so the last level yields buckets ``0..k-1``.
    """

    k: int
    r: int = Defaults.ARITY

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError(f"At least 2 buckets are required, found k={self.k}.")
        if self.r < 2:
            raise ValueError(f"The split arity must be at least 2, found r={self.r}.")

    @property
    def levels(self) -> int:
        levels, leaves = 0, 1
        while leaves < self.k:
            leaves *= self.r
            levels += 1
        return levels

    def _width(self, level: int) -> int:
        if not 0 <= level <= self.levels:
            raise ValueError(f"`level` must lie in [0, {self.levels}], found {level}.")
        return self.r ** (self.levels - level)

    def num_buckets(self, level: int) -> int:
        """Number of nodes at ``level``."""
        width = self._width(level)
        return -(-self.k // width)

    def split_factors(self, level: int) -> NDArrayA:
        """Number of final buckets below every node of ``level``."""
        width = self._width(level)
        starts = np.arange(self.num_buckets(level), dtype=np.int64) * width
        return np.minimum(self.k, starts + width) - starts

    def children(self, level: int) -> NDArrayA:
        """``num_buckets(level - 1) x r`` children of every parent node, padded with ``-1``."""
        count = self.num_buckets(level)
        parents = np.arange(self.num_buckets(level - 1), dtype=np.int64)
        children = parents[:, None] * self.r + np.arange(self.r, dtype=np.int64)[None, :]
        return np.where(children < count, children, -1)

    def allowed_targets(self, level: int, parent_of: NDArrayA) -> AllowedTargets:
        """Every vertex may occupy the children of its bucket ``parent_of`` at the previous level."""
        return AllowedTargets(np.asarray(parent_of, dtype=np.int64), self.children(level))


@dataclass(frozen=True, eq=False)
class PartitionRun:
    """Outcome of a partitioning run: the final state, the concatenated trace and the total iteration count."""

    state: PartitionState
    trace: pd.DataFrame
    iterations: int
    levels: list[RefineResult]


def _init_level(plan: RecursionPlan, level: int, parent_of: NDArrayA, seed: int) -> PartitionState:
    children = plan.children(level)
    allowed = plan.allowed_targets(level, parent_of)
    t = plan.split_factors(level)
    n = len(parent_of)
    rng = np.random.default_rng(seed if level == 1 else [seed, level])

    sizes = (children >= 0).sum(axis=1)
    weights = np.where(children >= 0, t[np.maximum(children, 0)], 0).astype(np.float64)
    uniform = np.all(sizes == sizes[0]) and np.all((weights == weights[:, :1]) | (children < 0))
    if uniform:
        offset = rng.integers(0, sizes[0], size=n)
    else:
        cumulative = np.cumsum(weights, axis=1) / weights.sum(axis=1, keepdims=True)
        u = rng.random(n)
        offset = (u[:, None] >= cumulative[parent_of]).sum(axis=1)
        offset = np.minimum(offset, sizes[parent_of] - 1)
    bucket_of = children[parent_of, offset]
    return PartitionState.from_assignment(bucket_of, plan.num_buckets(level), allowed)


def _level_capacities(
    plan: RecursionPlan, level: int, epsilon: float, parent_of: NDArrayA, n: int
) -> NDArrayA:
    t = plan.split_factors(level)
    capacities = BalanceSpec(epsilon).capacities(n, len(t), t)
    children = plan.children(level)
    group_size = np.bincount(parent_of, minlength=len(children))
    for parent, row in enumerate(children):
        row = row[row >= 0]
        if capacities[row].sum() >= group_size[parent]:
            continue
        raised = np.ceil(group_size[parent] * t[row] / t[row].sum()).astype(np.int64)
        logger.warning(
            f"Level {level}: children {row.tolist()} of bucket {parent} cannot hold its {group_size[parent]} "
            f"vertices; raising their capacities from {capacities[row].tolist()} to {raised.tolist()}."
        )
        capacities[row] = raised
    return capacities


def _check_k(graph: BipartiteGraph, k: int) -> None:
    if k < 2:
        raise ValueError(f"At least 2 buckets are required, found k={k}.")
    if k > graph.num_data:
        raise ValueError(f"Cannot split {graph.num_data} data vertices into k={k} buckets.")


def run_recursive(
    graph: BipartiteGraph,
    k: int,
    r: int,
    params: RefineParams,
    *,
    final_fanout_approximation: bool = True,
) -> PartitionRun:
    """
    Recursive ``r``-ary partitioning with one refinement loop per level.

    At every level each vertex may only move among the children of its current bucket, all groups refine
    together, the imbalance grows with :func:`~hyperfanout.refine.epsilon_schedule` and buckets that will be
    split further are scored with ``recursive-approx``.

    Parameters
    ----------
    graph
        The graph.
    k
        Final number of buckets, at most the number of data vertices.
    r
        Split arity.
    params
        Refinement parameters; ``max_iterations`` applies per level.
    final_fanout_approximation
        Score buckets of split factor ``t > 1`` with ``recursive-approx``; if ``False`` plain p-fanout is used at
        every level.

    Returns
    -------
    :class:`PartitionRun`
    """
    _check_k(graph, k)
    plan = RecursionPlan(k, r)
    n = graph.num_data
    parent_of = np.zeros(n, dtype=np.int64)
    results: list[RefineResult] = []
    logger.info(f"Recursive partitioning of {graph} into k={k} buckets, r={r}, {plan.levels} levels.")

    state: Optional[PartitionState] = None
    for level in range(1, plan.levels + 1):
        t = plan.split_factors(level)
        epsilon = epsilon_schedule(level, plan.levels, params.epsilon)
        capacities = _level_capacities(plan, level, epsilon, parent_of, n)
        score = params.score
        split_factors: Optional[NDArrayA] = None
        if final_fanout_approximation and score.kind == ScoreKind.P_FANOUT and t.max() > 1:
            score = ScoreFunction.recursive_approx(score.p)
            split_factors = t.astype(np.float64)

        state = _init_level(plan, level, parent_of, params.seed)
        level_params = dataclasses.replace(params, score=score, epsilon=epsilon)
        result = refine_loop(
            graph, state, level_params, capacities=capacities, split_factors=split_factors, level=level
        )
        results.append(result)
        logger.info(
            f"Level {level}/{plan.levels}: {len(t)} buckets, {result.iterations} iterations, "
            f"fanout {result.trace[TraceKeys.EXACT_FANOUT.v].iloc[-1]:.4f}."
        )
        state = result.state
        parent_of = state.bucket_of

    assert state is not None
    trace = pd.concat([res.trace for res in results], ignore_index=True)
    return PartitionRun(state, trace, sum(res.iterations for res in results), results)


def run_direct(
    graph: BipartiteGraph, k: int, params: RefineParams, initial: Optional[PartitionState] = None
) -> PartitionRun:
    """
    Direct ``k``-way partitioning: one refinement loop in which every vertex may move to any bucket.

    Parameters
    ----------
    graph
        The graph.
    k
        Number of buckets.
    params
        Refinement parameters.
    initial
        Starting partition; a random one is drawn if omitted. With ``params.penalty`` moves away from it are
        penalized.

    Returns
    -------
    :class:`PartitionRun`
    """
    _check_k(graph, k)
    if initial is None:
        state = init_random_partition(graph, k, params.seed)
        initial_buckets = None
    else:
        if initial.k != k or initial.num_data != graph.num_data:
            raise ValueError(
                f"The initial partition has k={initial.k} and {initial.num_data} vertices, expected k={k} and "
                f"{graph.num_data} vertices."
            )
        empty = np.flatnonzero(initial.bucket_size == 0)
        if len(empty):
            logger.warning(f"The initial partition leaves buckets {empty.tolist()} empty.")
        state = PartitionState.from_assignment(initial.bucket_of, k)
        initial_buckets = state.bucket_of
    logger.info(f"Direct partitioning of {graph} into k={k} buckets.")
    result = refine_loop(graph, state, params, initial_buckets=initial_buckets)
    return PartitionRun(result.state, result.trace, result.iterations, [result])


def recursive_partition(
    graph: BipartiteGraph,
    k: int,
    r: int = Defaults.ARITY,
    params: Optional[RefineParams] = None,
    *,
    final_fanout_approximation: bool = True,
) -> PartitionState:
    """Final state of :func:`run_recursive`; defaults to 20 iterations per level."""
    if params is None:
        params = RefineParams(max_iterations=Defaults.MAX_ITERATIONS_PER_LEVEL)
    return run_recursive(graph, k, r, params, final_fanout_approximation=final_fanout_approximation).state


def direct_partition(
    graph: BipartiteGraph, k: int, params: Optional[RefineParams] = None, initial: Optional[PartitionState] = None
) -> PartitionState:
    """Final state of :func:`run_direct`."""
    return run_direct(graph, k, params or RefineParams(), initial).state
