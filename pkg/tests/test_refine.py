import dataclasses
from typing import Callable

import numpy as np
import pytest

from hyperfanout._constants._constants import MoveMode, TraceKeys
from hyperfanout.engine import Proposals
from hyperfanout.graph import BalanceSpec, BipartiteGraph, PartitionState, init_random_partition
from hyperfanout.histogram import NUM_BINS, GainHistogram, gain_bin
from hyperfanout.objective import NeighborData, ScoreFunction, move_gain, total_objective
from hyperfanout.refine import (
    MoveDirective,
    RefineParams,
    apply_directives,
    compute_directives,
    epsilon_schedule,
    match_histograms,
    rebalance,
    refine_loop,
    select_targets,
)


def _hist(bins: dict[float, int]) -> np.ndarray:
    out = np.zeros(NUM_BINS, dtype=np.int64)
    for gain, count in bins.items():
        out[gain_bin(gain)] += count
    return out


@pytest.mark.parametrize(
    "gains,own,expected",
    [
        ({0: 0.5, 1: 0.2, 2: 0.2}, 0, (1, 0.2)),
        ({0: 0.0, 1: -0.3, 2: -0.1}, 0, (2, -0.1)),
        ({0: 1.0}, 0, None),
        ({3: 0.1, 1: 0.1}, 2, (1, 0.1)),
    ],
)
def test_select_targets(gains: dict[int, float], own: int, expected: object) -> None:
    assert select_targets(gains, own) == expected


def test_match_histograms_pairs_equal_counts() -> None:
    quota_a, quota_b = match_histograms(_hist({0.5: 10}), _hist({0.5: 4}), 0, 0)
    assert quota_a.sum() == quota_b.sum() == 4


def test_match_histograms_positive_sum() -> None:
    # a gain of 0.4 pays for a partner losing 0.1
    quota_a, quota_b = match_histograms(_hist({0.4: 5}), _hist({-0.1: 5}), 0, 0)
    assert quota_a.sum() == quota_b.sum() == 5
    # two losses never match
    quota_a, quota_b = match_histograms(_hist({-0.4: 5}), _hist({-0.1: 5}), 10, 10)
    assert quota_a.sum() == quota_b.sum() == 0


def test_match_histograms_empty() -> None:
    empty = np.zeros(NUM_BINS, dtype=np.int64)
    quota_a, quota_b = match_histograms(empty, empty, 5, 5)
    assert not quota_a.any() and not quota_b.any()


def test_match_histograms_slack() -> None:
    hist_ab = _hist({0.2: 3, 0.1: 2, -0.1: 4})
    quota_a, quota_b = match_histograms(hist_ab, np.zeros(NUM_BINS, dtype=np.int64), 4, 0)
    # best bins first, never a non-positive gain
    assert quota_a[gain_bin(0.2)] == 3
    assert quota_a[gain_bin(0.1)] == 1
    assert quota_a.sum() == 4
    assert not quota_b.any()
    quota_a, _ = match_histograms(hist_ab, np.zeros(NUM_BINS, dtype=np.int64), 100, 0)
    assert quota_a.sum() == 5


def test_compute_directives_respects_capacity() -> None:
    histogram = GainHistogram.from_proposals(2, np.zeros(5, dtype=int), np.ones(5, dtype=int), np.full(5, 0.5))
    directives = compute_directives(histogram, np.array([6, 4]), np.array([6, 6]))
    assert directives == [MoveDirective(0, 1, int(gain_bin(0.5)), 2, 5)]
    assert directives[0].fraction == pytest.approx(0.4)


def test_compute_directives_tracks_projected_sizes() -> None:
    sources = np.array([0, 0, 0, 2, 2, 2])
    targets = np.ones(6, dtype=int)
    histogram = GainHistogram.from_proposals(3, sources, targets, np.full(6, 0.5))
    directives = compute_directives(histogram, np.array([4, 4, 4]), np.array([5, 5, 5]))
    # pair (0, 1) fills bucket 1, nothing is left for pair (1, 2)
    assert [(d.source, d.target, d.quota) for d in directives] == [(0, 1, 1)]


def _proposals(n: int, movers: int, gain: float) -> tuple[PartitionState, Proposals]:
    state = PartitionState.from_assignment(np.repeat([0, 1], n), 2)
    target = np.full(2 * n, -1)
    target[:movers] = 1
    return state, Proposals(target, np.where(target >= 0, gain, 0.0))


def test_apply_directives_exact_quota() -> None:
    state, proposals = _proposals(10, 10, 0.5)
    directive = MoveDirective(0, 1, int(gain_bin(0.5)), 4, 10)
    new, moved = apply_directives(state, proposals, [directive], MoveMode.EXACT_QUOTA, seed=3)
    assert len(moved) == 4
    assert (moved < 10).all()
    assert np.array_equal(new.bucket_size, [6, 14])
    again, moved_again = apply_directives(state, proposals, [directive], MoveMode.EXACT_QUOTA, seed=3)
    assert np.array_equal(moved, moved_again)
    assert new.equals(again)


def test_apply_directives_without_directives() -> None:
    state, proposals = _proposals(10, 10, 0.5)
    new, moved = apply_directives(state, proposals, [])
    assert new is state
    assert len(moved) == 0


def test_apply_directives_probabilistic() -> None:
    state, proposals = _proposals(10, 10, 0.5)
    everything = MoveDirective(0, 1, int(gain_bin(0.5)), 10, 10)
    _, moved = apply_directives(state, proposals, [everything], MoveMode.PROBABILISTIC)
    assert np.array_equal(moved, np.arange(10))

    state, proposals = _proposals(10_000, 10_000, 0.5)
    directive = MoveDirective(0, 1, int(gain_bin(0.5)), 4_000, 10_000)
    _, moved = apply_directives(state, proposals, [directive], MoveMode.PROBABILISTIC, seed=1)
    # three standard deviations of Binomial(10000, 0.4)
    assert abs(len(moved) - 4_000) <= 147


def test_rebalance() -> None:
    state = PartitionState.from_assignment([0] * 8 + [1] * 2, 2)
    new, moved = rebalance(state, np.array([5, 5]), seed=0)
    assert np.array_equal(new.bucket_size, [5, 5])
    assert len(moved) == 3
    assert (state.bucket_of[moved] == 0).all()
    same, none = rebalance(new, np.array([5, 5]))
    assert same is new
    assert len(none) == 0


def test_rebalance_infeasible() -> None:
    state = PartitionState.from_assignment([0] * 8 + [1] * 2, 2)
    with pytest.raises(ValueError, match="Infeasible"):
        rebalance(state, np.array([5, 2]))


def test_epsilon_schedule() -> None:
    assert epsilon_schedule(1, 3, 0.06) == pytest.approx(0.02)
    assert epsilon_schedule(3, 3, 0.06) == pytest.approx(0.06)
    with pytest.raises(ValueError, match="level"):
        epsilon_schedule(0, 3, 0.06)


def test_refine_params_validation() -> None:
    with pytest.raises(ValueError, match="max_iterations"):
        RefineParams(max_iterations=0)
    with pytest.raises(ValueError, match="epsilon"):
        RefineParams(epsilon=-1.0)
    with pytest.raises(ValueError, match="Invalid option"):
        RefineParams(move_mode="sometimes")  # type: ignore[arg-type]
    assert RefineParams(move_mode="probabilistic").move_mode == MoveMode.PROBABILISTIC  # type: ignore[arg-type]


def test_local_minimum_exact_fanout_is_stuck(
    local_minimum: BipartiteGraph, local_minimum_state: PartitionState
) -> None:
    params = RefineParams(score=ScoreFunction.exact_fanout(), epsilon=0.0)
    result = refine_loop(local_minimum, local_minimum_state, params)
    assert result.iterations == 1
    assert result.converged
    assert result.state.equals(local_minimum_state)
    assert result.trace[TraceKeys.EXACT_FANOUT.v].iloc[-1] == pytest.approx(1.5)


def test_local_minimum_probabilistic_fanout_escapes(
    local_minimum: BipartiteGraph, local_minimum_state: PartitionState
) -> None:
    params = RefineParams(score=ScoreFunction.p_fanout(0.5), epsilon=0.0)
    result = refine_loop(local_minimum, local_minimum_state, params)
    # {3, 4} and {5, 6} trade places, then nothing improves
    assert result.state.bucket_of.tolist() == [0, 0, 1, 1, 0, 0, 1, 1]
    assert result.iterations == 2
    assert result.converged
    trace = result.trace
    assert trace[TraceKeys.MOVED_FRACTION.v].tolist() == [0.5, 0.0]
    assert trace[TraceKeys.EXACT_FANOUT.v].iloc[-1] == pytest.approx(1.0)
    assert trace[TraceKeys.OBJECTIVE.v].iloc[-1] == pytest.approx(0.84375)


def test_optimum_is_a_fixed_point(local_minimum: BipartiteGraph) -> None:
    optimum = PartitionState.from_assignment([0, 0, 1, 1, 0, 0, 1, 1], 2)
    result = refine_loop(local_minimum, optimum, RefineParams(epsilon=0.0))
    assert result.iterations == 1
    assert result.state.equals(optimum)
    assert result.counters[0].messages[3] == 0


def test_large_penalty_keeps_initial_partition(planted: Callable[..., BipartiteGraph]) -> None:
    graph = planted(seed=1)
    state = PartitionState.from_assignment(np.arange(100) % 2, 2)
    result = refine_loop(graph, state, RefineParams(penalty=100.0), initial_buckets=state.bucket_of)
    assert result.state.equals(state)


def test_zero_epsilon_keeps_sizes(planted: Callable[..., BipartiteGraph]) -> None:
    graph = planted(seed=2)
    assignment = np.random.default_rng(0).permutation(np.arange(100) % 4)
    state = PartitionState.from_assignment(assignment, 4)
    result = refine_loop(graph, state, RefineParams(epsilon=0.0, max_iterations=10))
    for sizes in result.bucket_sizes:
        assert sizes.tolist() == [25, 25, 25, 25]


def test_refinement_improves_objective(planted: Callable[..., BipartiteGraph]) -> None:
    graph = planted(seed=3)
    state = init_random_partition(graph, 2, seed=3)
    params = RefineParams(max_iterations=10)
    result = refine_loop(graph, state, params)
    before = total_objective(graph, state, params.score)
    assert result.trace[TraceKeys.OBJECTIVE.v].iloc[-1] < before
    assert list(result.trace.columns) == TraceKeys.values()
    assert len(result.trace) == result.iterations == len(result.counters)


@pytest.mark.parametrize("move_mode", [MoveMode.EXACT_QUOTA, MoveMode.PROBABILISTIC])
def test_refinement_is_deterministic(planted: Callable[..., BipartiteGraph], move_mode: MoveMode) -> None:
    graph = planted(seed=4)
    state = init_random_partition(graph, 3, seed=4)
    first = refine_loop(graph, state, RefineParams(max_iterations=8, move_mode=move_mode, seed=9))
    second = refine_loop(graph, state, RefineParams(max_iterations=8, move_mode=move_mode, seed=9, workers=4))
    assert first.state.equals(second.state)
    columns = [c for c in TraceKeys.values() if c != TraceKeys.ELAPSED_MS.v]
    assert first.trace[columns].equals(second.trace[columns])


@pytest.mark.slow
@pytest.mark.parametrize("move_mode", [MoveMode.EXACT_QUOTA, MoveMode.PROBABILISTIC])
def test_balance_is_maintained(planted: Callable[..., BipartiteGraph], move_mode: MoveMode) -> None:
    capacity = BalanceSpec(0.05).capacity(100, 4)
    for seed in range(10):
        graph = planted(seed=seed)
        state = init_random_partition(graph, 4, seed=seed)
        result = refine_loop(graph, state, RefineParams(max_iterations=10, move_mode=move_mode, seed=seed))
        assert result.state.bucket_size.max() <= capacity
        if move_mode == MoveMode.EXACT_QUOTA:
            assert all(sizes.max() <= capacity for sizes in result.bucket_sizes)


@pytest.mark.slow
def test_planted_communities_are_recovered(planted: Callable[..., BipartiteGraph]) -> None:
    recovered = 0
    for seed in range(20):
        graph = planted(seed=seed, noise=0.0)
        result = refine_loop(graph, init_random_partition(graph, 2, seed=seed), RefineParams(seed=seed))
        recovered += result.trace[TraceKeys.EXACT_FANOUT.v].iloc[-1] <= 1.05
    assert recovered >= 18


@pytest.mark.slow
def test_noisy_planted_communities_match_ground_truth(planted: Callable[..., BipartiteGraph]) -> None:
    close = 0
    for seed in range(20):
        graph = planted(seed=seed, noise=0.05)
        truth = PartitionState.from_assignment(graph.data_ids // 50, 2)
        reference = total_objective(graph, truth, ScoreFunction.exact_fanout())
        result = refine_loop(graph, init_random_partition(graph, 2, seed=seed), RefineParams(seed=seed))
        close += result.trace[TraceKeys.EXACT_FANOUT.v].iloc[-1] <= reference + 0.05
    assert close >= 15


def test_local_minimum_has_no_improving_single_move(
    local_minimum: BipartiteGraph, local_minimum_state: PartitionState
) -> None:
    exact = ScoreFunction.exact_fanout()
    nd = NeighborData.from_state(local_minimum, local_minimum_state)
    buckets = local_minimum_state.bucket_of.tolist()
    gains = [move_gain(local_minimum, v, b, 1 - b, nd, exact) for v, b in enumerate(buckets)]
    assert max(gains) <= 0.0
    assert max(gains) == 0.0
    start = total_objective(local_minimum, local_minimum_state, exact)
    for u in np.flatnonzero(local_minimum_state.bucket_of == 0):
        for v in np.flatnonzero(local_minimum_state.bucket_of == 1):
            bucket_of = local_minimum_state.bucket_of.copy()
            bucket_of[[u, v]] = bucket_of[[v, u]]
            swapped = PartitionState.from_assignment(bucket_of, 2)
            assert total_objective(local_minimum, swapped, exact) >= start


@pytest.mark.slow
@pytest.mark.parametrize("k", [2, 8])
def test_refinement_never_worsens_random_start(random_graph: Callable[..., BipartiteGraph], k: int) -> None:
    rng = np.random.default_rng(k)
    params = RefineParams(max_iterations=20)
    for seed in range(20):
        graph = random_graph(rng, 200, 400)
        state = PartitionState.from_assignment(rng.permutation(np.arange(200) % k), k)
        result = refine_loop(graph, state, dataclasses.replace(params, seed=seed))
        before = total_objective(graph, state, params.score)
        assert total_objective(graph, result.state, params.score) <= before + 1e-12
