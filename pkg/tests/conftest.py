from __future__ import annotations

from typing import Callable

import numpy as np
import pytest

from hyperfanout.graph import BipartiteGraph, EdgeList, PartitionState, build_graph
from hyperfanout.io import generate_planted

# three queries over six data vertices; the state {1, 2, 3} | {4, 5, 6} has fanouts 2, 2, 1
THREE_QUERIES = {1: [1, 2, 6], 2: [1, 2, 3, 4], 3: [4, 5, 6]}

# every single move has exact-fanout gain <= 0 in the state {1..4} | {5..8}, the swap {3, 4} <-> {5, 6} is optimal
LOCAL_MINIMUM = {1: [1, 2, 5, 6], 2: [3, 4, 7, 8], 3: [1, 2], 4: [7, 8]}


def _graph(queries: dict[int, list[int]]) -> BipartiteGraph:
    return build_graph([(q, d) for q, members in queries.items() for d in members])


@pytest.fixture
def three_queries() -> BipartiteGraph:
    return _graph(THREE_QUERIES)


@pytest.fixture
def three_queries_state() -> PartitionState:
    return PartitionState.from_assignment([0, 0, 0, 1, 1, 1], 2)


@pytest.fixture
def local_minimum() -> BipartiteGraph:
    return _graph(LOCAL_MINIMUM)


@pytest.fixture
def local_minimum_state() -> PartitionState:
    return PartitionState.from_assignment([0, 0, 0, 0, 1, 1, 1, 1], 2)


@pytest.fixture
def planted() -> Callable[..., BipartiteGraph]:
    def make(seed: int = 0, noise: float = 0.05, queries_per_group: int = 100) -> BipartiteGraph:
        return build_graph(generate_planted(2, 50, queries_per_group, 3, noise, seed))

    return make


@pytest.fixture
def random_graph() -> Callable[..., BipartiteGraph]:
    """Random hypergraph with ``n`` data vertices and ``m`` queries of degree in ``[2, max_degree]``."""

    def make(rng: np.random.Generator, n: int, m: int, max_degree: int = 5) -> BipartiteGraph:
        queries, data = [], []
        for q in range(m):
            degree = int(rng.integers(2, min(max_degree, n) + 1))
            members = rng.choice(n, size=degree, replace=False)
            queries.extend([q] * degree)
            data.extend(members.tolist())
        return build_graph(EdgeList(np.array(queries), np.array(data), all_data=np.arange(n)))

    return make
