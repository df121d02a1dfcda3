from __future__ import annotations

import numpy as np

from hyperfanout._constants._constants import Defaults
from hyperfanout._utils import NDArrayA
from hyperfanout.graph import EdgeList

__all__ = ["generate_planted"]


def _distinct_rows(rng: np.random.Generator, rows: int, population: int, size: int) -> NDArrayA:
    # `rows` samples of `size` distinct values from range(population)
    if 2 * size > population:
        return np.argsort(rng.random((rows, population)), axis=1)[:, :size]
    out = rng.integers(0, population, size=(rows, size))
    while True:
        ordered = np.sort(out, axis=1)
        bad = np.flatnonzero((np.diff(ordered, axis=1) == 0).any(axis=1))
        if len(bad) == 0:
            return out
        out[bad] = rng.integers(0, population, size=(len(bad), size))


def generate_planted(
    num_groups: int,
    vertices_per_group: int,
    queries_per_group: int,
    query_degree: int,
    noise_prob: float,
    seed: int = Defaults.SEED,
) -> EdgeList:
    """
    Planted-partition hypergraph with a known community structure.

    Data vertex ``g * vertices_per_group + i`` belongs to group ``g`` and query ``g * queries_per_group + j`` to
    group ``g``. Each query draws ``query_degree`` distinct vertices of its own group; each of them is replaced,
    with probability ``noise_prob``, by a uniformly drawn vertex of another group. With a single group there is no
    other group and no replacement happens.

    Parameters
    ----------
    num_groups
        Number of communities.
    vertices_per_group
        Data vertices per community.
    queries_per_group
        Queries per community.
    query_degree
        Neighbors drawn by every query, in ``[2, vertices_per_group]``.
    noise_prob
        Replacement probability in ``[0, 1]``.
    seed
        Seed of the generator; equal arguments give equal edge lists.

    Returns
    -------
    :class:`~hyperfanout.graph.EdgeList` listing every data vertex in ``all_data``.
    """
    if num_groups < 1 or vertices_per_group < 1 or queries_per_group < 0:
        raise ValueError(
            f"Invalid sizes: {num_groups} groups of {vertices_per_group} vertices and {queries_per_group} queries."
        )
    if not 2 <= query_degree <= vertices_per_group:
        raise ValueError(f"`query_degree` must lie in [2, {vertices_per_group}], found {query_degree}.")
    if not 0.0 <= noise_prob <= 1.0:
        raise ValueError(f"`noise_prob` must lie in [0, 1], found {noise_prob}.")

    rng = np.random.default_rng(seed)
    num_queries = num_groups * queries_per_group
    group = np.repeat(np.arange(num_groups, dtype=np.int64), queries_per_group)
    members = _distinct_rows(rng, num_queries, vertices_per_group, query_degree) + (group * vertices_per_group)[:, None]

    if num_groups > 1:
        noisy = rng.random(members.shape) < noise_prob
        outside = rng.integers(0, (num_groups - 1) * vertices_per_group, size=members.shape)
        # skip over the query's own group
        outside += np.where(outside >= (group * vertices_per_group)[:, None], vertices_per_group, 0)
        members = np.where(noisy, outside, members)

    queries = np.repeat(np.arange(num_queries, dtype=np.int64), query_degree)
    return EdgeList(queries, members.reshape(-1), all_data=np.arange(num_groups * vertices_per_group, dtype=np.int64))
