from __future__ import annotations

import numpy as np

from hyperfanout._constants._constants import HmetisKeys
from hyperfanout._docs import inject_docs
from hyperfanout._logging import logger
from hyperfanout._utils import PathLike, open_text
from hyperfanout.graph import BipartiteGraph, EdgeList
from hyperfanout.io._utils import HypergraphFormatError, _content_lines, _parse_int

__all__ = ["read_hmetis", "write_hmetis"]

_WEIGHTED = (HmetisKeys.FMT_EDGE_WEIGHTS, HmetisKeys.FMT_VERTEX_WEIGHTS, HmetisKeys.FMT_BOTH_WEIGHTS)


@inject_docs(hk=HmetisKeys)
def read_hmetis(path: PathLike) -> EdgeList:
    """
    Read a hypergraph in *hMetis* format.

    The first content line is ``numHyperedges numVertices [fmt]``; each of the next ``numHyperedges`` lines lists
    the 1-based vertices of one hyperedge. Lines starting with ``{hk.COMMENT}`` are comments. Only unweighted
    files (``fmt`` omitted or ``{hk.FMT_UNWEIGHTED}``) are supported.

    Parameters
    ----------
    path
        Path to the file, optionally gzip-compressed (``.gz``).

    Returns
    -------
    :class:`~hyperfanout.graph.EdgeList` with hyperedge ``i`` as query ``i`` and vertex ``v`` as data id ``v - 1``;
    every declared vertex is listed in ``all_data``.
    """
    lines = _content_lines(path, comment=HmetisKeys.COMMENT.v)
    header = next(lines, None)
    if header is None:
        raise HypergraphFormatError("Missing header line.", path)
    lineno, text = header
    tokens = text.split()
    if len(tokens) not in (2, 3):
        raise HypergraphFormatError(
            f"Header must be `numHyperedges numVertices [fmt]`, found {len(tokens)} fields.", path, lineno
        )
    num_edges = _parse_int(tokens[0], path, lineno, "hyperedge count")
    num_vertices = _parse_int(tokens[1], path, lineno, "vertex count")
    if num_edges < 1 or num_vertices < 1:
        raise HypergraphFormatError(
            f"Expected positive counts, found {num_edges} hyperedges and {num_vertices} vertices.", path, lineno
        )
    if len(tokens) == 3:
        if tokens[2] in _WEIGHTED:
            raise HypergraphFormatError(f"Weighted hMetis files (fmt {tokens[2]}) are not supported.", path, lineno)
        if tokens[2] != HmetisKeys.FMT_UNWEIGHTED:
            raise HypergraphFormatError(f"Unknown fmt code {tokens[2]!r}.", path, lineno)

    queries: list[int] = []
    data: list[int] = []
    seen = 0
    for lineno, text in lines:
        if seen == num_edges:
            raise HypergraphFormatError(f"Found more than the declared {num_edges} hyperedges.", path, lineno)
        for token in text.split():
            vertex = _parse_int(token, path, lineno, "vertex id")
            if not 1 <= vertex <= num_vertices:
                raise HypergraphFormatError(f"Vertex id {vertex} is outside [1, {num_vertices}].", path, lineno)
            queries.append(seen)
            data.append(vertex - 1)
        seen += 1
    if seen < num_edges:
        raise HypergraphFormatError(f"Declared {num_edges} hyperedges, found {seen}.", path)

    logger.debug(f"Read {num_edges} hyperedges over {num_vertices} vertices from {path}.")
    return EdgeList(
        np.asarray(queries, dtype=np.int64),
        np.asarray(data, dtype=np.int64),
        all_data=np.arange(num_vertices, dtype=np.int64),
    )


def write_hmetis(path: PathLike, graph: BipartiteGraph) -> None:
    """
    Write the graph in unweighted *hMetis* format, queries as hyperedges in internal order.

    Data vertices are written with their 1-based internal ids, so isolated vertices are preserved through
    ``numVertices``.
    """
    with open_text(path, "w") as f:
        f.write(f"{graph.num_queries} {graph.num_data}\n")
        for q in range(graph.num_queries):
            f.write(" ".join(str(int(v) + 1) for v in graph.query_adj(q)))
            f.write("\n")
