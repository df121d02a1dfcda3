from __future__ import annotations

import numpy as np

from hyperfanout._constants._constants import SnapKeys
from hyperfanout._utils import PathLike
from hyperfanout.graph import EdgeList
from hyperfanout.io._utils import HypergraphFormatError, _content_lines, _parse_int

__all__ = ["read_snap"]


def read_snap(path: PathLike) -> EdgeList:
    """
    Read a directed *SNAP* edge list as a hypergraph.

    Every ``src dst`` line makes ``dst`` a member of the query of ``src``, so each node's out-neighborhood
    becomes one query. Every node id, source or destination, becomes a data vertex. Lines starting with ``#`` are
    comments.

    Parameters
    ----------
    path
        Path to the file, optionally gzip-compressed (``.gz``).

    Returns
    -------
    :class:`~hyperfanout.graph.EdgeList`
    """
    sources: list[int] = []
    targets: list[int] = []
    for lineno, text in _content_lines(path, comment=SnapKeys.COMMENT.v):
        fields = text.split()
        if len(fields) != 2:
            raise HypergraphFormatError(f"Expected `src dst`, found {len(fields)} fields.", path, lineno)
        sources.append(_parse_int(fields[0], path, lineno, "source node"))
        targets.append(_parse_int(fields[1], path, lineno, "target node"))
    if not sources:
        raise HypergraphFormatError("The edge list is empty.", path)
    queries = np.asarray(sources, dtype=np.int64)
    data = np.asarray(targets, dtype=np.int64)
    return EdgeList(queries, data, all_data=np.union1d(queries, data))
