from __future__ import annotations

from typing import Union

import numpy as np

from hyperfanout._constants._constants import IdType
from hyperfanout._docs import inject_docs
from hyperfanout._utils import PathLike, open_text
from hyperfanout.graph import BipartiteGraph, EdgeList
from hyperfanout.io._utils import HypergraphFormatError, _content_lines, _parse_int

__all__ = ["read_edge_list", "write_edge_list"]

_INT64 = np.iinfo(np.int64)


@inject_docs(it=IdType)
def read_edge_list(path: PathLike, id_type: Union[IdType, str] = IdType.INT) -> EdgeList:
    """
    Read ``queryId<TAB>dataId`` lines.

    Parameters
    ----------
    path
        Path to the file, optionally gzip-compressed (``.gz``).
    id_type
        ``{it.INT!r}`` parses ids as 64-bit integers, ``{it.STR!r}`` keeps them as strings.

    Returns
    -------
    :class:`~hyperfanout.graph.EdgeList` in the file's ids; duplicates are kept and dropped by
    :func:`~hyperfanout.graph.build_graph`.
    """
    id_type = IdType(id_type)
    queries: list[Union[int, str]] = []
    data: list[Union[int, str]] = []
    for lineno, text in _content_lines(path):
        fields = text.split("\t")
        if len(fields) != 2 or not fields[0] or not fields[1]:
            raise HypergraphFormatError(f"Expected 2 tab-separated columns, found {len(fields)}.", path, lineno)
        if id_type == IdType.INT:
            q = _parse_int(fields[0], path, lineno, "query id")
            d = _parse_int(fields[1], path, lineno, "data id")
            for value in (q, d):
                if not _INT64.min <= value <= _INT64.max:
                    raise HypergraphFormatError(f"Id {value} does not fit in 64 bits.", path, lineno)
            queries.append(q)
            data.append(d)
        else:
            queries.append(fields[0])
            data.append(fields[1])
    if not queries:
        raise HypergraphFormatError("The edge list is empty.", path)
    dtype = np.int64 if id_type == IdType.INT else None
    return EdgeList(np.asarray(queries, dtype=dtype), np.asarray(data, dtype=dtype))


def write_edge_list(path: PathLike, edges: Union[EdgeList, BipartiteGraph]) -> None:
    """Write ``queryId<TAB>dataId`` lines; isolated data vertices cannot be represented and are dropped."""
    if isinstance(edges, BipartiteGraph):
        edges = edges.edges()
    with open_text(path, "w") as f:
        for q, d in zip(edges.queries.tolist(), edges.data.tolist()):
            f.write(f"{q}\t{d}\n")
