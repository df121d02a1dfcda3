from __future__ import annotations

from typing import Any, Optional

import numpy as np

from hyperfanout._constants._constants import PartitionKeys
from hyperfanout._docs import inject_docs
from hyperfanout._utils import NDArrayA, PathLike, open_text
from hyperfanout.graph import BipartiteGraph, PartitionState
from hyperfanout.io._utils import PartitionFormatError, _content_lines, _parse_int

__all__ = ["write_partition", "read_partition"]


@inject_docs(pk=PartitionKeys)
def write_partition(path: PathLike, state: PartitionState, data_ids: NDArrayA) -> None:
    """
    Write ``externalDataId<TAB>bucket`` lines, one per data vertex in internal order.

    The first line is the header comment ``{pk.K_HEADER.v}<k>``, so that trailing empty buckets survive a round
    trip through :func:`read_partition`.

    Parameters
    ----------
    path
        Destination, gzip-compressed if it ends in ``.gz``.
    state
        The partition.
    data_ids
        External id of every data vertex, usually :attr:`BipartiteGraph.data_ids`.
    """
    if len(data_ids) != state.num_data:
        raise ValueError(f"Got {len(data_ids)} ids for {state.num_data} data vertices.")
    with open_text(path, "w") as f:
        f.write(f"{PartitionKeys.K_HEADER.v}{state.k}\n")
        for vertex_id, bucket in zip(np.asarray(data_ids).tolist(), state.bucket_of.tolist()):
            f.write(f"{vertex_id}\t{bucket}\n")


@inject_docs(pk=PartitionKeys)
def read_partition(path: PathLike, graph: BipartiteGraph, k: Optional[int] = None) -> PartitionState:
    """
    Read a partition of the data vertices of ``graph``.

    Every data vertex must be assigned exactly once and no unknown id may appear. Lines starting with
    ``{pk.COMMENT.v}`` are comments; a ``{pk.K_HEADER.v}<k>`` comment sets the number of buckets.

    Parameters
    ----------
    path
        Path to a file written by :func:`write_partition` or a third-party tool.
    graph
        Graph whose data ids the file refers to.
    k
        Number of buckets. Defaults to the header value, else to the largest bucket id plus one.

    Returns
    -------
    :class:`~hyperfanout.graph.PartitionState`
    """
    integer_ids = np.issubdtype(graph.data_ids.dtype, np.integer)
    index: dict[Any, int] = {vertex_id: i for i, vertex_id in enumerate(graph.data_ids.tolist())}
    bucket_of = np.full(graph.num_data, -1, dtype=np.int64)

    for lineno, text in _content_lines(path):
        if text.startswith(PartitionKeys.K_HEADER.v):
            token = text[len(PartitionKeys.K_HEADER.v) :].strip()
            header = _parse_int(token, path, lineno, "number of buckets", PartitionFormatError)
            if header < 1:
                raise PartitionFormatError(f"Expected a positive number of buckets, found {header}.", path, lineno)
            k = header if k is None else k
            continue
        if text.lstrip().startswith(PartitionKeys.COMMENT.v):
            continue
        fields = text.split("\t")
        if len(fields) != 2:
            raise PartitionFormatError(f"Expected 2 tab-separated columns, found {len(fields)}.", path, lineno)
        token = fields[0]
        vertex_id: Any = _parse_int(token, path, lineno, "data id", PartitionFormatError) if integer_ids else token
        bucket = _parse_int(fields[1], path, lineno, "bucket", PartitionFormatError)
        if vertex_id not in index:
            raise PartitionFormatError(f"Unknown data id {token!r}.", path, lineno)
        if bucket < 0 or (k is not None and bucket >= k):
            raise PartitionFormatError(
                f"Bucket {bucket} of data id {token!r} is outside [0, {k if k is not None else 'k'}).", path, lineno
            )
        v = index[vertex_id]
        if bucket_of[v] >= 0:
            raise PartitionFormatError(f"Data id {token!r} is assigned twice.", path, lineno)
        bucket_of[v] = bucket

    missing = np.flatnonzero(bucket_of < 0)
    if len(missing):
        shown = ", ".join(str(i) for i in graph.data_ids[missing[:5]].tolist())
        raise PartitionFormatError(f"{len(missing)} data vertices are not assigned, e.g. {shown}.", path)
    if k is not None and bucket_of.max(initial=-1) >= k:
        raise PartitionFormatError(f"Bucket {int(bucket_of.max())} is outside [0, {k}).", path)
    if k is None:
        k = int(bucket_of.max()) + 1 if len(bucket_of) else 1
    return PartitionState.from_assignment(bucket_of, k)
