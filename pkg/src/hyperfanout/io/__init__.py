from __future__ import annotations

from typing import Union

from hyperfanout._constants._constants import IdType, InputFormat
from hyperfanout._utils import PathLike
from hyperfanout.graph import EdgeList
from hyperfanout.io._utils import FileFormatError, HypergraphFormatError, PartitionFormatError
from hyperfanout.io.edgelist import read_edge_list, write_edge_list
from hyperfanout.io.hmetis import read_hmetis, write_hmetis
from hyperfanout.io.partition import read_partition, write_partition
from hyperfanout.io.snap import read_snap
from hyperfanout.io.synthetic import generate_planted

__all__ = [
    "read_hypergraph",
    "read_hmetis",
    "write_hmetis",
    "read_edge_list",
    "write_edge_list",
    "read_snap",
    "read_partition",
    "write_partition",
    "generate_planted",
    "FileFormatError",
    "HypergraphFormatError",
    "PartitionFormatError",
]


def read_hypergraph(
    path: PathLike, fmt: Union[InputFormat, str] = InputFormat.HMETIS, id_type: Union[IdType, str] = IdType.INT
) -> EdgeList:
    """Read ``path`` with the reader of ``fmt``; ``id_type`` only applies to edge lists."""
    fmt = InputFormat(fmt)
    if fmt == InputFormat.HMETIS:
        return read_hmetis(path)
    if fmt == InputFormat.EDGE_LIST:
        return read_edge_list(path, id_type)
    return read_snap(path)
