from __future__ import annotations

import gzip
import os
from pathlib import Path
from typing import IO, Any, Union

import numpy as np

PathLike = Union[os.PathLike, str]  # type:ignore[type-arg]

try:
    from numpy.typing import NDArray

    NDArrayA = NDArray[Any]
except (ImportError, TypeError):
    NDArray = np.ndarray  # type: ignore[misc]
    NDArrayA = np.ndarray  # type: ignore[misc]

_MASK64 = (1 << 64) - 1
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)


def open_text(path: PathLike, mode: str = "r") -> IO[str]:
    """Open a text file, transparently (de)compressing files ending in ``.gz``."""
    path = Path(path)
    if path.suffix == ".gz":
        return gzip.open(path, mode + "t", encoding="utf-8")  # type: ignore[return-value]
    return open(path, mode, encoding="utf-8")


def splitmix64(x: NDArrayA) -> NDArrayA:
    """Vectorized splitmix64 finalizer over ``uint64`` arrays (wraps modulo 2**64)."""
    z = np.asarray(x, dtype=np.uint64) + _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def vertex_hash(seed: int, stream: int, vertices: NDArrayA) -> NDArrayA:
    """
    Counter-based hash of ``(seed, stream, vertex)``.

    The value of a vertex does not depend on which other vertices are hashed alongside it, so per-vertex random
    decisions are identical for any split of the vertex set over workers.
    """
    salt = splitmix64(np.array([seed & _MASK64], dtype=np.uint64))
    salt = splitmix64(salt ^ np.array([stream & _MASK64], dtype=np.uint64))
    return splitmix64(np.asarray(vertices, dtype=np.uint64) ^ salt[0])


def vertex_uniform(seed: int, stream: int, vertices: NDArrayA) -> NDArrayA:
    """Uniform floats in ``[0, 1)`` derived from :func:`vertex_hash`."""
    h = vertex_hash(seed, stream, vertices)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))


def vertex_ranges(n: int, workers: int) -> list[tuple[int, int]]:
    """Split ``[0, n)`` into at most ``workers`` contiguous, nearly equal ranges."""
    workers = max(1, min(workers, n)) if n > 0 else 1
    bounds = np.linspace(0, n, workers + 1).round().astype(np.int64)
    return [(int(lo), int(hi)) for lo, hi in zip(bounds[:-1], bounds[1:])]


def expand_ranges(starts: NDArrayA, stops: NDArrayA) -> NDArrayA:
    """Concatenate ``arange(start, stop)`` for every pair, vectorized."""
    starts = np.asarray(starts, dtype=np.int64)
    lengths = np.asarray(stops, dtype=np.int64) - starts
    total = int(lengths.sum())
    if total == 0:
        return np.zeros(0, dtype=np.int64)
    offsets = np.repeat(starts - np.concatenate([[0], np.cumsum(lengths)[:-1]]), lengths)
    return offsets + np.arange(total, dtype=np.int64)
