from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from hyperfanout._constants._constants import Defaults
from hyperfanout._utils import NDArrayA

__all__ = ["NUM_BINS", "ZERO_BIN", "BIN_REPRESENTATIVE", "gain_bin", "best_targets", "GainHistogram"]

_E = Defaults.MAX_BIN_EXPONENT
# bins are ordered by decreasing gain: positive exponents 64..0, zero, negative exponents 0..64
ZERO_BIN = _E + 1
NUM_BINS = 2 * _E + 3


def _representatives() -> NDArrayA:
    exponents = np.arange(_E + 1, dtype=np.float64)
    positive = 1.5 * np.exp2(exponents[::-1]) * Defaults.UNIT_GAIN
    negative = -1.5 * np.exp2(exponents) * Defaults.UNIT_GAIN
    return np.concatenate([positive, [0.0], negative])


#: midpoint of the gain interval of every bin
BIN_REPRESENTATIVE = _representatives()


def gain_bin(gains: NDArrayA | float) -> NDArrayA:
    """
    Histogram bin of every gain.

    A gain ``g`` with ``|g| >= u`` (unit gain) falls in the bin of exponent ``floor(log2(|g| / u))``, clamped to
    ``[0, 64]``, on the side of its sign. Gains with ``|g| < u`` share the zero bin.
    """
    gains = np.asarray(gains, dtype=np.float64)
    magnitude = np.abs(gains)
    with np.errstate(divide="ignore"):
        exponent = np.floor(np.log2(magnitude / Defaults.UNIT_GAIN))
    exponent = np.clip(np.nan_to_num(exponent, neginf=0.0), 0, _E).astype(np.int64)
    bins = np.where(gains > 0, _E - exponent, ZERO_BIN + 1 + exponent)
    return np.where(magnitude < Defaults.UNIT_GAIN, ZERO_BIN, bins).astype(np.int64)


def best_targets(candidates: NDArrayA, gains: NDArrayA, own: NDArrayA) -> tuple[NDArrayA, NDArrayA]:
    """
    Row-wise best target among candidate buckets other than the vertex's own.

    Parameters
    ----------
    candidates
        ``m x r`` ascending candidate buckets, padded with ``-1``.
    gains
        ``m x r`` gain of moving to each candidate.
    own
        Current bucket of every row.

    Returns
    -------
    Target and gain of every row; rows without an alternative get target ``-1`` and gain ``0``.
    """
    valid = (candidates >= 0) & (candidates != own[:, None])
    masked = np.where(valid, gains, -np.inf)
    column = np.argmax(masked, axis=1)
    rows = np.arange(len(candidates))
    has = valid.any(axis=1)
    target = np.where(has, candidates[rows, column], -1)
    gain = np.where(has, masked[rows, column], 0.0)
    return target.astype(np.int64), gain.astype(np.float64)


class GainHistogram:
    """
    Vertex counts per directed bucket pair ``(i, j)`` and gain bin.

    Only non-empty cells are stored, as sorted keys ``(i * k + j) * NUM_BINS + bin``. The counts of pair
    ``(i, j)`` sum to the number of vertices in bucket ``i`` whose best target is ``j``.
    """

    def __init__(self, k: int, keys: NDArrayA, counts: NDArrayA) -> None:
        self.k = k
        self.keys = np.asarray(keys, dtype=np.int64)
        self.counts = np.asarray(counts, dtype=np.int64)

    @classmethod
    def from_proposals(cls, k: int, sources: NDArrayA, targets: NDArrayA, gains: NDArrayA) -> GainHistogram:
        """Histogram of proposals ``source -> target`` with the given gains; targets ``< 0`` are skipped."""
        targets = np.asarray(targets, dtype=np.int64)
        keep = targets >= 0
        keys = (np.asarray(sources, dtype=np.int64)[keep] * k + targets[keep]) * NUM_BINS + gain_bin(
            np.asarray(gains)[keep]
        )
        keys, counts = np.unique(keys, return_counts=True)
        return cls(k, keys, counts)

    @classmethod
    def merge(cls, k: int, parts: Sequence[GainHistogram]) -> GainHistogram:
        """Sum of partial histograms."""
        if not parts:
            return cls(k, np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64))
        keys = np.concatenate([part.keys for part in parts])
        counts = np.concatenate([part.counts for part in parts])
        keys, inverse = np.unique(keys, return_inverse=True)
        return cls(k, keys, np.bincount(inverse.reshape(-1), weights=counts, minlength=len(keys)).astype(np.int64))

    def get(self, i: int, j: int) -> NDArrayA:
        """Dense bin counts of pair ``(i, j)``."""
        pair = i * self.k + j
        lo, hi = np.searchsorted(self.keys, [pair * NUM_BINS, (pair + 1) * NUM_BINS])
        out = np.zeros(NUM_BINS, dtype=np.int64)
        out[self.keys[lo:hi] % NUM_BINS] = self.counts[lo:hi]
        return out

    def total(self, i: int, j: int) -> int:
        """Number of vertices proposing ``i -> j``."""
        return int(self.get(i, j).sum())

    def pairs(self) -> NDArrayA:
        """Directed pairs with at least one proposal, as an ``m x 2`` array sorted by ``(i, j)``."""
        pair = np.unique(self.keys // NUM_BINS)
        return np.stack([pair // self.k, pair % self.k], axis=1)

    def equals(self, other: GainHistogram) -> bool:
        return self.k == other.k and np.array_equal(self.keys, other.keys) and np.array_equal(self.counts, other.counts)

    def __len__(self) -> int:
        return int(self.counts.sum())
