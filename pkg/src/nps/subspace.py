"""Magnitude-ranked subspaces of a task vector and per-subspace reweighting."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .params import apply
from .validation import check_finite_vector, check_positive_int

DEFAULT_SUBSPACES = 8


@dataclass(frozen=True, eq=False)
class SubspacePartition:
    """Assignment of every flat index to one of ``n_subspaces`` magnitude bins.

    Bin 0 holds the largest magnitudes. ``boundaries`` are the ``M + 1`` cut
    points in magnitude-rank space (``boundaries[k]:boundaries[k+1]`` is bin k).
    """

    n_subspaces: int
    bin_of: np.ndarray
    boundaries: np.ndarray
    per_tensor: bool = False

    @property
    def sizes(self):
        return np.bincount(self.bin_of, minlength=self.n_subspaces)

    def members(self, k):
        return np.flatnonzero(self.bin_of == k)


def magnitude_order(values):
    """Indices sorted by ``|value|`` descending, ties by ascending index."""
    return np.argsort(-np.abs(values), kind="stable")


def _equal_bins(n, M):
    # first n % M bins get one extra element
    base, extra = divmod(n, M)
    sizes = np.full(M, base, dtype=np.int64)
    sizes[:extra] += 1
    return np.concatenate([[0], np.cumsum(sizes)])


def partition(tv, n_subspaces=DEFAULT_SUBSPACES, per_tensor=False):
    """Split ``tv`` into ``n_subspaces`` near-equal bins by global magnitude rank.

    With ``per_tensor=True`` each tensor is ranked and split on its own, and
    bin k collects the k-th slice of every tensor.
    """
    D = len(tv)
    if D == 0:
        raise InvalidArgumentError("cannot partition an empty task vector")
    M = check_positive_int(n_subspaces, "n_subspaces", 1, D)
    bin_of = np.empty(D, dtype=np.int64)
    if not per_tensor:
        order = magnitude_order(tv.values)
        boundaries = _equal_bins(D, M)
        for k in range(M):
            bin_of[order[boundaries[k]:boundaries[k + 1]]] = k
    else:
        for s in tv.specs:
            chunk = tv.values[s.offset:s.offset + s.size]
            order = magnitude_order(chunk) + s.offset
            cuts = _equal_bins(s.size, M)
            for k in range(M):
                bin_of[order[cuts[k]:cuts[k + 1]]] = k
        boundaries = np.concatenate([[0], np.cumsum(np.bincount(bin_of, minlength=M))])
    bin_of.flags.writeable = False
    return SubspacePartition(M, bin_of, boundaries, per_tensor)


def reweight(tv, part, weights):
    """Task vector with every element of bin k scaled by ``weights[k]``."""
    w = check_finite_vector(weights, "weights", part.n_subspaces)
    if part.bin_of.shape[0] != len(tv):
        raise InvalidArgumentError(
            f"partition covers {part.bin_of.shape[0]} elements, task vector has {len(tv)}")
    return tv.with_values(w[part.bin_of] * tv.values)


def adjusted_model(pre, tv, part, weights):
    """Pre-trained checkpoint plus the reweighted task vector."""
    return apply(pre, reweight(tv, part, weights), 1.0)
