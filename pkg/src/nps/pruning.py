"""Top-r magnitude masks, sparse pruned task vectors and the subspace-weight search."""

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cmaes import SearchBudget, run
from .exceptions import InvalidArgumentError
from .params import Checkpoint, TaskVector, diff
from .subspace import DEFAULT_SUBSPACES, magnitude_order, partition, reweight
from .validation import check_ratio, check_same_specs, kept_count

DEFAULT_RATIO = 0.05
DEFAULT_SIGMA = 0.3


@dataclass(frozen=True, eq=False)
class Mask:
    """Packed bitset over the flat parameter order (LSB-first within each byte)."""

    bits: np.ndarray
    size: int

    @classmethod
    def from_bool(cls, flags):
        flags = np.asarray(flags, dtype=bool).reshape(-1)
        bits = np.packbits(flags, bitorder="little")
        bits.flags.writeable = False
        return cls(bits, flags.shape[0])

    @classmethod
    def from_indices(cls, indices, size):
        flags = np.zeros(size, dtype=bool)
        flags[indices] = True
        return cls.from_bool(flags)

    def to_bool(self):
        return np.unpackbits(self.bits, count=self.size, bitorder="little").astype(bool)

    def indices(self):
        return np.flatnonzero(self.to_bool())

    @property
    def kept(self):
        return int(np.unpackbits(self.bits, count=self.size, bitorder="little").sum())

    def __eq__(self, other):
        if not isinstance(other, Mask):
            return NotImplemented
        return self.size == other.size and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.size, self.bits.tobytes()))


def _scatter(pre, indices, deltas, scale=1.0):
    """``pre`` with ``pre[i] + scale * delta`` written at ``indices`` (float64 sum, one rounding)."""
    out = pre.values.copy()
    if indices.size:
        out[indices] = (out[indices].astype(np.float64) + scale * deltas).astype(np.float32)
    return Checkpoint(pre.specs, out)


@dataclass(frozen=True, eq=False)
class PrunedTaskVector:
    """Mask plus the kept (reweighted) deltas in ascending flat-index order."""

    specs: tuple
    mask: Mask
    values: np.ndarray
    ratio: float
    weights_used: np.ndarray = None

    def __post_init__(self):
        if self.values.shape[0] != self.mask.kept:
            raise InvalidArgumentError(
                f"{self.values.shape[0]} kept values for a mask with {self.mask.kept} set bits")

    def __len__(self):
        return self.mask.size

    def indices(self):
        return self.mask.indices()

    def to_dense(self):
        dense = np.zeros(self.mask.size, dtype=np.float64)
        dense[self.indices()] = self.values
        return TaskVector(self.specs, dense)

    def reconstruct(self, pre, scale=1.0):
        """``pre + scale * (m ⊙ τ)``, touching only masked positions."""
        check_same_specs(pre, self)
        return _scatter(pre, self.indices(), self.values, scale)


def top_indices(values, r):
    """Flat indices of the ``ceil(r * D)`` largest ``|values|`` (ties: lowest index first)."""
    r = check_ratio(r)
    D = values.shape[0]
    if D == 0:
        raise InvalidArgumentError("cannot mask an empty vector")
    k = kept_count(r, D)
    return np.sort(magnitude_order(values)[:k])


def top_r_mask(tv, r):
    """Mask selecting the ``ceil(r * D)`` largest-magnitude entries of ``tv``."""
    return Mask.from_indices(top_indices(tv.values, r), len(tv))


def prune(pre, tv_adjusted, r, weights_used=None):
    """Magnitude-prune ``tv_adjusted`` at ratio ``r``.

    Returns ``(pruned_task_vector, checkpoint)`` with the checkpoint equal to
    ``pre + m ⊙ tv_adjusted``.
    """
    check_same_specs(pre, tv_adjusted)
    r = check_ratio(r)
    idx = top_indices(tv_adjusted.values, r)
    mask = Mask.from_indices(idx, len(tv_adjusted))
    values = tv_adjusted.values[idx].copy()
    values.flags.writeable = False
    w = None if weights_used is None else np.array(weights_used, dtype=np.float64)
    ptv = PrunedTaskVector(pre.specs, mask, values, r, w)
    return ptv, _scatter(pre, idx, values)


def _score_fn(evaluator):
    if hasattr(evaluator, "evaluate"):
        return evaluator.evaluate
    if callable(evaluator):
        return evaluator
    raise InvalidArgumentError("evaluator must be callable or expose evaluate(checkpoint)")


class _WeightObjective:
    """Staged objective: build = reweight + prune, score = evaluator."""

    def __init__(self, pre, tv, part, r, score):
        self.pre, self.tv, self.part, self.r = pre, tv, part, r
        self._score = score

    def build(self, w):
        idx = top_indices(reweight(self.tv, self.part, w).values, self.r)
        deltas = np.asarray(w)[self.part.bin_of[idx]] * self.tv.values[idx]
        return _scatter(self.pre, idx, deltas)

    def score(self, ckpt):
        return self._score(ckpt)


@dataclass
class SearchOutcome:
    pruned: PrunedTaskVector
    checkpoint: Checkpoint
    history: list
    weights: np.ndarray
    fitness: float
    initial_fitness: float
    partition: object = None
    timing: dict = field(default_factory=dict)

    def __iter__(self):
        # unpacks as (pruned, checkpoint, history)
        return iter((self.pruned, self.checkpoint, self.history))


def nps_search(pre, ft, evaluator, n_subspaces=DEFAULT_SUBSPACES, ratio=DEFAULT_RATIO,
               budget=None, seed=0, sigma=DEFAULT_SIGMA, per_tensor=False, workers=1):
    """Search per-subspace weights maximizing ``evaluator`` on the pruned model.

    The task vector ``ft - pre`` is split into ``n_subspaces`` magnitude bins;
    CMA-ES searches one weight per bin starting from all ones (plain
    magnitude pruning), scoring ``pre + top_r(reweighted τ)``. The best
    weights found are used for the returned prune, so the returned fitness
    is never below that of plain magnitude pruning.
    """
    r = check_ratio(ratio)
    tv = diff(ft, pre)
    part = partition(tv, n_subspaces, per_tensor=per_tensor)
    objective = _WeightObjective(pre, tv, part, r, _score_fn(evaluator))
    result = run(objective, np.ones(part.n_subspaces), sigma, budget or SearchBudget(),
                 seed=seed, maximize=True, workers=workers)
    w = result.best_vector
    ptv, ckpt = prune(pre, reweight(tv, part, w), r, weights_used=w)
    return SearchOutcome(ptv, ckpt, result.history, w, result.best_fitness,
                         result.history[0].mean_fitness, part, result.timing())


class NPSPruner(BaseEstimator):
    """Estimator wrapper around :func:`nps_search`.

    ``fit(fine_tuned, pre_trained, evaluator)`` runs the search;
    ``transform()`` returns the pruned checkpoint (optionally grafted onto
    another spec-matched base).

    Examples
    --------
    >>> pruner = NPSPruner(n_subspaces=4, ratio=0.1, max_generations=5)  # doctest: +SKIP
    >>> pruned = pruner.fit(ft, pre, evaluator).transform()             # doctest: +SKIP
    """

    def __init__(self, n_subspaces=DEFAULT_SUBSPACES, ratio=DEFAULT_RATIO, max_generations=30,
                 target_stagnation=10, sigma=DEFAULT_SIGMA, per_tensor=False, workers=1,
                 random_state=0):
        self.n_subspaces = n_subspaces
        self.ratio = ratio
        self.max_generations = max_generations
        self.target_stagnation = target_stagnation
        self.sigma = sigma
        self.per_tensor = per_tensor
        self.workers = workers
        self.random_state = random_state

    def fit(self, fine_tuned, pre_trained, evaluator):
        budget = SearchBudget(self.max_generations, self.target_stagnation)
        seed = 0 if self.random_state is None else int(self.random_state)
        out = nps_search(pre_trained, fine_tuned, evaluator, self.n_subspaces, self.ratio,
                         budget, seed, self.sigma, self.per_tensor, self.workers)
        self.pre_trained_ = pre_trained
        self.pruned_ = out.pruned
        self.weights_ = out.weights
        self.fitness_ = out.fitness
        self.initial_fitness_ = out.initial_fitness
        self.history_ = out.history
        self.partition_ = out.partition
        self.timing_ = out.timing
        self.n_features_in_ = len(pre_trained)
        return self

    def transform(self, pre_trained=None):
        check_is_fitted(self, "pruned_")
        base = self.pre_trained_ if pre_trained is None else pre_trained
        return self.pruned_.reconstruct(base)

    def fit_transform(self, fine_tuned, pre_trained, evaluator):
        return self.fit(fine_tuned, pre_trained, evaluator).transform()
