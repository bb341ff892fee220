"""Reference merging and pruning baselines: weight averaging, task arithmetic,
TIES merging and DARE."""

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .params import Checkpoint, TaskVector, apply
from .pruning import top_indices
from .validation import check_ratio, check_same_specs

TASK_ARITHMETIC_GRID = tuple(round(0.2 + 0.1 * i, 1) for i in range(14))  # 0.2 .. 1.5
TIES_GRID = tuple(round(0.8 + 0.1 * i, 1) for i in range(18))  # 0.8 .. 2.5


def weight_average(checkpoints):
    """Element-wise mean of spec-matched checkpoints."""
    checkpoints = list(checkpoints)
    if not checkpoints:
        raise InvalidArgumentError("weight_average needs at least one checkpoint")
    for c in checkpoints[1:]:
        check_same_specs(checkpoints[0], c)
    stacked = np.stack([c.values.astype(np.float64) for c in checkpoints])
    return Checkpoint(checkpoints[0].specs, stacked.mean(axis=0).astype(np.float32))


def _sum(pre, task_vectors):
    total = np.zeros(len(pre), dtype=np.float64)
    for tv in task_vectors:
        check_same_specs(pre, tv)
        total += tv.values
    return total


def task_arithmetic(pre, task_vectors, lam):
    """``pre + lam * Σ τ_t`` (no normalization)."""
    total = _sum(pre, task_vectors)
    return apply(pre, TaskVector(pre.specs, total), lam)


def ties_merge(pre, task_vectors, r, lam):
    """TIES merging: trim each vector to its top-r entries, elect a sign per
    coordinate by total magnitude mass, average the agreeing entries.
    """
    task_vectors = list(task_vectors)
    if not task_vectors:
        raise InvalidArgumentError("ties_merge needs at least one task vector")
    r = check_ratio(r)
    trimmed = np.zeros((len(task_vectors), len(pre)), dtype=np.float64)
    for i, tv in enumerate(task_vectors):
        check_same_specs(pre, tv)
        idx = top_indices(tv.values, r)
        trimmed[i, idx] = tv.values[idx]
    positive_mass = np.where(trimmed > 0, trimmed, 0).sum(axis=0)
    negative_mass = np.where(trimmed < 0, -trimmed, 0).sum(axis=0)
    elected = np.where(positive_mass >= negative_mass, 1.0, -1.0)
    agree = (np.sign(trimmed) == elected) & (trimmed != 0)
    count = agree.sum(axis=0)
    merged = np.where(agree, trimmed, 0).sum(axis=0) / np.maximum(count, 1)
    return apply(pre, TaskVector(pre.specs, merged), lam)


@dataclass(frozen=True)
class DareConfig:
    p: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if not (0 <= self.p < 1):
            raise InvalidArgumentError(f"drop probability must lie in [0, 1), got {self.p}")


def dare(tv, cfg):
    """Drop each delta with probability p and rescale survivors by 1 / (1 - p)."""
    if not isinstance(cfg, DareConfig):
        raise InvalidArgumentError("dare expects a DareConfig")
    if cfg.p == 0:
        return tv.with_values(tv.values)
    keep = np.random.default_rng(cfg.seed).random(len(tv)) >= cfg.p
    return tv.with_values(np.where(keep, tv.values / (1 - cfg.p), 0.0))
