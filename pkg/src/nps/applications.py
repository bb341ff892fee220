"""Uses of pruned task vectors: transfer, fusion, storage accounting and metrics."""

import math
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .cmaes import SearchBudget, run
from .exceptions import DegenerateCoefficientsError, InvalidArgumentError
from .params import Checkpoint
from .pruning import DEFAULT_SIGMA, _score_fn
from .validation import check_finite_vector, check_ratio, check_same_specs, kept_count

LAMBDA_RANGE = (0.8, 2.5)


@dataclass(frozen=True)
class TransferConfig:
    lam: float = 1.0
    ratio: float = 0.05

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidArgumentError(f"lambda must be positive and finite, got {self.lam}")
        check_ratio(self.ratio)


def transfer(pre, ptv, cfg):
    """``pre + lambda * (m ⊙ τ)``; ``cfg`` is a TransferConfig or a bare lambda."""
    if not isinstance(cfg, TransferConfig):
        cfg = TransferConfig(float(cfg), ptv.ratio)
    return ptv.reconstruct(pre, cfg.lam)


def fuse(pre, ptvs, lambdas=None, normalize=True):
    """Merge pruned task vectors: ``pre + Σ λ_i (m_i ⊙ τ_i) / Σ λ_i``.

    With ``normalize=False`` the division by ``Σ λ_i`` is skipped (task
    arithmetic on the pruned vectors). Only positions covered by at least
    one mask are modified.
    """
    ptvs = list(ptvs)
    if not ptvs:
        raise InvalidArgumentError("fuse needs at least one pruned task vector")
    lam = check_finite_vector(np.ones(len(ptvs)) if lambdas is None else lambdas,
                              "lambdas", len(ptvs))
    total = float(lam.sum())
    if normalize and total == 0.0:
        raise DegenerateCoefficientsError("fusion coefficients sum to zero")
    for p in ptvs:
        check_same_specs(pre, p)
    coef = lam / total if normalize else lam
    merged = np.zeros(len(pre), dtype=np.float64)
    touched = np.zeros(len(pre), dtype=bool)
    for c, p in zip(coef, ptvs):
        idx = p.indices()
        merged[idx] += c * p.values
        touched[idx] = True
    idx = np.flatnonzero(touched)
    out = pre.values.copy()
    out[idx] = (out[idx].astype(np.float64) + merged[idx]).astype(np.float32)
    return Checkpoint(pre.specs, out)


@dataclass
class FusionResult:
    merged: Checkpoint
    lambdas: np.ndarray
    per_task_masks: list
    history: list
    fitness: float = float("nan")
    initial_fitness: float = float("nan")
    timing: dict = field(default_factory=dict)


class _LambdaObjective:
    def __init__(self, pre, ptvs, lo, hi, normalize, score):
        self.pre, self.ptvs, self.lo, self.hi = pre, ptvs, lo, hi
        self.normalize = normalize
        self._score = score

    def build(self, lam):
        return fuse(self.pre, self.ptvs, np.clip(lam, self.lo, self.hi), self.normalize)

    def score(self, ckpt):
        return self._score(ckpt)


def fuse_search(pre, ptvs, evaluator, budget=None, seed=0, sigma=DEFAULT_SIGMA,
                lambda_range=LAMBDA_RANGE, normalize=True, workers=1):
    """Search fusion coefficients with CMA-ES, maximizing ``evaluator`` on the merged model.

    The search is unconstrained; candidates are clipped to ``lambda_range``
    when evaluated. Starts from all ones, which is always evaluated.
    """
    ptvs = list(ptvs)
    lo, hi = map(float, lambda_range)
    if not (0 < lo <= hi):
        raise InvalidArgumentError(f"lambda_range must satisfy 0 < lo <= hi, got {lambda_range}")
    objective = _LambdaObjective(pre, ptvs, lo, hi, normalize, _score_fn(evaluator))
    result = run(objective, np.ones(len(ptvs)), sigma, budget or SearchBudget(), seed=seed,
                 maximize=True, workers=workers)
    lam = np.clip(result.best_vector, lo, hi)
    merged = fuse(pre, ptvs, lam, normalize)
    return FusionResult(merged, lam, [p.mask for p in ptvs], result.history,
                        result.best_fitness, result.history[0].mean_fitness, result.timing())


class NPSFusion(BaseEstimator):
    """Estimator wrapper for :func:`fuse_search`.

    ``fit(pre_trained, pruned_task_vectors, evaluator)`` searches the
    coefficients; ``transform()`` returns the merged checkpoint.
    """

    def __init__(self, lambda_range=LAMBDA_RANGE, max_generations=30, target_stagnation=10,
                 sigma=DEFAULT_SIGMA, normalize=True, workers=1, random_state=0):
        self.lambda_range = lambda_range
        self.max_generations = max_generations
        self.target_stagnation = target_stagnation
        self.sigma = sigma
        self.normalize = normalize
        self.workers = workers
        self.random_state = random_state

    def fit(self, pre_trained, pruned, evaluator):
        budget = SearchBudget(self.max_generations, self.target_stagnation)
        seed = 0 if self.random_state is None else int(self.random_state)
        res = fuse_search(pre_trained, pruned, evaluator, budget, seed, self.sigma,
                          self.lambda_range, self.normalize, self.workers)
        self.lambdas_ = res.lambdas
        self.merged_ = res.merged
        self.fitness_ = res.fitness
        self.history_ = res.history
        self.n_tasks_ = len(res.lambdas)
        return self

    def transform(self, X=None):
        check_is_fitted(self, "merged_")
        return self.merged_


# -- storage accounting ------------------------------------------------------

@dataclass(frozen=True)
class StorageReport:
    """Bit counts for storing N task-specific models under each scheme."""

    n_tasks: int
    n_params: int
    n_trainable: int
    n_frozen: int
    ratio: float
    fine_tuned_bits: int
    single_model_bits: int
    tallmask_bits: int
    nps_bits: int

    def to_dict(self):
        return {
            "inputs": {"N": self.n_tasks, "P": self.n_params, "P_prime": self.n_trainable,
                       "F": self.n_frozen, "r": self.ratio},
            "bits": {"fine_tuned": self.fine_tuned_bits, "single_model": self.single_model_bits,
                     "tallmask_ties": self.tallmask_bits, "nps": self.nps_bits},
        }


def storage_report(N, P, P_prime, F, r):
    """Exact storage bit counts (32-bit floats, 1-bit masks).

    fine-tuned ``32(N P' + F)``; single merged model ``32 P``; TALL mask +
    TIES ``(64 + N) P' + 32 F``; NPS ``32 P + N (32 ceil(r P') + P')``.
    """
    for name, v in (("N", N), ("P", P), ("P_prime", P_prime), ("F", F)):
        if isinstance(v, bool) or int(v) != v:
            raise InvalidArgumentError(f"{name} must be an integer, got {v!r}")
    N, P, P_prime, F = int(N), int(P), int(P_prime), int(F)
    if N < 1:
        raise InvalidArgumentError(f"N must be >= 1, got {N}")
    if P_prime < 0 or F < 0 or P != P_prime + F:
        raise InvalidArgumentError(f"inconsistent sizes: P={P} but P'={P_prime}, F={F}")
    r = check_ratio(r)
    kept = kept_count(r, P_prime)
    return StorageReport(
        N, P, P_prime, F, r,
        fine_tuned_bits=32 * (N * P_prime + F),
        single_model_bits=32 * P,
        tallmask_bits=(64 + N) * P_prime + 32 * F,
        nps_bits=32 * P + N * (32 * kept + P_prime),
    )


# -- metrics -----------------------------------------------------------------

def normalized_accuracy(merged_acc, finetuned_acc):
    """Mean over tasks of merged accuracy divided by the fine-tuned accuracy."""
    merged_acc = np.asarray(merged_acc, dtype=np.float64)
    finetuned_acc = np.asarray(finetuned_acc, dtype=np.float64)
    if merged_acc.shape != finetuned_acc.shape or merged_acc.size == 0:
        raise InvalidArgumentError("need matching, non-empty per-task accuracy lists")
    if np.any(finetuned_acc <= 0):
        raise ZeroDivisionError("fine-tuned accuracy must be positive for every task")
    return float(np.mean(merged_acc / finetuned_acc))


def h_score(avg_origin, avg_target):
    """Harmonic mean of original-task and target-task average performance."""
    a, b = float(avg_origin), float(avg_target)
    if a < 0 or b < 0:
        raise InvalidArgumentError("averages must be non-negative")
    if a + b == 0:
        raise ZeroDivisionError("h_score undefined when both averages are zero")
    if a == b:
        return a
    return 2 * a * b / (a + b)
