"""CMA-ES with an ask/tell interface and a budgeted driver loop.

The update follows the standard (mu/mu_w, lambda)-CMA-ES with rank-one and
rank-mu covariance updates and cumulative step-size adaptation, using the
default strategy parameters from Hansen's tutorial.

Two additions matter for noisy, plateau-heavy objectives such as calibration
accuracy: tied fitness values share the recombination weight of their rank
group, and a generation whose fitnesses are all equal leaves the mean in
place and widens the step size instead of recombining uninformative samples.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import InvalidArgumentError, NumericError, SearchAbortedError
from .validation import check_finite_vector, check_positive_int

logger = logging.getLogger(__name__)

MAX_CONDITION = 1e14


def default_popsize(n):
    return 4 + int(math.floor(3 * math.log(n)))


@dataclass
class SearchBudget:
    """Termination settings for :func:`run`.

    ``target_stagnation=None`` disables the early stop; ``max_evaluations``
    additionally caps objective calls (the initial mean counts as one).
    """

    max_generations: int = 30
    target_stagnation: int = 10
    max_evaluations: int = None

    def __post_init__(self):
        check_positive_int(self.max_generations, "max_generations", minimum=0)
        if self.target_stagnation is not None:
            check_positive_int(self.target_stagnation, "target_stagnation")
        if self.max_evaluations is not None:
            check_positive_int(self.max_evaluations, "max_evaluations")


@dataclass
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    sigma: float
    elapsed_prune_s: float
    elapsed_validate_s: float
    evaluations: int

    def to_dict(self):
        return asdict(self)


@dataclass
class SearchResult:
    best_vector: np.ndarray
    best_fitness: float
    history: list = field(default_factory=list)
    evaluations: int = 0
    stop_reason: str = ""
    wall_clock_s: float = 0.0
    loop_wall_clock_s: float = 0.0

    @property
    def generations(self):
        # generation 0 is the initial-mean evaluation
        return max(0, len(self.history) - 1)

    def timing(self):
        """Time split of the search.

        ``t_total_model_s`` is ``G * (mean T_pruning + mean T_validate)`` over
        the G sampled generations. ``loop_wall_clock_s`` is the measured time
        of those generations (sampling and update included), the quantity the
        model should track; ``wall_clock_s`` also covers the initial mean.
        """
        gens = self.history[1:]
        G = len(gens)
        t_prune = sum(r.elapsed_prune_s for r in gens) / G if G else 0.0
        t_val = sum(r.elapsed_validate_s for r in gens) / G if G else 0.0
        return {
            "generations": G,
            "t_pruning_mean_s": t_prune,
            "t_validate_mean_s": t_val,
            "t_total_model_s": G * (t_prune + t_val),
            "loop_wall_clock_s": self.loop_wall_clock_s,
            "wall_clock_s": self.wall_clock_s,
        }


class CMAES:
    """Covariance matrix adaptation evolution strategy, ask/tell style.

    Parameters
    ----------
    mean : array-like of shape (n,)
        Initial distribution mean.
    sigma : float
        Initial step size.
    popsize : int, optional
        Candidates per generation, default ``4 + floor(3 ln n)``.
    seed : int
        Sampling seed; generation ``g`` draws from ``default_rng([seed, g])``
        so ``ask`` is a pure function of the state.
    maximize : bool
        Treat larger fitness as better.
    """

    def __init__(self, mean, sigma, popsize=None, seed=0, maximize=False):
        self.mean = check_finite_vector(mean, "mean").copy()
        n = self.n = self.mean.shape[0]
        if n == 0:
            raise InvalidArgumentError("search dimension must be >= 1")
        if not (sigma > 0 and math.isfinite(sigma)):
            raise InvalidArgumentError(f"sigma must be positive and finite, got {sigma}")
        self.sigma = float(sigma)
        self.popsize = check_positive_int(popsize if popsize is not None else default_popsize(n),
                                          "popsize", minimum=2)
        self.seed = int(seed)
        self.maximize = bool(maximize)
        self.generation = 0
        self.evaluations = 0

        lam = self.popsize
        self.mu = lam // 2
        raw = np.array([math.log((lam + 1) / 2) - math.log(i + 1) for i in range(self.mu)])
        self.weights = np.zeros(lam)
        self.weights[:self.mu] = raw / raw.sum()
        w = self.weights[:self.mu]
        self.mueff = 1.0 / np.sum(w ** 2)

        self.cs = (self.mueff + 2) / (n + self.mueff + 5)
        self.ds = 1 + 2 * max(0.0, math.sqrt((self.mueff - 1) / (n + 1)) - 1) + self.cs
        self.cc = (4 + self.mueff / n) / (n + 4 + 2 * self.mueff / n)
        self.c1 = 2 / ((n + 1.3) ** 2 + self.mueff)
        self.cmu = min(1 - self.c1,
                       2 * (self.mueff - 2 + 1 / self.mueff) / ((n + 2) ** 2 + self.mueff))
        self.chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n ** 2))

        self.C = np.eye(n)
        self.p_sigma = np.zeros(n)
        self.p_c = np.zeros(n)
        self._decompose()

        self.best_x = None
        self.best_f = None

    # -- helpers ---------------------------------------------------------------

    def state_dict(self):
        return {
            "generation": self.generation,
            "sigma": self.sigma,
            "mean": self.mean.tolist(),
            "C": self.C.tolist(),
            "p_sigma": self.p_sigma.tolist(),
            "p_c": self.p_c.tolist(),
            "popsize": self.popsize,
            "seed": self.seed,
        }

    def _decompose(self):
        C = (self.C + self.C.T) / 2
        try:
            if not np.all(np.isfinite(C)):
                raise np.linalg.LinAlgError("covariance has non-finite entries")
            eigvals, B = np.linalg.eigh(C)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"covariance decomposition failed: {exc}",
                               state=self.state_dict()) from exc
        top = eigvals.max()
        if top <= 0:
            raise NumericError("covariance is not positive definite", state=self.state_dict())
        if eigvals.min() <= top / MAX_CONDITION:
            # recondition by lifting the spectrum to the condition-number bound
            shift = top / MAX_CONDITION - eigvals.min()
            C = C + shift * np.eye(self.n)
            eigvals = eigvals + shift
            logger.debug("reconditioned covariance (shift %.3g)", shift)
        self.C = C
        self.eigvals = eigvals
        self.B = B
        self.D = np.sqrt(eigvals)
        self.inv_sqrt_C = (B / self.D) @ B.T

    def _better(self, f, g):
        return f > g if self.maximize else f < g

    def consider(self, x, f):
        """Offer an externally evaluated point to the best-so-far record."""
        f = float(f)
        if not math.isfinite(f):
            raise InvalidArgumentError(f"fitness must be finite, got {f}")
        if self.best_f is None or self._better(f, self.best_f):
            self.best_x = np.array(x, dtype=np.float64, copy=True)
            self.best_f = f

    # -- ask/tell --------------------------------------------------------------

    def ask(self):
        """Sample ``popsize`` candidates from N(mean, sigma^2 C); shape (popsize, n)."""
        rng = np.random.default_rng([self.seed, self.generation])
        z = rng.standard_normal((self.popsize, self.n))
        y = (z * self.D) @ self.B.T
        return self.mean + self.sigma * y

    def _recombination_weights(self, keys):
        order = np.argsort(keys, kind="stable")
        w = np.empty(self.popsize)
        sorted_keys = keys[order]
        i = 0
        while i < self.popsize:
            j = i + 1
            while j < self.popsize and sorted_keys[j] == sorted_keys[i]:
                j += 1
            w[order[i:j]] = self.weights[i:j].mean()
            i = j
        return w

    def tell(self, candidates, fitnesses):
        """Update the distribution from evaluated candidates; returns ``self``."""
        X = np.asarray(candidates, dtype=np.float64)
        f = np.asarray(fitnesses, dtype=np.float64).reshape(-1)
        if X.ndim != 2 or X.shape[1] != self.n:
            raise InvalidArgumentError(f"candidates must have shape (k, {self.n}), got {X.shape}")
        if f.shape[0] != X.shape[0]:
            raise InvalidArgumentError(
                f"got {f.shape[0]} fitness values for {X.shape[0]} candidates")
        if X.shape[0] != self.popsize:
            raise InvalidArgumentError(f"expected {self.popsize} candidates, got {X.shape[0]}")
        if not np.all(np.isfinite(f)):
            raise InvalidArgumentError("fitness values must be finite")

        self.evaluations += f.shape[0]
        keys = -f if self.maximize else f
        k_best = int(np.argmin(keys))
        self.consider(X[k_best], f[k_best])
        n = self.n

        if np.all(keys == keys[0]):
            # no ranking information: keep the mean, widen the search
            self.sigma *= math.exp(0.2 + self.cs / self.ds)
            self.generation += 1
            return self

        w = self._recombination_weights(keys)
        Y = (X - self.mean) / self.sigma
        y_w = w @ Y
        self.mean = self.mean + self.sigma * y_w

        self.p_sigma = ((1 - self.cs) * self.p_sigma
                        + math.sqrt(self.cs * (2 - self.cs) * self.mueff) * (self.inv_sqrt_C @ y_w))
        norm_ps = float(np.linalg.norm(self.p_sigma))
        denom = math.sqrt(1 - (1 - self.cs) ** (2 * (self.generation + 1)))
        h_sigma = 1.0 if norm_ps / denom < (1.4 + 2 / (n + 1)) * self.chi_n else 0.0
        self.p_c = ((1 - self.cc) * self.p_c
                    + h_sigma * math.sqrt(self.cc * (2 - self.cc) * self.mueff) * y_w)

        delta_h = (1 - h_sigma) * self.cc * (2 - self.cc)
        rank_mu = (Y * w[:, None]).T @ Y
        self.C = ((1 + self.c1 * delta_h - self.c1 - self.cmu * w.sum()) * self.C
                  + self.c1 * np.outer(self.p_c, self.p_c)
                  + self.cmu * rank_mu)
        self.sigma *= math.exp(min(1.0, (self.cs / self.ds) * (norm_ps / self.chi_n - 1)))
        if not (math.isfinite(self.sigma) and self.sigma > 0):
            raise NumericError(f"step size degenerated to {self.sigma}", state=self.state_dict())
        self._decompose()
        self.generation += 1
        return self


# -- driver ------------------------------------------------------------------

def _stages(objective):
    """Split an objective into (build, score); plain callables have no build stage."""
    if hasattr(objective, "build") and hasattr(objective, "score"):
        return objective.build, objective.score
    return (lambda x: x), objective


def _map(pool, fn, items):
    if pool is None:
        return [fn(it) for it in items]
    return list(pool.map(fn, items))


def run(objective, init_mean, init_sigma, budget=None, seed=0, maximize=False,
        popsize=None, workers=1):
    """Optimize ``objective`` with CMA-ES; returns a :class:`SearchResult`.

    ``objective`` is either a callable ``x -> float`` or an object with
    ``build(x)`` and ``score(built)``; in the latter case the two phases are
    timed separately (``elapsed_prune_s`` / ``elapsed_validate_s``). The
    initial mean is always evaluated first and competes for best-so-far.
    Candidate evaluations of one generation run on up to ``workers`` threads
    and are gathered in candidate order.
    """
    budget = budget if budget is not None else SearchBudget()
    build, score = _stages(objective)
    es = CMAES(init_mean, init_sigma, popsize=popsize, seed=seed, maximize=maximize)
    history = []
    started = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None

    def evaluate(points):
        t0 = time.perf_counter()
        built = _map(pool, build, points)
        t1 = time.perf_counter()
        fits = _map(pool, score, built)
        t2 = time.perf_counter()
        fits = np.array([float(v) for v in fits])
        if not np.all(np.isfinite(fits)):
            raise InvalidArgumentError("objective returned a non-finite fitness")
        return fits, t1 - t0, t2 - t1

    try:
        try:
            fits, tp, tv = evaluate([es.mean.copy()])
        except Exception as exc:
            raise SearchAbortedError(f"objective failed on the initial mean: {exc}",
                                     history) from exc
        es.consider(es.mean, fits[0])
        es.evaluations = 1
        history.append(GenerationRecord(0, es.best_f, float(fits[0]), es.sigma, tp, tv, 1))

        stop_reason = "max_generations"
        stale = 0
        loop_started = time.perf_counter()
        for _ in range(budget.max_generations):
            if budget.max_evaluations is not None and \
                    es.evaluations + es.popsize > budget.max_evaluations:
                stop_reason = "max_evaluations"
                break
            X = es.ask()
            try:
                fits, tp, tv = evaluate(list(X))
            except Exception as exc:
                raise SearchAbortedError(
                    f"objective failed in generation {es.generation + 1}: {exc}",
                    history) from exc
            previous = es.best_f
            try:
                es.tell(X, fits)
            except NumericError as exc:
                raise SearchAbortedError(str(exc), history) from exc
            history.append(GenerationRecord(es.generation, es.best_f, float(fits.mean()),
                                            es.sigma, tp, tv, es.evaluations))
            stale = 0 if es._better(es.best_f, previous) else stale + 1
            if budget.target_stagnation is not None and stale >= budget.target_stagnation:
                stop_reason = "stagnation"
                break
        loop_s = time.perf_counter() - loop_started
    finally:
        if pool is not None:
            pool.shutdown()

    return SearchResult(es.best_x, es.best_f, history, es.evaluations, stop_reason,
                        time.perf_counter() - started, loop_s)
