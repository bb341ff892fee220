"""Desk-scale model zoo: Gaussian-cluster tasks, a numpy MLP, SGD training and
accuracy evaluators usable as search fitness functions.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import InvalidArgumentError, ParseError, StructuralMismatchError, TrainingError
from .params import Checkpoint, load_checkpoint, save_checkpoint
from .validation import check_positive_int

ACTIVATIONS = ("tanh", "relu")
SPLITS = ("train", "calibration", "test")


# -- tasks -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SyntheticTaskSpec:
    """A Gaussian-cluster classification task.

    Every task lives in the same input space but draws its class centers
    around its own domain offset, so fine-tuning on different tasks moves the
    weights in different directions.
    """

    task_id: str
    input_dim: int
    class_count: int
    cluster_centers: np.ndarray
    noise_sigma: float
    n_train: int
    n_calibration: int
    n_test: int
    seed: int

    def split(self, name):
        """Return ``(X, y)`` for ``name`` in train/calibration/test; balanced labels."""
        if name not in SPLITS:
            raise InvalidArgumentError(f"unknown split {name!r}; expected one of {SPLITS}")
        n = {"train": self.n_train, "calibration": self.n_calibration, "test": self.n_test}[name]
        # independent streams per split keep the splits disjoint draws
        rng = np.random.default_rng([self.seed, SPLITS.index(name)])
        y = np.arange(n) % self.class_count
        y = y[rng.permutation(n)]
        noise = rng.standard_normal((n, self.input_dim)) * self.noise_sigma
        X = self.cluster_centers[y] + noise
        return X.astype(np.float32), y.astype(np.int64)


def make_tasks(n_tasks, base_seed=0, input_dim=32, class_count=4, noise_sigma=1.0,
               class_spread=1.6, domain_spread=3.0, n_train=512, n_calibration=256,
               n_test=512):
    """Generate ``n_tasks`` Gaussian-cluster tasks with distinct layouts."""
    n_tasks = check_positive_int(n_tasks, "n_tasks")
    tasks = []
    for t in range(n_tasks):
        seed = int(np.random.SeedSequence([base_seed, t]).generate_state(1)[0])
        rng = np.random.default_rng(seed)
        domain = rng.standard_normal(input_dim) * domain_spread / math.sqrt(input_dim) * 2
        centers = domain + rng.standard_normal((class_count, input_dim)) * class_spread
        tasks.append(SyntheticTaskSpec(f"task{t}", input_dim, class_count, centers, noise_sigma,
                                       n_train, n_calibration, n_test, seed))
    return tasks


# -- model -------------------------------------------------------------------

@dataclass(frozen=True)
class TinyModelSpec:
    layer_widths: tuple = (32, 64, 64, 4)
    activation: str = "tanh"

    def __post_init__(self):
        if len(self.layer_widths) < 2:
            raise InvalidArgumentError("need at least input and output widths")
        if self.activation not in ACTIVATIONS:
            raise InvalidArgumentError(f"activation must be one of {ACTIVATIONS}")

    @property
    def n_params(self):
        w = self.layer_widths
        return sum(a * b + b for a, b in zip(w[:-1], w[1:]))

    def named_shapes(self):
        w = self.layer_widths
        for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
            yield f"fc{i}.weight", (a, b)
            yield f"fc{i}.bias", (b,)

    @classmethod
    def from_checkpoint(cls, ckpt, activation="tanh"):
        shapes = [s.shape for s in ckpt.specs]
        if len(shapes) < 2 or len(shapes) % 2:
            raise StructuralMismatchError("checkpoint is not an MLP (weight/bias pairs expected)")
        widths = [shapes[0][0]]
        for i in range(0, len(shapes), 2):
            w, b = shapes[i], shapes[i + 1]
            if len(w) != 2 or w[0] != widths[-1] or b != (w[1],):
                raise StructuralMismatchError(
                    f"layer {i // 2} has shapes {w} / {b}", tensor=ckpt.specs[i].name)
            widths.append(w[1])
        return cls(tuple(widths), activation)


def init_checkpoint(spec, seed=0):
    rng = np.random.default_rng(seed)
    arrays = []
    for name, shape in spec.named_shapes():
        if name.endswith("weight"):
            arr = rng.standard_normal(shape) / math.sqrt(shape[0])
        else:
            arr = np.zeros(shape)
        arrays.append((name, arr))
    return Checkpoint.from_arrays(arrays)


def _layers(values, widths):
    """Slice a flat parameter vector into [(W, b), ...] views."""
    out, pos = [], 0
    for a, b in zip(widths[:-1], widths[1:]):
        W = values[pos:pos + a * b].reshape(a, b)
        pos += a * b
        out.append((W, values[pos:pos + b]))
        pos += b
    return out


def _act(z, kind):
    return np.tanh(z) if kind == "tanh" else np.maximum(z, 0)


def _act_grad(a, z, kind):
    return 1 - a * a if kind == "tanh" else (z > 0).astype(a.dtype)


def forward(values, X, spec):
    """Logits of the MLP whose flat parameters are ``values``."""
    h = X
    layers = _layers(values, spec.layer_widths)
    for i, (W, b) in enumerate(layers):
        z = h @ W + b
        h = z if i == len(layers) - 1 else _act(z, spec.activation)
    return h


def loss_and_grad(values, X, y, spec):
    """Mean softmax cross-entropy and its gradient w.r.t. the flat parameters."""
    layers = _layers(values, spec.layer_widths)
    hs, zs = [X], []
    for i, (W, b) in enumerate(layers):
        z = hs[-1] @ W + b
        zs.append(z)
        hs.append(z if i == len(layers) - 1 else _act(z, spec.activation))
    logits = hs[-1]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = X.shape[0]
    loss = -logp[np.arange(n), y].mean()

    grad = np.empty_like(values)
    grads = _layers(grad, spec.layer_widths)
    delta = np.exp(logp)
    delta[np.arange(n), y] -= 1
    delta /= n
    for i in range(len(layers) - 1, -1, -1):
        gW, gb = grads[i]
        gW[...] = hs[i].T @ delta
        gb[...] = delta.sum(axis=0)
        if i:
            delta = (delta @ layers[i][0].T) * _act_grad(hs[i], zs[i - 1], spec.activation)
    return float(loss), grad


def train(ckpt, X, y, steps, spec=None, learning_rate=0.1, batch_size=64, seed=0):
    """Plain minibatch SGD with a fixed learning rate; deterministic per seed."""
    spec = spec or TinyModelSpec.from_checkpoint(ckpt)
    steps = check_positive_int(steps, "steps", minimum=0)
    if steps == 0:
        return ckpt
    values = np.array(ckpt.values, dtype=np.float32)
    rng = np.random.default_rng(seed)
    n = X.shape[0]
    lr = np.float32(learning_rate)
    order, pos = rng.permutation(n), 0
    for step in range(steps):
        if pos + batch_size > n:
            order, pos = rng.permutation(n), 0
        idx = order[pos:pos + batch_size]
        pos += batch_size
        with np.errstate(over="ignore", invalid="ignore"):
            loss, grad = loss_and_grad(values, X[idx], y[idx], spec)
        if not math.isfinite(loss):
            raise TrainingError(f"loss became non-finite at step {step}")
        values -= lr * grad
    return ckpt.with_values(values)


def _stack(tasks, split):
    Xs, ys = zip(*(t.split(split) for t in tasks))
    return np.concatenate(Xs), np.concatenate(ys)


def pretrain(spec, tasks, steps, seed=0, learning_rate=0.1, batch_size=64):
    """Train a fresh model on the union of the tasks' training splits."""
    X, y = _stack(tasks, "train")
    return train(init_checkpoint(spec, seed), X, y, steps, spec, learning_rate, batch_size, seed)


def finetune(pre, task, steps, seed=0, learning_rate=0.1, batch_size=64, activation="tanh"):
    spec = TinyModelSpec.from_checkpoint(pre, activation)
    X, y = task.split("train")
    return train(pre, X, y, steps, spec, learning_rate, batch_size, seed)


# -- evaluators --------------------------------------------------------------

class AccuracyEvaluator:
    """Classification accuracy of a checkpoint on fixed data; thread-safe, pure."""

    def __init__(self, X, y, activation="tanh", name=""):
        self.X = np.ascontiguousarray(X, dtype=np.float32)
        self.y = np.asarray(y, dtype=np.int64)
        self.activation = activation
        self.name = name

    def evaluate(self, ckpt):
        spec = TinyModelSpec.from_checkpoint(ckpt, self.activation)
        if spec.layer_widths[0] != self.X.shape[1]:
            raise StructuralMismatchError(
                f"model expects {spec.layer_widths[0]} inputs, data has {self.X.shape[1]}")
        logits = forward(ckpt.values, self.X, spec)
        return float(np.mean(np.argmax(logits, axis=1) == self.y))

    __call__ = evaluate


class MeanEvaluator:
    """Unweighted mean of several evaluators."""

    def __init__(self, evaluators):
        self.evaluators = list(evaluators)
        if not self.evaluators:
            raise InvalidArgumentError("MeanEvaluator needs at least one evaluator")

    def per_task(self, ckpt):
        return [e.evaluate(ckpt) for e in self.evaluators]

    def evaluate(self, ckpt):
        return float(np.mean(self.per_task(ckpt)))

    __call__ = evaluate


def accuracy_evaluator(tasks, split="calibration", fraction=1.0, activation="tanh"):
    """Evaluator for one task or the mean over several.

    ``fraction`` keeps a leading share of the split (calibration-volume
    ablation: 1/4, 1/2, 1).
    """
    if split not in ("calibration", "test"):
        raise InvalidArgumentError(f"split must be 'calibration' or 'test', got {split!r}")
    if not (0 < fraction <= 1):
        raise InvalidArgumentError(f"fraction must lie in (0, 1], got {fraction}")
    single = isinstance(tasks, SyntheticTaskSpec)
    evs = []
    for t in ([tasks] if single else tasks):
        X, y = t.split(split)
        k = max(1, int(round(fraction * len(y))))
        evs.append(AccuracyEvaluator(X[:k], y[:k], activation, t.task_id))
    return evs[0] if single else MeanEvaluator(evs)


def save_task_data(task, path):
    """Cache a task's calibration and test splits in the checkpoint container."""
    arrays = []
    for split in ("calibration", "test"):
        X, y = task.split(split)
        arrays += [(f"X_{split}", X), (f"y_{split}", y.astype(np.float32))]
    save_checkpoint(Checkpoint.from_arrays(arrays), path)


def load_task_data(path):
    """Inverse of :func:`save_task_data`: ``{split: (X, y)}``."""
    ckpt = load_checkpoint(path)
    out = {}
    for split in ("calibration", "test"):
        try:
            X, y = ckpt.tensor(f"X_{split}"), ckpt.tensor(f"y_{split}")
        except KeyError:
            raise ParseError(f"{path}: not a dataset container (missing {split} split)") from None
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ParseError(f"{path}: malformed {split} split")
        out[split] = (np.array(X), y.astype(np.int64))
    return out


# -- estimator ---------------------------------------------------------------

class TinyMLPClassifier(BaseEstimator, ClassifierMixin):
    """Small tanh/ReLU MLP trained with plain SGD, stored as a :class:`Checkpoint`.

    ``init_checkpoint`` warm-starts training (fine-tuning); its layer widths
    override ``hidden_layer_sizes``.
    """

    def __init__(self, hidden_layer_sizes=(64, 64), activation="tanh", learning_rate=0.1,
                 max_steps=500, batch_size=64, random_state=0, init_checkpoint=None):
        self.hidden_layer_sizes = hidden_layer_sizes
        self.activation = activation
        self.learning_rate = learning_rate
        self.max_steps = max_steps
        self.batch_size = batch_size
        self.random_state = random_state
        self.init_checkpoint = init_checkpoint

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float32)
        seed = 0 if self.random_state is None else int(self.random_state)
        if self.init_checkpoint is not None:
            # warm start: output unit k already means class k
            spec = TinyModelSpec.from_checkpoint(self.init_checkpoint, self.activation)
            start = self.init_checkpoint
            labels = unique_labels(y)
            if not np.all(np.isin(labels, np.arange(spec.layer_widths[-1]))):
                raise InvalidArgumentError(
                    f"warm-start labels must be integers in [0, {spec.layer_widths[-1]})")
            self.classes_ = np.arange(spec.layer_widths[-1])
        else:
            self.classes_ = unique_labels(y)
            widths = (X.shape[1], *self.hidden_layer_sizes, len(self.classes_))
            spec = TinyModelSpec(tuple(widths), self.activation)
            start = init_checkpoint(spec, seed)
        y_idx = np.searchsorted(self.classes_, y)
        if spec.layer_widths[0] != X.shape[1] or spec.layer_widths[-1] < len(self.classes_):
            raise StructuralMismatchError(
                f"model widths {spec.layer_widths} do not fit data with {X.shape[1]} "
                f"features and {len(self.classes_)} classes")
        self.model_spec_ = spec
        self.checkpoint_ = train(start, X, y_idx, self.max_steps, spec, self.learning_rate,
                                 self.batch_size, seed)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "checkpoint_")
        X = check_array(X, dtype=np.float32)
        return forward(self.checkpoint_.values, X, self.model_spec_)

    def predict_proba(self, X):
        z = self.decision_function(X)
        z = np.exp(z - z.max(axis=1, keepdims=True))
        return z / z.sum(axis=1, keepdims=True)

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
