import numpy as np
import pytest
from sklearn.base import clone

from nps.bench import BenchConfig, build_zoo
from nps.exceptions import InvalidArgumentError, StructuralMismatchError, TrainingError
from nps.harness import (
    AccuracyEvaluator,
    MeanEvaluator,
    TinyMLPClassifier,
    TinyModelSpec,
    accuracy_evaluator,
    finetune,
    forward,
    init_checkpoint,
    load_task_data,
    loss_and_grad,
    make_tasks,
    save_task_data,
    train,
)
from nps.params import Checkpoint, diff


def naive_forward(ckpt, X, activation):
    # independent oracle: explicit per-sample, per-unit loops over named tensors
    t = ckpt.tensors()
    n_layers = len(t) // 2
    out = []
    for x in X.astype(np.float64):
        h = list(x)
        for i in range(n_layers):
            W, b = t[f"fc{i}.weight"], t[f"fc{i}.bias"]
            z = [sum(h[a] * float(W[a, j]) for a in range(len(h))) + float(b[j])
                 for j in range(W.shape[1])]
            if i < n_layers - 1:
                z = [np.tanh(v) if activation == "tanh" else max(v, 0.0) for v in z]
            h = z
        out.append(h)
    return np.array(out)


def test_spec_parameter_count():
    spec = TinyModelSpec((32, 32, 32, 4))
    assert spec.n_params == 32 * 32 + 32 + 32 * 32 + 32 + 32 * 4 + 4
    assert len(init_checkpoint(spec, 0)) == spec.n_params
    assert TinyModelSpec.from_checkpoint(init_checkpoint(spec)).layer_widths == (32, 32, 32, 4)
    with pytest.raises(InvalidArgumentError):
        TinyModelSpec((3,))
    with pytest.raises(InvalidArgumentError):
        TinyModelSpec((3, 2), "gelu")
    with pytest.raises(StructuralMismatchError):
        TinyModelSpec.from_checkpoint(Checkpoint.from_arrays([("a", np.zeros(3))]))


@pytest.mark.parametrize("activation", ["tanh", "relu"])
def test_forward_matches_naive_oracle(rng, activation):
    spec = TinyModelSpec((5, 7, 6, 3), activation)
    ck = init_checkpoint(spec, seed=2)
    ck = ck.with_values(ck.values + rng.standard_normal(len(ck)).astype(np.float32) * 0.1)
    X = rng.standard_normal((9, 5)).astype(np.float32)
    assert np.allclose(forward(ck.values, X, spec), naive_forward(ck, X, activation), atol=1e-5)


def test_gradient_check():
    rng = np.random.default_rng(0)
    spec = TinyModelSpec((6, 16, 12, 4), "tanh")
    values = init_checkpoint(spec, seed=1).values.astype(np.float64)
    X = rng.standard_normal((40, 6))
    y = rng.integers(0, 4, 40)
    _, grad = loss_and_grad(values, X, y, spec)
    h = 1e-3
    coords = rng.choice(len(values), 100, replace=False)
    for d in coords:
        up, down = values.copy(), values.copy()
        up[d] += h
        down[d] -= h
        numeric = (loss_and_grad(up, X, y, spec)[0] - loss_and_grad(down, X, y, spec)[0]) / (2 * h)
        assert abs(numeric - grad[d]) <= 1e-4 * max(abs(numeric), abs(grad[d]), 1e-3), d


def test_tasks_deterministic_and_balanced():
    a, b = make_tasks(3, base_seed=7), make_tasks(3, base_seed=7)
    for s, t in zip(a, b):
        for split in ("train", "calibration", "test"):
            Xa, ya = s.split(split)
            Xb, yb = t.split(split)
            assert np.array_equal(Xa, Xb) and np.array_equal(ya, yb)
    X, y = a[0].split("test")
    assert np.bincount(y).tolist() == [128] * 4
    assert X.dtype == np.float32 and X.shape == (512, 32)
    assert not np.array_equal(a[0].cluster_centers, a[1].cluster_centers)
    with pytest.raises(InvalidArgumentError):
        a[0].split("validation")


def test_splits_disjoint():
    t = make_tasks(1, base_seed=3)[0]
    rows = [set(map(bytes, t.split(s)[0])) for s in ("train", "calibration", "test")]
    assert not (rows[0] & rows[1]) and not (rows[0] & rows[2]) and not (rows[1] & rows[2])


def test_random_weights_at_chance():
    spec = TinyModelSpec((32, 32, 32, 4))
    tasks = make_tasks(20, base_seed=0)
    accs = [accuracy_evaluator(t, "test").evaluate(init_checkpoint(spec, seed=i))
            for i, t in enumerate(tasks)]
    assert abs(np.mean(accs) - 0.25) <= 0.05


def test_training_determinism_and_zero_steps(small_zoo):
    pre, task = small_zoo["pre"], small_zoo["tasks"][0]
    assert finetune(pre, task, 0) is pre
    a = finetune(pre, task, 20, seed=4, learning_rate=0.05)
    b = finetune(pre, task, 20, seed=4, learning_rate=0.05)
    assert a.bit_equal(b) and not a.bit_equal(pre)


def test_divergence_raises(small_zoo):
    spec = TinyModelSpec((32, 32, 32, 4), "relu")
    X, y = small_zoo["tasks"][0].split("train")
    with pytest.raises(TrainingError):
        train(init_checkpoint(spec, 0), X, y, 200, spec, learning_rate=50.0)


def test_default_finetune_accuracy():
    cfg = BenchConfig()
    zoo = build_zoo(cfg)
    accs = [ev.evaluate(ft) for ev, ft in zip(zoo.test, zoo.fine_tuned)]
    assert min(accs) >= 0.9
    assert zoo.spec.n_params == len(zoo.pre) == 21252


def test_task_vectors_are_diverse():
    sims = []
    for seed in range(10):
        zoo = build_zoo(BenchConfig(tasks=2, seed=seed, pretrain_steps=1000, finetune_steps=300))
        a, b = (diff(ft, zoo.pre).values for ft in zoo.fine_tuned)
        sims.append(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
    assert np.mean(sims) < 0.5


def test_evaluators(small_zoo):
    tasks, ft = small_zoo["tasks"], small_zoo["fts"][0]
    single = accuracy_evaluator(tasks[0], "calibration")
    X, y = tasks[0].split("calibration")
    logits = forward(ft.values, X, small_zoo["spec"])
    assert single.evaluate(ft) == np.mean(logits.argmax(axis=1) == y)
    multi = accuracy_evaluator(tasks, "calibration")
    assert isinstance(multi, MeanEvaluator)
    assert abs(multi.evaluate(ft) - np.mean([e.evaluate(ft) for e in multi.evaluators])) < 1e-12
    quarter = accuracy_evaluator(tasks[0], "calibration", fraction=0.25)
    assert quarter.X.shape[0] == 64
    with pytest.raises(InvalidArgumentError):
        accuracy_evaluator(tasks[0], "train")
    narrow = AccuracyEvaluator(np.zeros((3, 5)), np.zeros(3))
    with pytest.raises(StructuralMismatchError):
        narrow.evaluate(ft)


def test_task_data_cache(tmp_path, small_zoo):
    task = small_zoo["tasks"][1]
    path = tmp_path / "d.npsc"
    save_task_data(task, path)
    data = load_task_data(path)
    for split in ("calibration", "test"):
        X, y = task.split(split)
        assert np.array_equal(data[split][0], X) and np.array_equal(data[split][1], y)


def test_classifier_estimator(small_zoo):
    task = small_zoo["tasks"][0]
    X, y = task.split("train")
    Xt, yt = task.split("test")
    clf = TinyMLPClassifier(hidden_layer_sizes=(32,), max_steps=300, learning_rate=0.05)
    assert clone(clf).get_params() == clf.get_params()
    clf.fit(X, y)
    assert clf.score(Xt, yt) >= 0.9
    assert clf.predict_proba(Xt[:5]).sum(axis=1) == pytest.approx(np.ones(5))
    # warm start from the shared checkpoint keeps output k as class k
    warm = TinyMLPClassifier(max_steps=50, learning_rate=0.05, init_checkpoint=small_zoo["pre"])
    warm.fit(X[y < 2], y[y < 2])
    assert warm.classes_.tolist() == [0, 1, 2, 3]
    assert set(warm.predict(Xt)) <= {0, 1, 2, 3}
    with pytest.raises(InvalidArgumentError):
        TinyMLPClassifier(init_checkpoint=small_zoo["pre"]).fit(X, y + 10)
