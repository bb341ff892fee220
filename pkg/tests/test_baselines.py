import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nps.baselines import (
    TASK_ARITHMETIC_GRID,
    TIES_GRID,
    DareConfig,
    dare,
    task_arithmetic,
    ties_merge,
    weight_average,
)
from nps.exceptions import InvalidArgumentError, StructuralMismatchError
from nps.params import Checkpoint, TaskVector
from nps.pruning import prune


def ck(*values):
    return Checkpoint.from_arrays([("p", np.array(values, dtype=np.float32))])


def tv(base, *values):
    return TaskVector(base.specs, np.array(values, dtype=np.float64))


def test_grids():
    assert TASK_ARITHMETIC_GRID[0] == 0.2 and TASK_ARITHMETIC_GRID[-1] == 1.5
    assert len(TASK_ARITHMETIC_GRID) == 14
    assert TIES_GRID[0] == 0.8 and TIES_GRID[-1] == 2.5 and len(TIES_GRID) == 18


def test_weight_average_examples(rng):
    assert weight_average([ck(0, 2), ck(2, 0)]).values.tolist() == [1, 1]
    c = ck(0.1, -3.3, 7.0)
    assert weight_average([c, c, c]).bit_equal(c)
    cks = [Checkpoint.from_arrays([("a", rng.standard_normal(12))]) for _ in range(5)]
    naive = []
    for d in range(12):
        total = 0.0
        for c in cks:
            total += float(c.values[d])
        naive.append(np.float32(total / 5))
    assert np.allclose(weight_average(cks).values, naive, rtol=0, atol=1e-7)


def test_weight_average_errors():
    with pytest.raises(InvalidArgumentError):
        weight_average([])
    with pytest.raises(StructuralMismatchError):
        weight_average([ck(1), ck(1, 2)])


def test_task_arithmetic_examples():
    pre = ck(0, 0)
    assert task_arithmetic(pre, [tv(pre, 1, 0), tv(pre, 0, 1)], 0.5).values.tolist() == [0.5, 0.5]
    base = ck(1.5, -2.0)
    assert task_arithmetic(base, [tv(base, 3, 4)], 0).bit_equal(base)
    ft = ck(2.0, 0.25)
    assert task_arithmetic(base, [tv(base, 0.5, 2.25)], 1).bit_equal(ft)


def test_ties_sign_election():
    pre = ck(0)
    assert ties_merge(pre, [tv(pre, 2), tv(pre, -1)], 1.0, 1.0).values.tolist() == [2.0]
    # negative mass wins: mean of the agreeing entries
    assert ties_merge(pre, [tv(pre, 1), tv(pre, -2), tv(pre, -4)], 1.0, 1.0).values.tolist() == [-3.0]


def test_ties_trim_then_merge():
    pre = ck(0, 0, 0, 0)
    a, b = tv(pre, 4, 0.1, -3, 0.2), tv(pre, 0.3, 5, 0.1, -2)
    # top-2 per task: a -> {0, 2}, b -> {1, 3}
    out = ties_merge(pre, [a, b], 0.5, 2.0)
    assert out.values.tolist() == [8, 10, -6, -4]


def test_ties_identical_tasks_equal_trimmed_task_arithmetic(rng):
    pre = Checkpoint.from_arrays([("a", rng.standard_normal(40))])
    t = TaskVector(pre.specs, rng.standard_normal(40))
    trimmed = prune(pre, t, 0.25)[0].to_dense()
    for lam in (0.8, 1.7):
        merged = ties_merge(pre, [t, t, t], 0.25, lam)
        assert merged.bit_equal(task_arithmetic(pre, [trimmed], lam))


@given(st.integers(0, 10_000), st.floats(0.1, 2))
def test_property_single_task_ties_is_task_arithmetic(seed, lam):
    rng = np.random.default_rng(seed)
    pre = Checkpoint.from_arrays([("a", rng.standard_normal(25))])
    t = TaskVector(pre.specs, rng.standard_normal(25))
    assert ties_merge(pre, [t], 1.0, lam).bit_equal(task_arithmetic(pre, [t], lam))


def test_dare_identity_and_determinism(rng):
    base = Checkpoint.from_arrays([("a", np.zeros(100))])
    t = TaskVector(base.specs, rng.standard_normal(100))
    assert dare(t, DareConfig(0.0)).bit_equal(t)
    a, b = dare(t, DareConfig(0.7, seed=3)), dare(t, DareConfig(0.7, seed=3))
    assert a.bit_equal(b)
    assert not a.bit_equal(dare(t, DareConfig(0.7, seed=4)))
    kept = a.values != 0
    assert np.allclose(a.values[kept], t.values[kept] / 0.3)


@pytest.mark.parametrize("p", [1.0, 1.5, -0.1])
def test_dare_rejects_bad_p(p):
    with pytest.raises(InvalidArgumentError):
        DareConfig(p)


def test_dare_needs_config():
    base = ck(0.0)
    with pytest.raises(InvalidArgumentError):
        dare(tv(base, 1.0), 0.5)


def test_dare_unbiased_small():
    values = np.array([0.8, -1.7, 0.05])
    trials = 20_000
    base = Checkpoint.from_arrays([("a", np.zeros(values.size * trials))])
    out = dare(TaskVector(base.specs, np.repeat(values, trials)), DareConfig(0.5, seed=1))
    means = out.values.reshape(values.size, trials).mean(axis=1)
    sigma = np.abs(values) * np.sqrt(0.5 / 0.5)
    assert np.all(np.abs(means - values) <= 4 * sigma / np.sqrt(trials))
