import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.base import clone

from nps.cmaes import SearchBudget
from nps.exceptions import InvalidArgumentError, SearchAbortedError, StructuralMismatchError
from nps.params import Checkpoint, TaskVector, apply, diff
from nps.pruning import Mask, NPSPruner, PrunedTaskVector, nps_search, prune, top_r_mask
from nps.subspace import partition, reweight
from nps.validation import kept_count


def tv_of(values):
    values = np.asarray(values, dtype=np.float64)
    return TaskVector(Checkpoint.from_arrays([("t", np.zeros(len(values)))]).specs, values)


def brute_mask(values, r):
    D = len(values)
    k = math.ceil(round(r * D, 9))
    keep = sorted(range(D), key=lambda d: (-abs(values[d]), d))[:k]
    return [1 if d in keep else 0 for d in range(D)]


def test_top_r_mask_examples():
    assert top_r_mask(tv_of([0.5, -0.2, 0.1, -0.9]), 0.5).to_bool().tolist() == [1, 0, 0, 1]
    assert top_r_mask(tv_of([3, 3, 3, 3]), 0.5).to_bool().tolist() == [1, 1, 0, 0]
    assert top_r_mask(tv_of([0.1, 0, -2]), 1.0).kept == 3


def test_kept_count_is_ceiling_with_snapping():
    assert kept_count(0.05, 21252) == 1063
    assert kept_count(0.07, 100) == 7
    assert kept_count(0.1, 3) == 1
    assert kept_count(1.0, 5) == 5


@pytest.mark.parametrize("r", [0.0, -0.1, 1.01, float("nan"), True])
def test_invalid_ratio(r):
    with pytest.raises(InvalidArgumentError):
        top_r_mask(tv_of([1.0, 2.0]), r)


def test_empty_vector_rejected():
    with pytest.raises(InvalidArgumentError):
        top_r_mask(tv_of([]), 0.5)


def test_mask_packing_lsb_first():
    m = Mask.from_bool([1, 0, 0, 0, 0, 0, 0, 0, 0, 1])
    assert m.bits.tolist() == [1, 2] and m.kept == 2 and m.size == 10
    assert m.indices().tolist() == [0, 9]
    assert Mask.from_indices([0, 9], 10) == m and hash(Mask.from_indices([0, 9], 10)) == hash(m)
    assert Mask.from_bool([1] * 13).kept == 13


def test_prune_identity_cases(rng):
    pre = Checkpoint.from_arrays([("a", rng.standard_normal(50))])
    tv = TaskVector(pre.specs, rng.standard_normal(50))
    _, ck = prune(pre, tv, 1.0)
    assert ck.bit_equal(apply(pre, tv, 1.0))
    _, ck = prune(pre, TaskVector(pre.specs, np.zeros(50)), 0.3)
    assert ck.bit_equal(pre)


def test_prune_random_200_against_dense_oracle(rng):
    pre = Checkpoint.from_arrays([("a", rng.standard_normal((10, 20)))])
    tv = TaskVector(pre.specs, rng.standard_normal(200))
    ptv, ck = prune(pre, tv, 0.1)
    assert ptv.mask.kept == 20 and len(ptv.values) == 20
    m = np.array(brute_mask(tv.values.tolist(), 0.1), dtype=np.float64)
    dense = m * tv.values
    assert np.array_equal(ptv.to_dense().values, dense)
    assert np.array_equal(ck.values, (pre.values.astype(np.float64) + dense).astype(np.float32))
    assert ptv.reconstruct(pre).bit_equal(ck)


def test_prune_mismatch():
    pre = Checkpoint.from_arrays([("a", np.zeros(3))])
    with pytest.raises(StructuralMismatchError):
        prune(pre, tv_of([1.0, 2.0]), 0.5)


def test_pruned_vector_rejects_wrong_length():
    mask = Mask.from_bool([1, 0, 1])
    with pytest.raises(InvalidArgumentError):
        PrunedTaskVector((), mask, np.zeros(1), 0.5)


vectors = st.lists(st.integers(-6, 6).map(lambda v: v / 2), min_size=1, max_size=300)
ratios = st.sampled_from([0.04, 0.05, 0.1, 0.2, 0.5, 1.0, 0.33])


@given(vectors, ratios)
def test_property_mask_matches_brute_force(values, r):
    m = top_r_mask(tv_of(values), r)
    assert m.to_bool().astype(int).tolist() == brute_mask(values, r)
    assert m.kept == kept_count(r, len(values))


@given(st.lists(st.floats(0.01, 10).map(lambda x: round(x, 2)), min_size=1, max_size=100), ratios)
def test_property_mask_idempotent(mags, r):
    tv = tv_of(mags)
    m = top_r_mask(tv, r)
    masked = tv_of(m.to_bool() * tv.values)
    assert top_r_mask(masked, r) == m


@given(vectors, ratios, st.integers(0, 1000))
def test_property_sparse_dense_equivalence(values, r, seed):
    pre = Checkpoint.from_arrays([("t", np.random.default_rng(seed).standard_normal(len(values)))])
    tv = TaskVector(pre.specs, values)
    ptv, ck = prune(pre, tv, r)
    assert np.array_equal(ptv.to_dense().values, ptv.mask.to_bool() * tv.values)
    assert ptv.reconstruct(pre).bit_equal(ck)


# -- search ------------------------------------------------------------------

def test_zero_generations_equals_magnitude_pruning(small_zoo):
    pre, ft, ev = small_zoo["pre"], small_zoo["fts"][0], small_zoo["cal"][0]
    out = nps_search(pre, ft, ev, 8, 0.05, SearchBudget(max_generations=0))
    ptv, ck = prune(pre, diff(ft, pre), 0.05)
    assert out.checkpoint.bit_equal(ck) and out.pruned.mask == ptv.mask
    assert out.weights.tolist() == [1.0] * 8
    assert out.fitness == out.initial_fitness == ev.evaluate(ck)


def test_single_subspace_mask(small_zoo):
    pre, ft, ev = small_zoo["pre"], small_zoo["fts"][1], small_zoo["cal"][1]
    out = nps_search(pre, ft, ev, 1, 0.1, SearchBudget(max_generations=0))
    assert out.pruned.mask == top_r_mask(diff(ft, pre), 0.1)


def test_search_dominates_magnitude_pruning(small_zoo):
    pre = small_zoo["pre"]
    for ft, ev in zip(small_zoo["fts"], small_zoo["cal"]):
        out = nps_search(pre, ft, ev, 8, 0.05, SearchBudget(30, 10), seed=3)
        magnitude = ev.evaluate(prune(pre, diff(ft, pre), 0.05)[1])
        assert out.fitness >= magnitude == out.initial_fitness
        assert out.fitness >= out.history[0].best_fitness
        assert ev.evaluate(out.checkpoint) == out.fitness
        best = [h.best_fitness for h in out.history]
        assert best == sorted(best)


def test_search_result_is_reweighted_prune(small_zoo):
    pre, ft, ev = small_zoo["pre"], small_zoo["fts"][0], small_zoo["cal"][0]
    out = nps_search(pre, ft, ev, 4, 0.05, SearchBudget(5, None), seed=1)
    tv = diff(ft, pre)
    expected_ptv, expected = prune(pre, reweight(tv, partition(tv, 4), out.weights), 0.05)
    assert out.checkpoint.bit_equal(expected)
    assert np.array_equal(out.pruned.values, expected_ptv.values)
    assert out.pruned.mask.kept == kept_count(0.05, len(pre))
    pruned, ck, history = out
    assert ck is out.checkpoint and history is out.history


def test_search_deterministic_across_workers(small_zoo):
    pre, ft, ev = small_zoo["pre"], small_zoo["fts"][0], small_zoo["cal"][0]
    a = nps_search(pre, ft, ev, 8, 0.05, SearchBudget(6, None), seed=5)
    b = nps_search(pre, ft, ev, 8, 0.05, SearchBudget(6, None), seed=5, workers=4)
    assert a.checkpoint.bit_equal(b.checkpoint)
    assert np.array_equal(a.weights, b.weights)


def test_search_aborts_on_evaluator_failure(small_zoo):
    pre, ft = small_zoo["pre"], small_zoo["fts"][0]
    seen = []

    def broken(ck):
        seen.append(1)
        if len(seen) > 3:
            raise RuntimeError("bad batch")
        return 0.5

    with pytest.raises(SearchAbortedError) as info:
        nps_search(pre, ft, broken, 8, 0.05, SearchBudget(5, None))
    assert info.value.history


def test_estimator_api(small_zoo):
    pre, ft, ev = small_zoo["pre"], small_zoo["fts"][1], small_zoo["cal"][1]
    est = NPSPruner(n_subspaces=4, ratio=0.1, max_generations=3, random_state=2)
    assert est.get_params()["n_subspaces"] == 4
    assert clone(est).get_params() == est.get_params()
    ck = est.fit_transform(ft, pre, ev)
    assert est.fitness_ >= est.initial_fitness_
    assert est.weights_.shape == (4,) and est.n_features_in_ == len(pre)
    assert ck.bit_equal(est.pruned_.reconstruct(pre))
    est.set_params(ratio=1.0, max_generations=0)
    assert est.fit(ft, pre, ev).transform().bit_equal(ft)
