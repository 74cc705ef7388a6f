import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctgkit.core import InputError
from ctgkit.trees import (
    ForestModel,
    TreeParams,
    fit_extra_trees,
    fit_random_forest,
    fit_tree,
    forest_params,
)
from oracles import best_stump, exact_gini_gain, impurity

SIX_X = np.array([[1.0], [2.0], [3.0], [10.0], [11.0], [12.0]])
SIX_Y = np.array([0, 0, 0, 1, 1, 1])


def unique_rows(n_rows, n_cols):
    return arrays(np.float64, (n_rows, n_cols), elements=st.floats(-50, 50, allow_nan=False),
                  unique=True)


@st.composite
def small_problem(draw, max_rows=30):
    n = draw(st.integers(2, max_rows))
    d = draw(st.integers(1, 4))
    X = draw(arrays(np.float64, (n, d), elements=st.integers(-6, 6).map(float)))
    y = draw(arrays(np.int64, n, elements=st.integers(0, 2)))
    return X, y


def test_six_point_root_split():
    tree = fit_tree(SIX_X, SIX_Y)
    assert tree.feature[0] == 0
    assert 3.0 < tree.threshold[0] < 10.0
    gain, t = best_stump(SIX_X.ravel().tolist(), SIX_Y.tolist(), 2)
    assert tree.threshold[0] == t and gain == exact_gini_gain([3, 3], [3, 0], [0, 3])
    assert np.array_equal(tree.predict(SIX_X), SIX_Y)


def test_single_class_is_one_leaf():
    tree = fit_tree(SIX_X, np.full(6, 2), n_classes=3)
    assert tree.n_nodes == 1 and tree.predict(SIX_X).tolist() == [2] * 6


def test_max_depth_zero_majority_with_low_tie():
    tree = fit_tree(SIX_X, SIX_Y, TreeParams(max_depth=0))
    assert tree.n_nodes == 1
    assert tree.counts[0].tolist() == [3, 3]
    assert tree.predict([[100.0]]).tolist() == [0]


def test_threshold_value_routes_left():
    tree = fit_tree(SIX_X, SIX_Y, TreeParams(max_depth=1))
    t = tree.threshold[0]
    assert tree.apply([[t]])[0] == tree.left[0]
    assert tree.apply([[np.nextafter(t, np.inf)]])[0] == tree.right[0]


def test_tie_break_lowest_feature():
    # both columns separate the classes perfectly; column 0 must win
    X = np.hstack([SIX_X, SIX_X[::-1] * -1])
    tree = fit_tree(X, SIX_Y)
    assert tree.feature[0] == 0


def test_tie_break_lowest_threshold():
    # thresholds 1.5 and 3.5 both isolate one class-1 row out of the middle pure block
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0]])
    y = np.array([1, 0, 0, 0, 1])
    tree = fit_tree(X, y, TreeParams(max_depth=1))
    assert tree.threshold[0] == 0.5


def test_errors():
    with pytest.raises(InputError):
        fit_tree(np.empty((0, 2)), np.empty(0, dtype=np.int64))
    tree = fit_tree(SIX_X, SIX_Y)
    with pytest.raises(InputError, match="dimension mismatch"):
        tree.predict(np.ones((1, 2)))
    with pytest.raises(InputError):
        TreeParams(min_samples_split=1)
    with pytest.raises(InputError):
        TreeParams(criterion="mse")


@given(small_problem(), st.sampled_from(["gini", "entropy"]))
def test_accepted_splits_have_nonnegative_gain(problem, criterion):
    X, y = problem
    tree = fit_tree(X, y, TreeParams(criterion=criterion), n_classes=3)
    for node in range(tree.n_nodes):
        counts = tree.counts[node].tolist()
        assert 0.0 <= impurity(counts, "gini") <= 1 - 1 / 3 + 1e-15
        if tree.feature[node] < 0:
            continue
        left, right = tree.counts[tree.left[node]].tolist(), tree.counts[tree.right[node]].tolist()
        assert [a + b for a, b in zip(left, right)] == counts
        if criterion == "gini":
            exact = exact_gini_gain(counts, left, right)
            assert exact >= 0 and abs(float(exact) - tree.gain[node]) <= 1e-12
        else:
            n = sum(counts)
            g = impurity(counts, "entropy") - sum(left) / n * impurity(left, "entropy") \
                - sum(right) / n * impurity(right, "entropy")
            assert g >= -1e-12 and abs(g - tree.gain[node]) <= 1e-9


@given(small_problem(), st.integers(1, 3))
def test_leaf_counts_respect_min_samples_leaf(problem, min_leaf):
    X, y = problem
    tree = fit_tree(X, y, TreeParams(min_samples_leaf=min_leaf, min_samples_split=2 * min_leaf),
                    n_classes=3)
    leaves = tree.feature < 0
    assert tree.counts[leaves].sum(axis=1).min() >= min(min_leaf, X.shape[0])


@given(st.integers(2, 25).flatmap(lambda n: st.tuples(unique_rows(n, 3),
                                                      arrays(np.int64, n, elements=st.integers(0, 2)))))
def test_unlimited_depth_memorizes_unique_rows(data):
    X, y = data
    assert np.array_equal(fit_tree(X, y, n_classes=3).predict(X), y)
    et = fit_extra_trees(X, y, forest_params(3, kind="extra_trees", max_features="all"), seed=1,
                         n_classes=3)
    assert np.array_equal(et.trees[0].predict(X), y)


@given(small_problem(), st.sampled_from([np.exp, np.cbrt, lambda v: 3 * v - 7, np.arctan]))
def test_monotone_transform_keeps_training_partition(problem, fn):
    # A strictly increasing map preserves the order of values, so every candidate
    # partition (and its gain) is unchanged; ties keep resolving to the same split.
    X, y = problem
    Z = X.copy()
    Z[:, 0] = fn(X[:, 0])
    assume(len(np.unique(Z[:, 0])) == len(np.unique(X[:, 0])))
    a, b = fit_tree(X, y, n_classes=3), fit_tree(Z, y, n_classes=3)
    assert np.array_equal(a.feature, b.feature)
    assert np.array_equal(a.counts, b.counts)
    assert np.array_equal(a.predict(X), b.predict(Z))


def test_one_tree_forest_matches_tree(surrogate):
    X, y = surrogate.X[:300], surrogate.y[:300]
    params = forest_params(1, bootstrap=False, max_features="all", splitter="best")
    rf = fit_random_forest(X, y, params, seed=5, n_classes=3)
    tree = fit_tree(X, y, params.tree, seed=5, n_classes=3)
    assert np.array_equal(rf.predict(X), tree.predict(X))
    assert np.array_equal(rf.trees[0].threshold, tree.threshold)


def test_forest_deterministic_and_schedule_independent(surrogate):
    X, y = surrogate.X[:400], surrogate.y[:400]
    params = forest_params(8, kind="extra_trees")
    a = fit_extra_trees(X, y, params, seed=3, n_jobs=1)
    b = fit_extra_trees(X, y, params, seed=3, n_jobs=4)
    assert a.to_payload() == b.to_payload()
    c = fit_random_forest(X, y, forest_params(8), seed=3)
    d = fit_random_forest(X, y, forest_params(8), seed=3)
    assert c.to_payload() == d.to_payload()
    assert fit_random_forest(X, y, forest_params(8), seed=4).to_payload() != c.to_payload()


def test_forest_vote_order_invariant(surrogate):
    X, y = surrogate.X[:300], surrogate.y[:300]
    rf = fit_random_forest(X, y, forest_params(7), seed=2)
    flipped = ForestModel(rf.trees[::-1], rf.n_features, rf.n_classes, rf.params, rf.kind)
    assert np.array_equal(rf.predict(X), flipped.predict(X))


def test_forest_vote_tie_goes_low():
    X = np.array([[0.0], [1.0]])
    t0 = fit_tree(X, [0, 0], n_classes=3)
    t2 = fit_tree(X, [2, 2], n_classes=3)
    forest = ForestModel((t2, t0), 1, 3, forest_params(2))
    assert forest.predict(X).tolist() == [0, 0]
    t1 = fit_tree(X, [1, 1], n_classes=3)
    forest = ForestModel((t1, t2, t1), 1, 3, forest_params(3))
    assert forest.predict(X).tolist() == [1, 1]


def test_extra_trees_single_class_all_leaves():
    et = fit_extra_trees(SIX_X, np.zeros(6, dtype=np.int64), forest_params(5, kind="extra_trees"))
    assert all(t.n_nodes == 1 for t in et.trees)


def test_random_splitter_threshold_inside_range():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(60, 2))
    y = (X[:, 0] > 0).astype(np.int64)
    tree = fit_tree(X, y, TreeParams(splitter="random"), seed=9)
    assert X[:, 0].min() <= tree.threshold[0] < X[:, 0].max() or tree.feature[0] == 1
    assert fit_tree(X, y, TreeParams(splitter="random"), seed=9).threshold.tolist() == tree.threshold.tolist()


def test_payload_round_trip(surrogate):
    X, y = surrogate.X[:200], surrogate.y[:200]
    rf = fit_random_forest(X, y, forest_params(3), seed=1)
    again = ForestModel.from_payload(rf.to_payload(), "random_forest")
    assert np.array_equal(again.predict(X), rf.predict(X))


@pytest.mark.slow
def test_random_forest_training_accuracy(surrogate):
    from ctgkit.preprocess import PipelineConfig, run_pipeline

    prep = run_pipeline(PipelineConfig(master_seed=0), surrogate)
    rf = fit_random_forest(prep.train.X, prep.train.y, forest_params(300), seed=0)
    assert np.mean(rf.predict(prep.train.X) == prep.train.y) >= 0.99
