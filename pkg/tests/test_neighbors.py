import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctgkit.core import InputError
from ctgkit.neighbors import KnnModel, KnnParams, fit_knn, pairwise_distance, predict_knn
from oracles import naive_knn

LINE_X = np.array([[0.0], [1.0], [2.0], [10.0]])
LINE_Y = np.array([0, 0, 0, 1])


def test_hand_distance_table():
    model = fit_knn(LINE_X, LINE_Y, KnnParams(k=3))
    idx, dist = model.neighbors([[1.2]])
    assert idx[0].tolist() == [1, 2, 0]
    assert np.allclose(dist[0], [0.2, 0.8, 1.2])
    assert predict_knn(model, [[1.2]]).tolist() == [0]


def test_fit_stores_inputs_verbatim():
    model = fit_knn(LINE_X, LINE_Y, KnnParams(k=2))
    assert np.array_equal(model.X_train, LINE_X) and np.array_equal(model.y_train, LINE_Y)


def test_k_equal_n_predicts_global_majority():
    model = fit_knn(LINE_X, LINE_Y, KnnParams(k=4))
    assert predict_knn(model, [[-50.0], [10.0], [1e6]]).tolist() == [0, 0, 0]


def test_k_above_n_rejected():
    with pytest.raises(InputError):
        fit_knn(LINE_X, LINE_Y, KnnParams(k=5))
    with pytest.raises(InputError):
        KnnParams(k=0)
    with pytest.raises(InputError):
        KnnParams(metric="cosine")


def test_exact_match_k1():
    model = fit_knn(LINE_X, LINE_Y, KnnParams(k=1))
    assert predict_knn(model, LINE_X).tolist() == LINE_Y.tolist()


def test_vote_tie_goes_to_lowest_class():
    X = np.array([[0.0], [2.0]])
    model = fit_knn(X, [2, 0], KnnParams(k=2), n_classes=3)
    assert predict_knn(model, [[1.0], [0.1]]).tolist() == [0, 0]


def test_distance_tie_broken_by_row_index():
    X = np.array([[1.0], [-1.0], [1.0]])
    model = fit_knn(X, [2, 1, 0], KnnParams(k=1), n_classes=3)
    assert predict_knn(model, [[0.0]]).tolist() == [2]
    idx, _ = model.neighbors([[0.0]])
    assert idx[0].tolist() == [0]


def test_inverse_distance_exact_match_rule():
    X = np.array([[0.0], [0.0], [0.1], [0.1], [0.1]])
    model = fit_knn(X, [1, 0, 2, 2, 2], KnnParams(k=5, weights="inverse_distance"), n_classes=3)
    # two exact matches: the lowest row wins even though class 2 dominates nearby
    assert predict_knn(model, [[0.0]]).tolist() == [1]


def test_dimension_mismatch():
    with pytest.raises(InputError, match="dimension mismatch"):
        fit_knn(LINE_X, LINE_Y, KnnParams(k=2)).predict(np.ones((1, 2)))


@given(st.integers(2, 30).flatmap(lambda n: st.tuples(
    arrays(np.float64, (n, 2), elements=st.floats(-20, 20, allow_nan=False), unique=True),
    arrays(np.int64, n, elements=st.integers(0, 2)))))
def test_self_consistency_unique_rows(data):
    X, y = data
    if len({tuple(r) for r in X}) < len(X):
        return
    assert np.array_equal(fit_knn(X, y, KnnParams(k=1), n_classes=3).predict(X), y)


@given(arrays(np.float64, (2, 5), elements=st.floats(-1e3, 1e3, allow_nan=False)),
       st.sampled_from(["euclidean", "manhattan"]))
def test_metric_symmetry_and_identity(uv, metric):
    u, v = uv[:1], uv[1:]
    duv = pairwise_distance(u, v, metric)[0, 0]
    assert duv == pairwise_distance(v, u, metric)[0, 0] and duv >= 0
    assert pairwise_distance(u, u, metric)[0, 0] == 0


def test_metric_thousand_random_pairs():
    rng = np.random.default_rng(0)
    U, V = rng.normal(size=(1000, 21)), rng.normal(size=(1000, 21))
    for metric in ("euclidean", "manhattan"):
        d = np.array([pairwise_distance(U[i:i + 1], V[i:i + 1], metric)[0, 0] for i in range(1000)])
        dr = np.array([pairwise_distance(V[i:i + 1], U[i:i + 1], metric)[0, 0] for i in range(1000)])
        assert np.array_equal(d, dr) and np.all(d > 0)
        assert np.all(np.diag(pairwise_distance(U[:50], U[:50], metric)) == 0)


@pytest.mark.parametrize("metric", ["euclidean", "manhattan"])
@pytest.mark.parametrize("weights", ["uniform", "inverse_distance"])
def test_matches_naive_reference(metric, weights):
    rng = np.random.default_rng(1)
    X = rng.integers(-3, 4, size=(40, 2)).astype(float)  # many distance ties
    y = rng.integers(0, 3, size=40)
    Q = rng.integers(-3, 4, size=(30, 2)).astype(float)
    for k in (1, 2, 5, 8):
        model = fit_knn(X, y, KnnParams(k, metric, weights), n_classes=3)
        expected = [naive_knn(X.tolist(), y.tolist(), q, k, metric, weights) for q in Q.tolist()]
        assert model.predict(Q).tolist() == expected


def test_storage_order_invariance_without_ties():
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(80, 3)), rng.integers(0, 3, size=80)
    Q = rng.normal(size=(40, 3))
    perm = rng.permutation(80)
    for params in (KnnParams(5), KnnParams(4, "manhattan", "inverse_distance")):
        a = fit_knn(X, y, params, n_classes=3).predict(Q)
        b = fit_knn(X[perm], y[perm], params, n_classes=3).predict(Q)
        assert np.array_equal(a, b)


def test_payload_round_trip():
    model = fit_knn(LINE_X, LINE_Y, KnnParams(3, "manhattan", "inverse_distance"))
    again = KnnModel.from_payload(model.to_payload())
    assert again.params == model.params
    assert np.array_equal(again.predict([[1.2], [9.0]]), model.predict([[1.2], [9.0]]))
