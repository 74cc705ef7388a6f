import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ctgkit.core import ConvergenceError, InputError
from ctgkit.svm import (
    BinarySvmModel,
    KernelSpec,
    MulticlassSvmModel,
    SvmParams,
    dual_objective,
    fit_binary_smo,
    fit_svm_ovo,
    kernel_eval,
    kernel_matrix,
    ovo_vote,
    predict_svm,
)
from oracles import dual_value, kkt_violations

LINEAR = KernelSpec("linear")
PAIRS3 = [(0, 1), (0, 2), (1, 2)]


# --------------------------------------------------------------------------- kernels


def test_kernel_examples():
    assert kernel_eval(LINEAR, [1, 2], [3, 4]) == 11.0
    assert kernel_eval(KernelSpec("rbf", 0.5), [0], [2]) == pytest.approx(math.exp(-2), abs=1e-15)
    assert round(kernel_eval(KernelSpec("rbf", 0.5), [0], [2]), 8) == 0.13533528
    assert kernel_eval(KernelSpec("poly", 1.0, degree=2, coef0=1.0), [1, 1], [1, 2]) == 16.0


@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=1, max_size=6),
       st.floats(1e-4, 1e3))
def test_rbf_self_similarity_is_one(x, gamma):
    assert kernel_eval(KernelSpec("rbf", gamma), x, x) == 1.0


def test_kernel_errors():
    with pytest.raises(InputError):
        KernelSpec("rbf", gamma=0.0)
    with pytest.raises(InputError):
        KernelSpec("rbf", gamma=-1.0)
    with pytest.raises(InputError, match="dimension mismatch"):
        kernel_eval(LINEAR, [1, 2], [1, 2, 3])
    with pytest.raises(InputError):
        kernel_matrix(KernelSpec("rbf"), [[1.0]], [[1.0]])  # unresolved 'scale'


def test_scale_gamma():
    X = np.array([[0.0, 2.0], [2.0, 0.0]])
    assert KernelSpec("rbf").resolved(X).gamma == 1.0 / (2 * 1.0)
    assert KernelSpec("rbf").resolved(np.ones((3, 2))).gamma == 1.0


# --------------------------------------------------------------------------- binary SMO


def test_analytic_two_point_problem():
    res = fit_binary_smo([[-1.0], [1.0]], [-1, 1], SvmParams(C=10.0, kernel=LINEAR))
    m = res.model
    assert np.allclose(res.full_alpha, [0.5, 0.5], atol=1e-12)
    assert m.bias == 0.0 and math.copysign(1.0, m.bias) == 1.0
    assert m.support_index.tolist() == [0, 1]
    xs = np.linspace(-3, 3, 13).reshape(-1, 1)
    assert np.allclose(m.decision_function(xs), xs.ravel(), atol=1e-12)


def separable(n=30, seed=0, gap=0.5):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, size=(4 * n, 2))
    margin = X[:, 0] + 0.5 * X[:, 1]
    keep = np.abs(margin) > gap
    X = X[keep][:n]
    y = np.where(X[:, 0] + 0.5 * X[:, 1] > 0, 1, -1)
    return X, y


def test_duplicated_set_gives_same_decision_function():
    X, y = separable(20, seed=3)
    params = SvmParams(C=100.0, kernel=LINEAR, tol=1e-6)
    a = fit_binary_smo(X, y, params).model
    b = fit_binary_smo(np.vstack([X, X]), np.concatenate([y, y]), params).model
    grid = np.random.default_rng(1).uniform(-2, 2, size=(200, 2))
    assert np.max(np.abs(a.decision_function(grid) - b.decision_function(grid))) <= 1e-3


def test_single_class_rejected():
    with pytest.raises(InputError):
        fit_binary_smo([[0.0], [1.0]], [1, 1])
    with pytest.raises(InputError):
        fit_binary_smo([[0.0], [1.0]], [0, 1])
    with pytest.raises(InputError):
        fit_svm_ovo(np.ones((3, 2)), [2, 2, 2], n_classes=3)


def random_problem(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(6, 40))
    d = int(rng.integers(1, 4))
    X = rng.normal(size=(n, d))
    y = np.where(X[:, 0] + rng.normal(scale=0.8, size=n) > 0, 1, -1)
    y[0], y[1] = 1, -1
    kernel = [LINEAR, KernelSpec("rbf", float(rng.uniform(0.1, 2.0))),
              KernelSpec("poly", 0.5, degree=2, coef0=1.0)][seed % 3]
    C = float([0.1, 1.0, 10.0][(seed // 3) % 3])
    return X, y, SvmParams(C=C, kernel=kernel)


@pytest.mark.parametrize("seed", range(50))
def test_smo_solution_properties(seed):
    X, y, params = random_problem(seed)
    res = fit_binary_smo(X, y, params, seed=seed, trace_capacity=200_000)
    alpha, C = res.full_alpha, params.C
    assert np.all((alpha >= 0) & (alpha <= C))
    assert abs(float(alpha @ y)) <= 1e-8
    K = kernel_matrix(res.model.kernel, X, X)
    assert kkt_violations(alpha.tolist(), y.tolist(), K.tolist(), res.model.bias, C, params.tol) == []

    # replay every accepted update: the dual never decreases and equality holds throughout
    assert res.trace_complete
    replay = np.zeros_like(alpha)
    prev = 0.0
    for i1, i2, a1, a2 in res.trace:
        replay[int(i1)], replay[int(i2)] = a1, a2
        assert abs(float(replay @ y)) <= 1e-8
        cur = dual_objective(replay, y, K)
        assert cur >= prev - 1e-10
        prev = cur
    assert np.array_equal(replay, alpha)
    if seed < 5:
        assert dual_value(alpha.tolist(), y.tolist(), K.tolist()) == pytest.approx(prev, abs=1e-9)


def test_separable_large_c_is_perfect():
    X, y = separable(60, seed=7)
    m = fit_binary_smo(X, y, SvmParams(C=1e4, kernel=LINEAR)).model
    assert np.array_equal(m.predict(X), y)


def test_only_positive_alphas_stored():
    X, y, params = random_problem(4)
    res = fit_binary_smo(X, y, params)
    assert np.all(res.model.alpha > 0)
    assert np.allclose(res.model.coef, res.model.alpha * y[res.model.support_index])


def test_iteration_cap_raises_with_diagnostics():
    X, y, params = random_problem(10)
    capped = SvmParams(C=params.C, kernel=params.kernel, max_iter=2)
    with pytest.raises(ConvergenceError) as info:
        fit_binary_smo(X, y, capped)
    diag = info.value.diagnostics
    assert diag["attempts"] >= 2 and "gap" in diag and "dual_objective" in diag


def test_binary_round_trip():
    X, y, params = random_problem(2)
    m = fit_binary_smo(X, y, params).model
    again = BinarySvmModel.from_dict(m.to_dict(), X.shape[1])
    assert np.array_equal(again.decision_function(X), m.decision_function(X))


# --------------------------------------------------------------------------- one-vs-one


def three_blobs(n=20, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.array([[0, 0], [4, 0], [0, 4]], dtype=float)
    y = np.repeat(np.arange(3), n)
    return centers[y] + rng.normal(scale=0.6, size=(3 * n, 2)), y


def test_pair_counts():
    X, y = three_blobs()
    assert len(fit_svm_ovo(X, y, n_classes=3).pairs) == 3
    two = y < 2
    m2 = fit_svm_ovo(X[two], y[two], n_classes=2)
    assert len(m2.pairs) == 1
    f = m2.pair_decisions(X[two])[:, 0]
    assert np.array_equal(m2.predict(X[two]), np.where(f > 0, 1, 0))


def test_ovo_independent_of_row_order():
    X, y = three_blobs(seed=2)
    perm = np.random.default_rng(0).permutation(y.size)
    a = fit_svm_ovo(X, y, seed=1)
    b = fit_svm_ovo(X[perm], y[perm], seed=1)
    grid = np.random.default_rng(3).uniform(-1, 5, size=(100, 2))
    assert np.allclose(a.pair_decisions(grid), b.pair_decisions(grid), atol=5e-3)
    assert np.mean(predict_svm(a, grid) == predict_svm(b, grid)) >= 0.97


def test_ovo_deterministic_and_parallel_safe():
    X, y = three_blobs(seed=5)
    a = fit_svm_ovo(X, y, seed=4, n_jobs=1)
    b = fit_svm_ovo(X, y, seed=4, n_jobs=3)
    assert a.to_payload() == b.to_payload()
    again = MulticlassSvmModel.from_payload(a.to_payload())
    assert np.array_equal(again.predict(X), a.predict(X))


def test_vote_clear_winner():
    # (0,1) negative -> 0 wins; (0,2) negative -> 0; (1,2) negative -> 1
    assert ovo_vote([[-1.0, -1.0, -1.0]], PAIRS3, 3).tolist() == [0]


def test_vote_condorcet_cycle():
    # 0 beats 1, 2 beats 0, 1 beats 2: one vote each, largest winning margin decides
    assert ovo_vote([[-0.2, 0.9, -0.5]], PAIRS3, 3).tolist() == [2]
    assert ovo_vote([[-0.9, 0.2, -0.5]], PAIRS3, 3).tolist() == [0]
    assert ovo_vote([[-0.5, 0.5, -0.5]], PAIRS3, 3).tolist() == [0]


def test_vote_two_class_sign():
    assert ovo_vote([[0.3], [-0.3], [0.0]], [(0, 1)], 2).tolist() == [1, 0, 0]


def test_ovo_dimension_mismatch():
    X, y = three_blobs()
    with pytest.raises(InputError, match="dimension mismatch"):
        fit_svm_ovo(X, y).predict(np.ones((1, 3)))


def test_ovo_training_accuracy_on_blobs():
    X, y = three_blobs(seed=8)
    assert np.mean(fit_svm_ovo(X, y, SvmParams(C=10.0)).predict(X) == y) >= 0.95
