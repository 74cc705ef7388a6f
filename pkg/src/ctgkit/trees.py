"""CART classification trees, Random Forest and ExtraTrees.

Splits send ``x[feature] <= threshold`` to the left child.  With the ``best``
splitter thresholds are midpoints between consecutive distinct values; with the
``random`` splitter each candidate feature gets one uniform threshold in
``[min, max)``.  Gain ties go to the lowest feature index, then the lowest
threshold.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Union

import numpy as np
from numba import njit

from ._jit import new_state, randbelow, uniform01
from .core import (
    InputError,
    as_labels,
    as_matrix,
    check_dimension,
    derive_seed,
    frozen,
    infer_n_classes,
    make_rng,
    parallel_map,
)

MaxFeatures = Union[str, int]


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    criterion: str = "gini"
    max_features: MaxFeatures = "all"
    splitter: str = "best"

    def __post_init__(self):
        if self.max_depth is not None and self.max_depth < 0:
            raise InputError("max_depth must be >= 0 or None")
        if self.min_samples_split < 2:
            raise InputError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise InputError("min_samples_leaf must be >= 1")
        if self.criterion not in ("gini", "entropy"):
            raise InputError(f"unknown criterion {self.criterion!r}")
        if self.splitter not in ("best", "random"):
            raise InputError(f"unknown splitter {self.splitter!r}")
        mf = self.max_features
        if isinstance(mf, str):
            if mf not in ("all", "sqrt", "log2"):
                raise InputError(f"unknown max_features {mf!r}")
        elif int(mf) < 1:
            raise InputError("max_features must be >= 1")

    def n_candidate_features(self, n_features: int) -> int:
        mf = self.max_features
        if mf == "all":
            return n_features
        if mf == "sqrt":
            return max(1, int(math.sqrt(n_features)))
        if mf == "log2":
            return max(1, int(math.log2(n_features)))
        if int(mf) > n_features:
            raise InputError(f"max_features={mf} exceeds feature count {n_features}")
        return int(mf)


@dataclass(frozen=True)
class ForestParams:
    n_estimators: int = 100
    tree: TreeParams = field(default_factory=lambda: TreeParams(max_features="sqrt"))
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_estimators < 1:
            raise InputError("n_estimators must be >= 1")


RANDOM_FOREST_DEFAULTS = ForestParams(100, TreeParams(max_features="sqrt", splitter="best"), bootstrap=True)
EXTRA_TREES_DEFAULTS = ForestParams(100, TreeParams(max_features="sqrt", splitter="random"), bootstrap=False)


# --------------------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def _child_gain(parent, left, n, n_left, criterion):
    n_right = n - n_left
    k = parent.shape[0]
    if criterion == 0:
        s_p = 0.0
        s_l = 0.0
        s_r = 0.0
        for c in range(k):
            cp = parent[c]
            cl = left[c]
            cr = cp - cl
            s_p += cp * cp
            s_l += cl * cl
            s_r += cr * cr
        return (s_l / n_left + s_r / n_right - s_p / n) / n
    h_p = 0.0
    h_l = 0.0
    h_r = 0.0
    for c in range(k):
        cp = parent[c]
        cl = left[c]
        cr = cp - cl
        if cp > 0:
            h_p -= (cp / n) * math.log2(cp / n)
        if cl > 0:
            h_l -= (cl / n_left) * math.log2(cl / n_left)
        if cr > 0:
            h_r -= (cr / n_right) * math.log2(cr / n_right)
    return h_p - (n_left / n) * h_l - (n_right / n) * h_r


@njit(cache=True, nogil=True)
def _better(g, f, t, best_g, best_f, best_t):
    if best_f < 0 or g > best_g:
        return True
    if g == best_g:
        if f < best_f:
            return True
        if f == best_f and t < best_t:
            return True
    return False


@njit(cache=True, nogil=True)
def _build_tree(X, y, rows, n_classes, max_depth, min_split, min_leaf, criterion, max_features,
                random_split, state):
    n_features = X.shape[1]
    m = rows.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    counts = np.zeros((cap, n_classes), np.int64)
    gain = np.zeros(cap)
    idx = rows.copy()
    vals = np.empty(m)
    cl = np.zeros(n_classes, np.int64)
    feats = np.arange(n_features)
    shuffle = max_features < n_features or random_split

    st_node = np.empty(cap, np.int64)
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    top = 1
    st_node[0] = 0
    st_start[0] = 0
    st_end[0] = m
    st_depth[0] = 0
    n_nodes = 1

    while top > 0:
        top -= 1
        node = st_node[top]
        start = st_start[top]
        end = st_end[top]
        depth = st_depth[top]
        n = end - start
        for t in range(start, end):
            counts[node, y[idx[t]]] += 1
        n_present = 0
        for c in range(n_classes):
            if counts[node, c] > 0:
                n_present += 1
        if n_present <= 1 or n < min_split or n < 2 * min_leaf:
            continue
        if max_depth >= 0 and depth >= max_depth:
            continue

        if shuffle:
            for q in range(n_features):
                feats[q] = q
            for q in range(n_features - 1, 0, -1):
                r = randbelow(state, q + 1)
                tmp = feats[q]
                feats[q] = feats[r]
                feats[r] = tmp

        best_f = -1
        best_t = 0.0
        best_g = 0.0
        visited = 0
        for q in range(n_features):
            if visited >= max_features:
                break
            f = feats[q]
            lo = np.inf
            hi = -np.inf
            for t in range(start, end):
                v = X[idx[t], f]
                vals[t - start] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if hi <= lo:
                continue
            visited += 1
            if random_split:
                thr = lo + uniform01(state) * (hi - lo)
                if thr >= hi:
                    thr = lo
                cl[:] = 0
                n_left = 0
                for t in range(start, end):
                    if vals[t - start] <= thr:
                        cl[y[idx[t]]] += 1
                        n_left += 1
                if n_left < min_leaf or n - n_left < min_leaf:
                    continue
                g = _child_gain(counts[node], cl, n, n_left, criterion)
                if _better(g, f, thr, best_g, best_f, best_t):
                    best_g = g
                    best_f = f
                    best_t = thr
            else:
                order = np.argsort(vals[:n], kind="mergesort")
                cl[:] = 0
                for p in range(n - 1):
                    cl[y[idx[start + order[p]]]] += 1
                    v = vals[order[p]]
                    v_next = vals[order[p + 1]]
                    if v_next <= v:
                        continue
                    n_left = p + 1
                    if n_left < min_leaf or n - n_left < min_leaf:
                        continue
                    g = _child_gain(counts[node], cl, n, n_left, criterion)
                    thr = v + (v_next - v) / 2.0
                    if thr >= v_next or thr < v:
                        thr = v
                    if _better(g, f, thr, best_g, best_f, best_t):
                        best_g = g
                        best_f = f
                        best_t = thr
        if best_f < 0:
            continue

        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_t:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        feature[node] = best_f
        threshold[node] = best_t
        gain[node] = best_g if best_g > 0.0 else 0.0
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        st_node[top] = rc
        st_start[top] = i
        st_end[top] = end
        st_depth[top] = depth + 1
        top += 1
        st_node[top] = lc
        st_start[top] = start
        st_end[top] = i
        st_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), counts[:n_nodes].copy(), gain[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _apply_tree(feature, threshold, left, right, X):
    n = X.shape[0]
    out = np.empty(n, np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


# --------------------------------------------------------------------------- models


@dataclass(frozen=True, eq=False)
class DecisionTreeModel:
    """A fitted CART tree stored as flat node arrays (leaf when ``feature == -1``)."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray
    gain: np.ndarray
    n_features: int
    n_classes: int
    params: TreeParams = field(default_factory=TreeParams)
    kind: str = "decision_tree"

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        X = check_dimension(X, self.n_features)
        return _apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        leaves = self.apply(X)
        return np.argmax(self.counts[leaves], axis=1).astype(np.int64)

    def to_payload(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": asdict(self.params),
            "nodes": _nodes_payload(self),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "DecisionTreeModel":
        params = TreeParams(**payload["params"])
        return _tree_from_nodes(payload["nodes"], payload["n_features"], payload["n_classes"], params)


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[DecisionTreeModel, ...]
    n_features: int
    n_classes: int
    params: ForestParams
    kind: str = "random_forest"

    def votes(self, X) -> np.ndarray:
        X = check_dimension(X, self.n_features)
        tally = np.zeros((X.shape[0], self.n_classes), np.int64)
        rows = np.arange(X.shape[0])
        for tree in self.trees:
            tally[rows, tree.predict(X)] += 1
        return tally

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.votes(X), axis=1).astype(np.int64)

    def to_payload(self) -> dict:
        return {
            "n_features": self.n_features,
            "n_classes": self.n_classes,
            "params": {
                "n_estimators": self.params.n_estimators,
                "bootstrap": self.params.bootstrap,
                "tree": asdict(self.params.tree),
            },
            "trees": [_nodes_payload(t) for t in self.trees],
        }

    @classmethod
    def from_payload(cls, payload: dict, kind: str) -> "ForestModel":
        p = payload["params"]
        params = ForestParams(p["n_estimators"], TreeParams(**p["tree"]), p["bootstrap"])
        trees = tuple(
            _tree_from_nodes(nodes, payload["n_features"], payload["n_classes"], params.tree)
            for nodes in payload["trees"]
        )
        return cls(trees, payload["n_features"], payload["n_classes"], params, kind)


def _nodes_payload(tree: DecisionTreeModel) -> dict:
    return {
        "feature": tree.feature.tolist(),
        "threshold": tree.threshold.tolist(),
        "left": tree.left.tolist(),
        "right": tree.right.tolist(),
        "counts": tree.counts.tolist(),
        "gain": tree.gain.tolist(),
    }


def _tree_from_nodes(nodes: dict, n_features: int, n_classes: int, params: TreeParams) -> DecisionTreeModel:
    return DecisionTreeModel(
        frozen(np.array(nodes["feature"], dtype=np.int64)),
        frozen(np.array(nodes["threshold"], dtype=np.float64)),
        frozen(np.array(nodes["left"], dtype=np.int64)),
        frozen(np.array(nodes["right"], dtype=np.int64)),
        frozen(np.array(nodes["counts"], dtype=np.int64).reshape(-1, n_classes)),
        frozen(np.array(nodes["gain"], dtype=np.float64)),
        int(n_features),
        int(n_classes),
        params,
    )


def _grow(X, y, rows, n_classes: int, params: TreeParams, seed: int) -> DecisionTreeModel:
    d = X.shape[1]
    arrays = _build_tree(
        X,
        y,
        np.ascontiguousarray(rows, dtype=np.int64),
        n_classes,
        -1 if params.max_depth is None else int(params.max_depth),
        int(params.min_samples_split),
        int(params.min_samples_leaf),
        0 if params.criterion == "gini" else 1,
        params.n_candidate_features(d),
        params.splitter == "random",
        new_state(seed),
    )
    return DecisionTreeModel(*(frozen(a) for a in arrays), d, n_classes, params)


def _check_fit_inputs(X, y, n_classes):
    X = as_matrix(X)
    y = as_labels(y, n_rows=X.shape[0])
    if X.shape[0] == 0:
        raise InputError("empty training set")
    k = infer_n_classes(y, n_classes)
    if y.max() >= k:
        raise InputError(f"label {int(y.max())} out of range for {k} classes")
    return X, y, k


def fit_tree(X, y, params: TreeParams | None = None, seed: int = 0, n_classes: int | None = None) -> DecisionTreeModel:
    params = params or TreeParams()
    X, y, k = _check_fit_inputs(X, y, n_classes)
    return _grow(X, y, np.arange(X.shape[0]), k, params, derive_seed(seed, "split"))


def _fit_forest(X, y, params: ForestParams, seed: int, n_classes, n_jobs, kind) -> ForestModel:
    X, y, k = _check_fit_inputs(X, y, n_classes)
    n = X.shape[0]

    def one(t: int) -> DecisionTreeModel:
        tree_seed = derive_seed(seed, t)
        if params.bootstrap:
            rows = make_rng(derive_seed(tree_seed, "bootstrap")).integers(0, n, size=n)
        else:
            rows = np.arange(n)
        return _grow(X, y, rows, k, params.tree, derive_seed(tree_seed, "split"))

    trees = parallel_map(one, range(params.n_estimators), n_jobs)
    return ForestModel(tuple(trees), X.shape[1], k, params, kind)


def fit_random_forest(X, y, params: ForestParams | None = None, seed: int = 0,
                      n_classes: int | None = None, n_jobs: int | None = 1) -> ForestModel:
    """Bagged CART trees; defaults are bootstrap resampling, sqrt features, best splits."""
    return _fit_forest(X, y, params or RANDOM_FOREST_DEFAULTS, seed, n_classes, n_jobs, "random_forest")


def fit_extra_trees(X, y, params: ForestParams | None = None, seed: int = 0,
                    n_classes: int | None = None, n_jobs: int | None = 1) -> ForestModel:
    """Extremely randomized trees: full sample per tree, one random threshold per candidate feature."""
    return _fit_forest(X, y, params or EXTRA_TREES_DEFAULTS, seed, n_classes, n_jobs, "extra_trees")


def predict_tree(model: DecisionTreeModel, X) -> np.ndarray:
    return model.predict(X)


def predict_forest(model: ForestModel, X) -> np.ndarray:
    return model.predict(X)


def forest_params(n_estimators: int = 100, bootstrap: bool | None = None, kind: str = "random_forest",
                  **tree_kwargs) -> ForestParams:
    """Build :class:`ForestParams` from flat keyword arguments (grid-search friendly)."""
    base = RANDOM_FOREST_DEFAULTS if kind == "random_forest" else EXTRA_TREES_DEFAULTS
    tree = replace(base.tree, **tree_kwargs)
    return ForestParams(int(n_estimators), tree, base.bootstrap if bootstrap is None else bool(bootstrap))
