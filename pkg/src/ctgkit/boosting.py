"""Multiclass second-order gradient boosting with two tree growers.

One regression tree per class per round is fitted to the softmax cross-entropy
gradients ``g = p - 1[y == c]`` and hessians ``h = p (1 - p)``.  A split is kept
when its gain ``0.5 * (GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ))`` is positive, at least
``min_split_gain``, and both children carry at least ``min_child_weight`` hessian.
Leaves output ``-G / (H + λ)``.

``exact_levelwise`` enumerates every midpoint threshold and grows depth by depth
(the XGBoost-style entry); ``histogram_leafwise`` buckets each feature into
equal-frequency bins and always splits the leaf with the largest gain
(the LightGBM-style entry).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Literal

import numpy as np
from numba import njit

from .core import (
    InputError,
    as_labels,
    as_matrix,
    check_dimension,
    derive_seed,
    frozen,
    infer_n_classes,
    make_rng,
)
from .trees import _apply_tree

PRIOR_FLOOR = 1e-6


@dataclass(frozen=True)
class GbtParams:
    variant: Literal["exact_levelwise", "histogram_leafwise"] = "exact_levelwise"
    n_rounds: int = 100
    learning_rate: float = 0.3
    max_depth: int = 6
    max_leaves: int = 31
    lambda_l2: float = 1.0
    min_split_gain: float = 0.0
    min_child_weight: float = 1.0
    n_bins: int = 255
    subsample: float = 1.0
    colsample: float = 1.0

    def __post_init__(self):
        if self.variant not in ("exact_levelwise", "histogram_leafwise"):
            raise InputError(f"unknown boosting variant {self.variant!r}")
        if self.n_rounds < 0:
            raise InputError("n_rounds must be >= 0")
        if not 0.0 < self.learning_rate <= 1.0:
            raise InputError("learning_rate must lie in (0, 1]")
        if self.max_depth < 0 or self.max_leaves < 1:
            raise InputError("max_depth must be >= 0 and max_leaves >= 1")
        if self.lambda_l2 < 0 or self.min_split_gain < 0 or self.min_child_weight < 0:
            raise InputError("lambda_l2, min_split_gain and min_child_weight must be >= 0")
        if self.n_bins < 2:
            raise InputError("n_bins must be >= 2")
        if not (0.0 < self.subsample <= 1.0 and 0.0 < self.colsample <= 1.0):
            raise InputError("subsample and colsample must lie in (0, 1]")


XGB_DEFAULTS = GbtParams("exact_levelwise", 100, 0.3, max_depth=6, lambda_l2=1.0, min_child_weight=1.0)
LGBM_DEFAULTS = GbtParams("histogram_leafwise", 100, 0.1, max_leaves=31, lambda_l2=0.0, min_child_weight=1e-3)


@dataclass(frozen=True, eq=False)
class RegressionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    grad_sum: np.ndarray
    hess_sum: np.ndarray

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature < 0))

    def apply(self, X) -> np.ndarray:
        return _apply_tree(self.feature, self.threshold, self.left, self.right, X)

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "grad_sum": self.grad_sum.tolist(),
            "hess_sum": self.hess_sum.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(
            frozen(np.array(d["feature"], dtype=np.int64)),
            frozen(np.array(d["threshold"], dtype=np.float64)),
            frozen(np.array(d["left"], dtype=np.int64)),
            frozen(np.array(d["right"], dtype=np.int64)),
            frozen(np.array(d["value"], dtype=np.float64)),
            frozen(np.array(d["grad_sum"], dtype=np.float64)),
            frozen(np.array(d["hess_sum"], dtype=np.float64)),
        )


@dataclass(frozen=True, eq=False)
class GbtModel:
    base_scores: np.ndarray
    rounds: tuple[tuple[RegressionTree, ...], ...]
    params: GbtParams
    n_features: int
    train_loss: tuple[float, ...] = field(default=(), compare=False)

    @property
    def kind(self) -> str:
        return "gbt_exact" if self.params.variant == "exact_levelwise" else "gbt_hist"

    @property
    def n_classes(self) -> int:
        return self.base_scores.shape[0]

    def decision_function(self, X, n_rounds: int | None = None) -> np.ndarray:
        """Raw class scores after the first ``n_rounds`` rounds (all by default)."""
        X = check_dimension(X, self.n_features)
        scores = np.tile(self.base_scores, (X.shape[0], 1))
        lr = self.params.learning_rate
        for round_trees in self.rounds[:n_rounds]:
            for c, tree in enumerate(round_trees):
                scores[:, c] += lr * tree.predict(X)
        return scores

    def predict_proba(self, X) -> np.ndarray:
        return softmax(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1).astype(np.int64)

    def to_payload(self) -> dict:
        return {
            "n_features": self.n_features,
            "params": asdict(self.params),
            "base_scores": self.base_scores.tolist(),
            "rounds": [[t.to_dict() for t in rt] for rt in self.rounds],
            "train_loss": list(self.train_loss),
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "GbtModel":
        return cls(
            frozen(np.array(payload["base_scores"], dtype=np.float64)),
            tuple(tuple(RegressionTree.from_dict(t) for t in rt) for rt in payload["rounds"]),
            GbtParams(**payload["params"]),
            int(payload["n_features"]),
            tuple(payload.get("train_loss", ())),
        )


def softmax(scores: np.ndarray) -> np.ndarray:
    z = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_loss(y: np.ndarray, scores: np.ndarray) -> float:
    """Mean multiclass cross-entropy computed from raw scores (log-sum-exp form)."""
    z = scores - scores.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    return float(np.mean(lse - z[np.arange(y.shape[0]), y]))


# --------------------------------------------------------------------------- binning


def quantile_bin_edges(column: np.ndarray, n_bins: int) -> np.ndarray:
    """Equal-frequency cut points; every resulting bin holds at least one training value.

    Edges are midpoints between consecutive distinct values and strictly increasing.
    A value ``v`` falls in bin ``searchsorted(edges, v, side="left")``.
    """
    uniq, cnt = np.unique(column, return_counts=True)
    if uniq.size <= 1:
        return np.empty(0)
    if uniq.size <= n_bins:
        cut = np.arange(uniq.size - 1)
    else:
        cum = np.cumsum(cnt)
        targets = column.size * np.arange(1, n_bins) / n_bins
        cut = np.unique(np.searchsorted(cum, targets, side="left"))
        cut = cut[cut < uniq.size - 1]
    lo, hi = uniq[cut], uniq[cut + 1]
    mid = lo + (hi - lo) / 2.0
    return np.where((mid >= hi) | (mid < lo), lo, mid)


def bin_matrix(X: np.ndarray, n_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    edges = [quantile_bin_edges(X[:, j], n_bins) for j in range(X.shape[1])]
    B = np.empty(X.shape, dtype=np.int32)
    for j, e in enumerate(edges):
        B[:, j] = np.searchsorted(e, X[:, j], side="left")
    return np.ascontiguousarray(B), edges


# --------------------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def _gain(GL, HL, GR, HR, lam):
    G = GL + GR
    H = HL + HR
    return 0.5 * (GL * GL / (HL + lam) + GR * GR / (HR + lam) - G * G / (H + lam))


@njit(cache=True, nogil=True)
def _leaf_value(G, H, lam):
    d = H + lam
    if d <= 0.0:
        return 0.0
    return -G / d


@njit(cache=True, nogil=True)
def _grow_exact(X, sorted_idx, g, h, in_sample, feat_ok, max_depth, lam, min_gain, min_child):
    n, d = X.shape
    cap = 2 ** (max_depth + 1)
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    Gs = np.zeros(cap)
    Hs = np.zeros(cap)
    node_of = np.full(n, -1, np.int64)
    for r in range(n):
        if in_sample[r]:
            node_of[r] = 0
            Gs[0] += g[r]
            Hs[0] += h[r]
    active = np.zeros(cap, np.bool_)
    active[0] = True
    n_nodes = 1

    best_gain = np.zeros(cap)
    best_f = np.full(cap, -1, np.int64)
    best_t = np.zeros(cap)
    best_GL = np.zeros(cap)
    best_HL = np.zeros(cap)
    acc_G = np.zeros(cap)
    acc_H = np.zeros(cap)
    last = np.zeros(cap)
    seen = np.zeros(cap, np.bool_)

    for depth in range(max_depth):
        any_active = False
        for a in range(n_nodes):
            if active[a]:
                any_active = True
                best_gain[a] = 0.0
                best_f[a] = -1
        if not any_active:
            break
        for f in range(d):
            if not feat_ok[f]:
                continue
            for a in range(n_nodes):
                acc_G[a] = 0.0
                acc_H[a] = 0.0
                seen[a] = False
            for p in range(n):
                r = sorted_idx[f, p]
                a = node_of[r]
                if a < 0 or not active[a]:
                    continue
                v = X[r, f]
                if seen[a] and v > last[a]:
                    GL = acc_G[a]
                    HL = acc_H[a]
                    GR = Gs[a] - GL
                    HR = Hs[a] - HL
                    if HL >= min_child and HR >= min_child and HL + lam > 0.0 and HR + lam > 0.0:
                        gn = _gain(GL, HL, GR, HR, lam)
                        if gn > best_gain[a]:
                            t = last[a] + (v - last[a]) / 2.0
                            if t >= v or t < last[a]:
                                t = last[a]
                            best_gain[a] = gn
                            best_f[a] = f
                            best_t[a] = t
                            best_GL[a] = GL
                            best_HL[a] = HL
                acc_G[a] += g[r]
                acc_H[a] += h[r]
                last[a] = v
                seen[a] = True
        frontier_end = n_nodes
        for a in range(frontier_end):
            if not active[a]:
                continue
            active[a] = False
            if best_f[a] >= 0 and best_gain[a] > 0.0 and best_gain[a] >= min_gain:
                lc = n_nodes
                rc = n_nodes + 1
                n_nodes += 2
                feature[a] = best_f[a]
                threshold[a] = best_t[a]
                left[a] = lc
                right[a] = rc
                Gs[lc] = best_GL[a]
                Hs[lc] = best_HL[a]
                Gs[rc] = Gs[a] - best_GL[a]
                Hs[rc] = Hs[a] - best_HL[a]
                active[lc] = True
                active[rc] = True
        for r in range(n):
            a = node_of[r]
            # Only nodes split in this pass have children numbered past the old frontier.
            if a >= 0 and feature[a] >= 0 and left[a] >= frontier_end:
                if X[r, feature[a]] <= threshold[a]:
                    node_of[r] = left[a]
                else:
                    node_of[r] = right[a]

    # Recompute child sums from the final partition so leaf statistics are exact.
    Gs[:] = 0.0
    Hs[:] = 0.0
    for r in range(n):
        if not in_sample[r]:
            continue
        node = 0
        Gs[0] += g[r]
        Hs[0] += h[r]
        while feature[node] >= 0:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
            Gs[node] += g[r]
            Hs[node] += h[r]
    for a in range(n_nodes):
        if feature[a] < 0:
            value[a] = _leaf_value(Gs[a], Hs[a], lam)
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), Gs[:n_nodes].copy(), Hs[:n_nodes].copy())


@njit(cache=True, nogil=True)
def _hist_best(B, edges, n_edges, idx, start, end, g, h, feat_ok, lam, min_child, hist_G, hist_H, hist_N):
    d = B.shape[1]
    hist_G[:, :] = 0.0
    hist_H[:, :] = 0.0
    hist_N[:, :] = 0
    G = 0.0
    H = 0.0
    for t in range(start, end):
        r = idx[t]
        G += g[r]
        H += h[r]
        for f in range(d):
            b = B[r, f]
            hist_G[f, b] += g[r]
            hist_H[f, b] += h[r]
            hist_N[f, b] += 1
    n = end - start
    best_gain = 0.0
    best_f = -1
    best_b = -1
    for f in range(d):
        if not feat_ok[f]:
            continue
        GL = 0.0
        HL = 0.0
        NL = 0
        for b in range(n_edges[f]):
            GL += hist_G[f, b]
            HL += hist_H[f, b]
            NL += hist_N[f, b]
            if hist_N[f, b] == 0 or NL == 0 or NL == n:
                continue
            GR = G - GL
            HR = H - HL
            if HL < min_child or HR < min_child or HL + lam <= 0.0 or HR + lam <= 0.0:
                continue
            gn = _gain(GL, HL, GR, HR, lam)
            if gn > best_gain:
                best_gain = gn
                best_f = f
                best_b = b
    return best_gain, best_f, best_b, G, H


@njit(cache=True, nogil=True)
def _grow_hist(B, edges, n_edges, rows, g, h, feat_ok, max_leaves, lam, min_gain, min_child):
    n_rows = rows.shape[0]
    d = B.shape[1]
    max_bins = edges.shape[1] + 1
    cap = 2 * max_leaves + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    Gs = np.zeros(cap)
    Hs = np.zeros(cap)
    start = np.zeros(cap, np.int64)
    end = np.zeros(cap, np.int64)
    cand_gain = np.full(cap, -1.0)
    cand_f = np.full(cap, -1, np.int64)
    cand_b = np.full(cap, -1, np.int64)
    hist_G = np.zeros((d, max_bins))
    hist_H = np.zeros((d, max_bins))
    hist_N = np.zeros((d, max_bins), np.int64)
    idx = rows.copy()

    start[0] = 0
    end[0] = n_rows
    gn, f, b, G, H = _hist_best(B, edges, n_edges, idx, 0, n_rows, g, h, feat_ok, lam, min_child,
                                hist_G, hist_H, hist_N)
    Gs[0] = G
    Hs[0] = H
    cand_gain[0] = gn
    cand_f[0] = f
    cand_b[0] = b
    n_nodes = 1
    n_leaves = 1
    while n_leaves < max_leaves:
        pick = -1
        pick_gain = 0.0
        for a in range(n_nodes):
            if feature[a] < 0 and cand_f[a] >= 0 and cand_gain[a] > pick_gain and cand_gain[a] >= min_gain:
                pick = a
                pick_gain = cand_gain[a]
        if pick < 0:
            break
        f = cand_f[pick]
        b = cand_b[pick]
        i = start[pick]
        j = end[pick] - 1
        while i <= j:
            if B[idx[i], f] <= b:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        feature[pick] = f
        threshold[pick] = edges[f, b]
        left[pick] = lc
        right[pick] = rc
        start[lc] = start[pick]
        end[lc] = i
        start[rc] = i
        end[rc] = end[pick]
        for child in (lc, rc):
            gn, cf, cb, G, H = _hist_best(B, edges, n_edges, idx, start[child], end[child], g, h,
                                          feat_ok, lam, min_child, hist_G, hist_H, hist_N)
            Gs[child] = G
            Hs[child] = H
            cand_gain[child] = gn
            cand_f[child] = cf
            cand_b[child] = cb
        n_leaves += 1
    for a in range(n_nodes):
        if feature[a] < 0:
            value[a] = _leaf_value(Gs[a], Hs[a], lam)
    # Internal node sums are the sums of their children, filled bottom-up.
    for a in range(n_nodes - 1, -1, -1):
        if feature[a] >= 0:
            Gs[a] = Gs[left[a]] + Gs[right[a]]
            Hs[a] = Hs[left[a]] + Hs[right[a]]
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), Gs[:n_nodes].copy(), Hs[:n_nodes].copy())


# --------------------------------------------------------------------------- fitting


def class_log_priors(y: np.ndarray, n_classes: int) -> np.ndarray:
    counts = np.bincount(y, minlength=n_classes).astype(float)
    priors = np.maximum(counts / counts.sum(), PRIOR_FLOOR)
    return np.log(priors)


def fit_gbt(X, y, params: GbtParams | None = None, seed: int = 0, n_classes: int | None = None) -> GbtModel:
    params = params or XGB_DEFAULTS
    X = as_matrix(X)
    y = as_labels(y, n_rows=X.shape[0])
    if X.shape[0] == 0:
        raise InputError("empty training set")
    k = infer_n_classes(y, n_classes)
    if k < 2:
        raise InputError("boosting needs at least 2 classes")
    if y.max() >= k:
        raise InputError(f"label {int(y.max())} out of range for {k} classes")
    n, d = X.shape

    base = class_log_priors(y, k)
    scores = np.tile(base, (n, 1))
    onehot = np.zeros((n, k))
    onehot[np.arange(n), y] = 1.0
    losses = [log_loss(y, scores)]

    exact = params.variant == "exact_levelwise"
    if exact:
        sorted_idx = np.ascontiguousarray(np.argsort(X, axis=0, kind="mergesort").T.astype(np.int64))
    else:
        B, edge_list = bin_matrix(X, params.n_bins)
        n_edges = np.array([e.size for e in edge_list], dtype=np.int64)
        width = max(1, int(n_edges.max()) if d else 1)
        edges = np.full((d, width), np.inf)
        for j, e in enumerate(edge_list):
            edges[j, : e.size] = e

    rng = make_rng(derive_seed(seed, "boosting"))
    all_rows = np.ones(n, dtype=np.bool_)
    all_feats = np.ones(d, dtype=np.bool_)
    rounds = []
    for _ in range(params.n_rounds):
        p = softmax(scores)
        grads = p - onehot
        hess = p * (1.0 - p)
        in_sample = all_rows
        if params.subsample < 1.0:
            in_sample = np.zeros(n, dtype=np.bool_)
            in_sample[rng.permutation(n)[: max(1, int(round(params.subsample * n)))]] = True
        round_trees = []
        for c in range(k):
            feat_ok = all_feats
            if params.colsample < 1.0:
                feat_ok = np.zeros(d, dtype=np.bool_)
                feat_ok[rng.permutation(d)[: max(1, int(round(params.colsample * d)))]] = True
            g = np.ascontiguousarray(grads[:, c])
            h = np.ascontiguousarray(hess[:, c])
            if exact:
                arrays = _grow_exact(X, sorted_idx, g, h, in_sample, feat_ok, int(params.max_depth),
                                     float(params.lambda_l2), float(params.min_split_gain),
                                     float(params.min_child_weight))
            else:
                rows = np.nonzero(in_sample)[0].astype(np.int64)
                arrays = _grow_hist(B, edges, n_edges, rows, g, h, feat_ok, int(params.max_leaves),
                                    float(params.lambda_l2), float(params.min_split_gain),
                                    float(params.min_child_weight))
            round_trees.append(RegressionTree(*(frozen(a) for a in arrays)))
        for c, tree in enumerate(round_trees):
            scores[:, c] += params.learning_rate * tree.predict(X)
        rounds.append(tuple(round_trees))
        losses.append(log_loss(y, scores))
    return GbtModel(frozen(base), tuple(rounds), params, d, tuple(losses))


def predict_proba_gbt(model: GbtModel, X) -> np.ndarray:
    return model.predict_proba(X)


def predict_gbt(model: GbtModel, X) -> np.ndarray:
    return model.predict(X)
