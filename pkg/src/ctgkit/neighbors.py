"""Exact brute-force k-nearest-neighbor classification."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
from scipy.spatial.distance import cdist

from .core import InputError, as_labels, as_matrix, check_dimension, frozen, infer_n_classes

_SCIPY_METRIC = {"euclidean": "euclidean", "manhattan": "cityblock"}


@dataclass(frozen=True)
class KnnParams:
    k: int = 5
    metric: Literal["euclidean", "manhattan"] = "euclidean"
    weights: Literal["uniform", "inverse_distance"] = "uniform"

    def __post_init__(self):
        if int(self.k) < 1:
            raise InputError("k must be >= 1")
        if self.metric not in _SCIPY_METRIC:
            raise InputError(f"unknown metric {self.metric!r}")
        if self.weights not in ("uniform", "inverse_distance"):
            raise InputError(f"unknown weighting {self.weights!r}")


@dataclass(frozen=True, eq=False)
class KnnModel:
    X_train: np.ndarray
    y_train: np.ndarray
    params: KnnParams
    n_classes: int
    kind: str = "knn"

    @property
    def n_features(self) -> int:
        return self.X_train.shape[1]

    def neighbors(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Indices and distances of the k nearest training rows (ties to the lower index)."""
        X = check_dimension(X, self.n_features)
        D = pairwise_distance(X, self.X_train, self.params.metric)
        idx = np.argsort(D, axis=1, kind="stable")[:, : self.params.k]
        return idx, np.take_along_axis(D, idx, axis=1)

    def predict(self, X) -> np.ndarray:
        idx, dist = self.neighbors(X)
        labels = self.y_train[idx]
        n = idx.shape[0]
        votes = np.zeros((n, self.n_classes))
        rows = np.repeat(np.arange(n), idx.shape[1])
        if self.params.weights == "uniform":
            np.add.at(votes, (rows, labels.ravel()), 1.0)
            return np.argmax(votes, axis=1).astype(np.int64)
        exact = dist == 0
        with np.errstate(divide="ignore"):
            w = np.where(exact, 0.0, 1.0 / np.where(exact, 1.0, dist))
        np.add.at(votes, (rows, labels.ravel()), w.ravel())
        out = np.argmax(votes, axis=1).astype(np.int64)
        hit = exact.any(axis=1)
        if hit.any():
            # Neighbor columns are ordered by (distance, row index), so the first exact
            # match is also the lowest-index one.
            first = np.argmax(exact[hit], axis=1)
            out[hit] = labels[hit, first]
        return out

    def to_payload(self) -> dict:
        return {
            "X_train": self.X_train.tolist(),
            "y_train": self.y_train.tolist(),
            "n_classes": self.n_classes,
            "params": {"k": self.params.k, "metric": self.params.metric, "weights": self.params.weights},
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "KnnModel":
        p = payload["params"]
        X = np.array(payload["X_train"], dtype=np.float64)
        return cls(frozen(X), frozen(np.array(payload["y_train"], dtype=np.int64)),
                   KnnParams(int(p["k"]), p["metric"], p["weights"]), int(payload["n_classes"]))


def pairwise_distance(A, B, metric: str = "euclidean") -> np.ndarray:
    if metric not in _SCIPY_METRIC:
        raise InputError(f"unknown metric {metric!r}")
    return cdist(np.asarray(A, dtype=np.float64), np.asarray(B, dtype=np.float64), _SCIPY_METRIC[metric])


def fit_knn(X, y, params: KnnParams | None = None, n_classes: int | None = None) -> KnnModel:
    params = params or KnnParams()
    X = as_matrix(X)
    y = as_labels(y, n_rows=X.shape[0])
    if params.k > X.shape[0]:
        raise InputError(f"k={params.k} exceeds the {X.shape[0]} training rows")
    return KnnModel(frozen(X.copy()), frozen(y.copy()), params, infer_n_classes(y, n_classes))


def predict_knn(model: KnnModel, X) -> np.ndarray:
    return model.predict(X)
