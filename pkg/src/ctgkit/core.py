"""Shared contracts: matrix/label checks, seed derivation, tie-breaking and errors."""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

CLASS_NAMES = ("Normal", "Suspect", "Pathological")
N_CLASSES = 3

MODEL_KINDS = (
    "decision_tree",
    "random_forest",
    "extra_trees",
    "knn",
    "svm",
    "gbt_exact",
    "gbt_hist",
    "voting",
)


class CtgError(Exception):
    """Base class for every error raised by this package."""


class InputError(CtgError, ValueError):
    """Bad user input: malformed files, invalid parameters, unmet preconditions."""


class SchemaError(InputError):
    def __init__(self, column: str, message: str | None = None):
        self.column = column
        super().__init__(message or f"missing required column {column!r}")


class ParseError(InputError):
    def __init__(self, row: int, column: str, value: str):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(f"cannot parse {value!r} as a number at row {row}, column {column!r}")


class LabelError(InputError):
    pass


class ConvergenceError(CtgError, RuntimeError):
    """An optimizer hit its iteration cap; ``diagnostics`` holds the best-so-far state."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


def argmax_tiebreak_lowest(scores: Sequence[float]) -> int:
    """Index of the maximum; ties go to the smallest index.

    >>> argmax_tiebreak_lowest([1.0, 1.0, 0.0])
    0
    """
    arr = np.asarray(scores, dtype=float)
    if arr.size == 0:
        raise InputError("empty scores")
    if not np.all(np.isfinite(arr)):
        raise InputError("scores must be finite")
    # np.argmax returns the first occurrence of the maximum.
    return int(np.argmax(arr))


def argmax_rows(scores: np.ndarray) -> np.ndarray:
    """Row-wise :func:`argmax_tiebreak_lowest` for a 2-D score array."""
    scores = np.asarray(scores)
    if scores.ndim != 2 or scores.shape[1] == 0:
        raise InputError("empty scores")
    return np.argmax(scores, axis=1).astype(np.int64)


def mix64(z: int) -> int:
    """SplitMix64 output finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stable_tag(name: str) -> int:
    """Map a textual tag to a 64-bit label, identical on every platform."""
    return int.from_bytes(hashlib.blake2b(name.encode("utf-8"), digest_size=8).digest(), "little")


def derive_seed(master: int, tag: int | str) -> int:
    """Child seed for ``tag`` under ``master``.

    child = mix64(mix64(master + GOLDEN_GAMMA) ^ tag + GOLDEN_GAMMA), all arithmetic
    mod 2**64.  String tags are mapped through :func:`stable_tag`.
    """
    if isinstance(tag, str):
        tag = stable_tag(tag)
    x = mix64((int(master) + GOLDEN_GAMMA) & MASK64)
    x = ((x ^ (int(tag) & MASK64)) + GOLDEN_GAMMA) & MASK64
    return mix64(x)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def as_matrix(X, *, name: str = "X", allow_nan: bool = False) -> np.ndarray:
    """Validate and return ``X`` as a C-contiguous float64 matrix."""
    arr = np.ascontiguousarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise InputError(f"{name} must be 2-D, got shape {arr.shape}")
    if allow_nan:
        if np.isinf(arr).any():
            raise InputError(f"{name} contains infinite values")
    elif not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def as_labels(y, n_classes: int | None = None, *, n_rows: int | None = None) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise InputError(f"labels must be 1-D, got shape {arr.shape}")
    if arr.size and not np.issubdtype(arr.dtype, np.integer):
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise LabelError("labels must be integers")
    arr = arr.astype(np.int64)
    if n_rows is not None and arr.shape[0] != n_rows:
        raise InputError(f"label count {arr.shape[0]} does not match row count {n_rows}")
    if arr.size and arr.min() < 0:
        raise LabelError("labels must be non-negative")
    if n_classes is not None and arr.size and arr.max() >= n_classes:
        raise LabelError(f"label {int(arr.max())} out of range for {n_classes} classes")
    return arr


def check_dimension(X: np.ndarray, n_features: int) -> np.ndarray:
    X = as_matrix(X)
    if X.shape[1] != n_features:
        raise InputError(f"dimension mismatch: model expects {n_features} features, got {X.shape[1]}")
    return X


def frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@runtime_checkable
class FittedModel(Protocol):
    """Common estimator contract.  Prediction is a pure function of payload and input."""

    kind: str
    n_features: int
    n_classes: int

    def predict(self, X) -> np.ndarray: ...

    def to_payload(self) -> dict: ...


def resolve_jobs(n_jobs: int | None) -> int:
    import os

    if n_jobs is None or n_jobs == 0:
        return 1
    if n_jobs < 0:
        return max(1, (os.cpu_count() or 1) + 1 + n_jobs)
    return n_jobs


def parallel_map(fn, items, n_jobs: int | None = 1) -> list:
    """Ordered map; threads only pay off when ``fn`` releases the GIL (numba nogil kernels)."""
    items = list(items)
    jobs = min(resolve_jobs(n_jobs), len(items))
    if jobs <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def infer_n_classes(y: np.ndarray, n_classes: int | None) -> int:
    if n_classes is not None:
        return int(n_classes)
    return max(2, int(y.max()) + 1) if y.size else 2
