"""Soft-margin kernel SVM solved by SMO, with one-vs-one voting for several classes.

The solver follows Platt's outer loop (alternate full sweeps and sweeps over the
non-bound multipliers) but checks optimality against the exact extreme errors
``b_up`` / ``b_low`` of Keerthi et al. rather than a single cached threshold, which
avoids stalling near convergence.  A final pass repeatedly steps the maximal
violating pair until ``b_low - b_up <= tol``; at that point every training point
satisfies its KKT condition within ``tol``.

Notation inside the kernel: ``F_i = sum_j a_j y_j K_ij - y_i`` (the error without
the bias), so ``y_i f(x_i) = 1 + y_i (F_i + b)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Union

import numpy as np
from numba import njit
from scipy.spatial.distance import cdist

from ._jit import new_state, randbelow
from .core import (
    ConvergenceError,
    InputError,
    as_labels,
    as_matrix,
    check_dimension,
    derive_seed,
    frozen,
    infer_n_classes,
    parallel_map,
)

Gamma = Union[float, Literal["scale"]]


@dataclass(frozen=True)
class KernelSpec:
    kind: Literal["linear", "rbf", "poly"] = "rbf"
    gamma: Gamma = "scale"
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("linear", "rbf", "poly"):
            raise InputError(f"unknown kernel {self.kind!r}")
        if self.gamma != "scale":
            if isinstance(self.gamma, str) or not float(self.gamma) > 0:
                raise InputError(f"gamma must be positive or 'scale', got {self.gamma!r}")
        if self.kind == "poly" and self.degree < 1:
            raise InputError("poly degree must be >= 1")

    def resolved(self, X: np.ndarray) -> "KernelSpec":
        """Replace ``'scale'`` by ``1 / (d * var(X))`` (1.0 when X has no variance)."""
        if self.gamma != "scale":
            return self
        var = float(np.var(X)) if X.size else 0.0
        gamma = 1.0 / (X.shape[1] * var) if var > 0 else 1.0
        return KernelSpec(self.kind, gamma, self.degree, self.coef0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "gamma": self.gamma, "degree": self.degree, "coef0": self.coef0}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(d["kind"], d["gamma"], int(d.get("degree", 3)), float(d.get("coef0", 0.0)))


@dataclass(frozen=True)
class SvmParams:
    C: float = 1.0
    kernel: KernelSpec = field(default_factory=KernelSpec)
    tol: float = 1e-3
    max_passes: int = 10
    max_iter: int = 1_000_000

    def __post_init__(self):
        if not self.C > 0:
            raise InputError("C must be positive")
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_passes < 1 or self.max_iter < 1:
            raise InputError("max_passes and max_iter must be >= 1")


def kernel_matrix(spec: KernelSpec, A, B) -> np.ndarray:
    """Gram matrix ``K[i, j] = k(A[i], B[j])``; ``spec.gamma`` must already be numeric."""
    A = np.atleast_2d(np.asarray(A, dtype=np.float64))
    B = np.atleast_2d(np.asarray(B, dtype=np.float64))
    if A.shape[1] != B.shape[1]:
        raise InputError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]} features")
    if spec.kind == "linear":
        return A @ B.T
    gamma = spec.gamma
    if gamma == "scale" or not float(gamma) > 0:
        raise InputError("kernel gamma must be a positive number")
    if spec.kind == "rbf":
        # cdist gives exactly 0 for identical rows, so k(x, x) == 1.
        return np.exp(-float(gamma) * cdist(A, B, "sqeuclidean"))
    return (float(gamma) * (A @ B.T) + spec.coef0) ** spec.degree


def kernel_eval(spec: KernelSpec, u, v) -> float:
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise InputError(f"dimension mismatch: {u.size} vs {v.size}")
    return float(kernel_matrix(spec, u[None, :], v[None, :])[0, 0])


# --------------------------------------------------------------------------- SMO kernel


@njit(cache=True, nogil=True)
def _in_up(a, y, C):
    return (y > 0 and a < C) or (y < 0 and a > 0)


@njit(cache=True, nogil=True)
def _in_low(a, y, C):
    return (y > 0 and a > 0) or (y < 0 and a < C)


@njit(cache=True, nogil=True)
def _extremes(alpha, y, F, C, ext_i):
    """Return (b_up, b_low); ``ext_i`` receives (i_up, i_low)."""
    b_up = np.inf
    b_low = -np.inf
    i_up = -1
    i_low = -1
    for k in range(alpha.shape[0]):
        if _in_up(alpha[k], y[k], C) and F[k] < b_up:
            b_up = F[k]
            i_up = k
        if _in_low(alpha[k], y[k], C) and F[k] > b_low:
            b_low = F[k]
            i_low = k
    ext_i[0] = i_up
    ext_i[1] = i_low
    return b_up, b_low


@njit(cache=True, nogil=True)
def _take_step(i1, i2, K, y, alpha, F, C, min_delta, trace, counters):
    if i1 == i2:
        return 0
    a1 = alpha[i1]
    a2 = alpha[i2]
    y1 = y[i1]
    y2 = y[i2]
    F1 = F[i1]
    F2 = F[i2]
    s = y1 * y2
    if y1 != y2:
        L = max(0.0, a2 - a1)
        H = min(C, C + a2 - a1)
    else:
        L = max(0.0, a1 + a2 - C)
        H = min(C, a1 + a2)
    if H <= L:
        return 0
    k11 = K[i1, i1]
    k12 = K[i1, i2]
    k22 = K[i2, i2]
    eta = k11 + k22 - 2.0 * k12
    if eta > 0.0:
        a2n = a2 + y2 * (F1 - F2) / eta
        if a2n < L:
            a2n = L
        elif a2n > H:
            a2n = H
    else:
        # Degenerate curvature: compare the (minimization form) objective at the box ends.
        f1 = y1 * F1 - a1 * k11 - s * a2 * k12
        f2 = y2 * F2 - s * a1 * k12 - a2 * k22
        L1 = a1 + s * (a2 - L)
        H1 = a1 + s * (a2 - H)
        lobj = L1 * f1 + L * f2 + 0.5 * L1 * L1 * k11 + 0.5 * L * L * k22 + s * L * L1 * k12
        hobj = H1 * f1 + H * f2 + 0.5 * H1 * H1 * k11 + 0.5 * H * H * k22 + s * H * H1 * k12
        if lobj < hobj - 1e-12:
            a2n = L
        elif lobj > hobj + 1e-12:
            a2n = H
        else:
            return 0
    delta = a2n - a2
    if delta == 0.0:
        return 0
    if abs(delta) <= min_delta and a2n != L and a2n != H:
        return 0
    a1n = a1 + s * (a2 - a2n)
    if a1n < 0.0:
        a1n = 0.0
    elif a1n > C:
        a1n = C
    d1 = y1 * (a1n - a1)
    d2 = y2 * (a2n - a2)
    for k in range(F.shape[0]):
        F[k] += d1 * K[i1, k] + d2 * K[i2, k]
    alpha[i1] = a1n
    alpha[i2] = a2n
    t = counters[1]
    if t < trace.shape[0]:
        trace[t, 0] = i1
        trace[t, 1] = i2
        trace[t, 2] = a1n
        trace[t, 3] = a2n
    counters[1] = t + 1
    return 1


@njit(cache=True, nogil=True)
def _examine(i2, K, y, alpha, F, C, tol, state, trace, counters, ext_i):
    n = alpha.shape[0]
    b_up, b_low = _extremes(alpha, y, F, C, ext_i)
    i_up = ext_i[0]
    i_low = ext_i[1]
    F2 = F[i2]
    a2 = alpha[i2]
    best = -1
    if _in_low(a2, y[i2], C) and F2 > b_up + tol:
        best = i_up
    if _in_up(a2, y[i2], C) and F2 < b_low - tol:
        if best < 0 or (b_low - F2) > (F2 - b_up):
            best = i_low
    if best < 0:
        return 0
    counters[0] += 1
    if _take_step(best, i2, K, y, alpha, F, C, 1e-8, trace, counters):
        return 1
    start = randbelow(state, n)
    for off in range(n):
        i1 = (start + off) % n
        if 0.0 < alpha[i1] < C:
            counters[0] += 1
            if _take_step(i1, i2, K, y, alpha, F, C, 1e-8, trace, counters):
                return 1
    start = randbelow(state, n)
    for off in range(n):
        i1 = (start + off) % n
        counters[0] += 1
        if _take_step(i1, i2, K, y, alpha, F, C, 1e-8, trace, counters):
            return 1
    return 0


@njit(cache=True, nogil=True)
def _smo(K, y, C, tol, max_passes, max_iter, seed_state, trace):
    """Return (alpha, F, status, gap, attempts, updates, sweeps).  status 1 = hit max_iter."""
    n = y.shape[0]
    alpha = np.zeros(n)
    F = -y.copy()
    counters = np.zeros(2, np.int64)  # step attempts, accepted updates
    ext_i = np.zeros(2, np.int64)
    passes = 0
    sweeps = 0
    examine_all = True
    while passes < max_passes:
        changed = 0
        for i in range(n):
            if examine_all or (0.0 < alpha[i] < C):
                changed += _examine(i, K, y, alpha, F, C, tol, seed_state, trace, counters, ext_i)
            if counters[0] >= max_iter:
                b_up, b_low = _extremes(alpha, y, F, C, ext_i)
                return alpha, F, 1, b_low - b_up, counters[0], counters[1], sweeps
        sweeps += 1
        if examine_all:
            if changed == 0:
                passes += 1
            else:
                passes = 0
                examine_all = False
        elif changed == 0:
            examine_all = True
    # Polish: step the maximal violating pair until the optimality gap closes.
    while True:
        b_up, b_low = _extremes(alpha, y, F, C, ext_i)
        if b_low - b_up <= tol or ext_i[0] < 0 or ext_i[1] < 0:
            break
        if counters[0] >= max_iter:
            return alpha, F, 1, b_low - b_up, counters[0], counters[1], sweeps
        counters[0] += 1
        if not _take_step(ext_i[0], ext_i[1], K, y, alpha, F, C, 0.0, trace, counters):
            break
    b_up, b_low = _extremes(alpha, y, F, C, ext_i)
    return alpha, F, 0, b_low - b_up, counters[0], counters[1], sweeps


# --------------------------------------------------------------------------- models


@dataclass(frozen=True, eq=False)
class BinarySvmModel:
    """Decision ``f(x) = sum_j coef_j k(sv_j, x) + bias``; ``f > 0`` means the +1 side."""

    support_vectors: np.ndarray
    coef: np.ndarray
    bias: float
    kernel: KernelSpec
    alpha: np.ndarray
    support_index: np.ndarray
    C: float
    n_iter: int = 0
    gap: float = 0.0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def decision_function(self, X) -> np.ndarray:
        X = check_dimension(X, self.n_features)
        if self.coef.size == 0:
            return np.full(X.shape[0], self.bias)
        return kernel_matrix(self.kernel, X, self.support_vectors) @ self.coef + self.bias

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision_function(X) > 0, 1, -1).astype(np.int64)

    def to_dict(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "coef": self.coef.tolist(),
            "alpha": self.alpha.tolist(),
            "support_index": self.support_index.tolist(),
            "bias": self.bias,
            "kernel": self.kernel.to_dict(),
            "C": self.C,
            "n_iter": self.n_iter,
            "gap": self.gap,
        }

    @classmethod
    def from_dict(cls, d: dict, n_features: int) -> "BinarySvmModel":
        sv = np.array(d["support_vectors"], dtype=np.float64).reshape(-1, n_features)
        return cls(
            frozen(sv),
            frozen(np.array(d["coef"], dtype=np.float64)),
            float(d["bias"]),
            KernelSpec.from_dict(d["kernel"]),
            frozen(np.array(d["alpha"], dtype=np.float64)),
            frozen(np.array(d["support_index"], dtype=np.int64)),
            float(d["C"]),
            int(d.get("n_iter", 0)),
            float(d.get("gap", 0.0)),
        )


@dataclass(frozen=True)
class SmoResult:
    model: BinarySvmModel
    trace: np.ndarray  # rows (i1, i2, alpha_i1, alpha_i2) for every accepted update
    trace_complete: bool
    full_alpha: np.ndarray


def _signed(y) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise InputError("labels must be 1-D")
    if not np.all((y == 1) | (y == -1)):
        raise InputError("binary SVM labels must be -1 or +1")
    return y.astype(np.float64)


def fit_binary_smo(X, y, params: SvmParams | None = None, seed: int = 0, *, trace_capacity: int = 0) -> SmoResult:
    """Train one binary machine; ``y`` uses {-1, +1}.

    With ``trace_capacity > 0`` the first that many accepted pair updates are returned
    so callers can replay the optimization.
    """
    params = params or SvmParams()
    X = as_matrix(X)
    ys = _signed(y)
    if ys.shape[0] != X.shape[0]:
        raise InputError("label count does not match row count")
    if not ((ys > 0).any() and (ys < 0).any()):
        raise InputError("binary SVM needs both classes present")
    spec = params.kernel.resolved(X)
    K = np.ascontiguousarray(kernel_matrix(spec, X, X))
    trace = np.zeros((max(0, int(trace_capacity)), 4))
    C = float(params.C)
    alpha, F, status, gap, attempts, updates, sweeps = _smo(
        K, ys, C, float(params.tol), int(params.max_passes), int(params.max_iter),
        new_state(derive_seed(seed, "smo")), trace,
    )
    if status == 1:
        raise ConvergenceError(
            f"SMO did not converge within max_iter={params.max_iter} step attempts",
            {
                "gap": float(gap),
                "attempts": int(attempts),
                "updates": int(updates),
                "sweeps": int(sweeps),
                "n_support": int(np.sum(alpha > 0)),
                "dual_objective": dual_objective(alpha, ys, K),
            },
        )
    free = (alpha > 0) & (alpha < C)
    if free.any():
        bias = -float(np.mean(F[free]))
    else:
        ext = np.zeros(2, np.int64)
        b_up, b_low = _extremes(alpha, ys, F, C, ext)
        bias = -0.5 * (b_up + b_low)
    bias += 0.0  # no negative zero in payloads
    sv = np.nonzero(alpha > 0)[0]
    model = BinarySvmModel(
        frozen(X[sv]),
        frozen(alpha[sv] * ys[sv]),
        bias,
        spec,
        frozen(alpha[sv]),
        frozen(sv.astype(np.int64)),
        C,
        int(updates),
        float(gap),
    )
    n_rec = min(int(updates), trace.shape[0])
    return SmoResult(model, trace[:n_rec], n_rec == int(updates), frozen(alpha))


def dual_objective(alpha, y, K) -> float:
    """``sum(alpha) - 0.5 * sum_ij alpha_i alpha_j y_i y_j K_ij``."""
    ay = np.asarray(alpha) * np.asarray(y)
    return float(np.sum(alpha) - 0.5 * ay @ K @ ay)


@dataclass(frozen=True, eq=False)
class MulticlassSvmModel:
    pairs: tuple[tuple[tuple[int, int], BinarySvmModel], ...]
    n_classes: int
    n_features: int
    params: SvmParams
    kind: str = "svm"

    def pair_decisions(self, X) -> np.ndarray:
        X = check_dimension(X, self.n_features)
        return np.column_stack([m.decision_function(X) for _, m in self.pairs]) if self.pairs else np.empty((X.shape[0], 0))

    def predict(self, X) -> np.ndarray:
        return ovo_vote(self.pair_decisions(X), [p for p, _ in self.pairs], self.n_classes)

    def to_payload(self) -> dict:
        return {
            "n_classes": self.n_classes,
            "n_features": self.n_features,
            "params": {
                "C": self.params.C,
                "kernel": self.params.kernel.to_dict(),
                "tol": self.params.tol,
                "max_passes": self.params.max_passes,
                "max_iter": self.params.max_iter,
            },
            "pairs": [{"classes": list(p), "model": m.to_dict()} for p, m in self.pairs],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "MulticlassSvmModel":
        d = int(payload["n_features"])
        p = payload["params"]
        params = SvmParams(p["C"], KernelSpec.from_dict(p["kernel"]), p["tol"], p["max_passes"], p["max_iter"])
        pairs = tuple(
            ((int(e["classes"][0]), int(e["classes"][1])), BinarySvmModel.from_dict(e["model"], d))
            for e in payload["pairs"]
        )
        return cls(pairs, int(payload["n_classes"]), d, params)


def ovo_vote(decisions: np.ndarray, pairs, n_classes: int) -> np.ndarray:
    """Combine pairwise decisions; for pair (a, b) a positive value votes for b.

    Vote-count ties are settled by the summed |decision| of the votes each tied class
    won, then by the lowest class id.
    """
    decisions = np.asarray(decisions, dtype=np.float64)
    n = decisions.shape[0]
    votes = np.zeros((n, n_classes))
    margin = np.zeros((n, n_classes))
    rows = np.arange(n)
    for j, (a, b) in enumerate(pairs):
        f = decisions[:, j]
        winner = np.where(f > 0, b, a)
        votes[rows, winner] += 1
        margin[rows, winner] += np.abs(f)
    top = votes == votes.max(axis=1, keepdims=True)
    key = np.where(top, margin, -np.inf)
    return np.argmax(key, axis=1).astype(np.int64)


def fit_svm_ovo(X, y, params: SvmParams | None = None, seed: int = 0, n_classes: int | None = None,
                n_jobs: int | None = 1) -> MulticlassSvmModel:
    params = params or SvmParams()
    X = as_matrix(X)
    y = as_labels(y, n_rows=X.shape[0])
    if X.shape[0] == 0:
        raise InputError("empty training set")
    k = infer_n_classes(y, n_classes)
    present = [c for c in range(k) if np.any(y == c)]
    if len(present) < 2:
        raise InputError("SVM needs at least 2 classes in the training data")
    # Resolve 'scale' once on the full matrix so every pair machine shares gamma.
    spec = params.kernel.resolved(X)
    resolved = SvmParams(params.C, spec, params.tol, params.max_passes, params.max_iter)
    pairs = [(a, b) for i, a in enumerate(present) for b in present[i + 1:]]

    def fit_pair(pair):
        a, b = pair
        rows = np.nonzero((y == a) | (y == b))[0]
        ys = np.where(y[rows] == a, -1, 1)
        return fit_binary_smo(X[rows], ys, resolved, derive_seed(seed, a * k + b)).model

    models = parallel_map(fit_pair, pairs, n_jobs)
    return MulticlassSvmModel(tuple(zip(pairs, models)), k, X.shape[1], resolved)


def predict_svm(model: MulticlassSvmModel, X) -> np.ndarray:
    return model.predict(X)
