"""Cross-validated grid search and hard-voting ensembles."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .core import CtgError, InputError, as_labels, as_matrix, derive_seed, make_rng
from .evaluate import MetricsReport, metrics_report
from .registry import DISPLAY, MODEL_ORDER, SHORT_NAMES, fit_model, model_from_payload, resolve_kind


@dataclass(frozen=True)
class ParamGrid:
    """Ordered axes ``((name, (v1, v2, ...)), ...)``; points enumerate row-major."""

    axes: tuple[tuple[str, tuple[Any, ...]], ...]

    def __post_init__(self):
        axes = tuple((str(name), tuple(values)) for name, values in self.axes)
        if not axes:
            raise InputError("a grid needs at least one axis")
        names = [a for a, _ in axes]
        if len(set(names)) != len(names):
            raise InputError("grid axis names must be unique")
        for name, values in axes:
            if not values:
                raise InputError(f"grid axis {name!r} is empty")
        object.__setattr__(self, "axes", axes)

    @classmethod
    def from_dict(cls, d: dict) -> "ParamGrid":
        """Build from ``{name: [values]}``; axis order follows the mapping's order."""
        return cls(tuple((k, tuple(v) if isinstance(v, (list, tuple)) else (v,)) for k, v in d.items()))

    def to_dict(self) -> dict:
        return {name: list(values) for name, values in self.axes}

    @property
    def size(self) -> int:
        out = 1
        for _, values in self.axes:
            out *= len(values)
        return out

    def points(self) -> list[dict]:
        names = [n for n, _ in self.axes]
        return [dict(zip(names, combo)) for combo in itertools.product(*(v for _, v in self.axes))]


@dataclass(frozen=True)
class CvConfig:
    folds: int = 5
    stratified: bool = True
    seed_tag: str = "cv"

    def __post_init__(self):
        if self.folds < 2:
            raise InputError("cross-validation needs folds >= 2")


@dataclass(frozen=True)
class GridPoint:
    params: dict
    fold_scores: tuple[float, ...]
    mean: float | None
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {"params": self.params, "fold_scores": list(self.fold_scores), "mean": self.mean, "error": self.error}


@dataclass(frozen=True)
class GridResult:
    kind: str
    grid: ParamGrid
    table: tuple[GridPoint, ...]
    best_index: int
    folds: tuple[tuple[np.ndarray, np.ndarray], ...] = field(repr=False)
    model: Any = field(default=None, repr=False)

    @property
    def best_params(self) -> dict:
        return self.table[self.best_index].params

    @property
    def best_mean(self) -> float:
        return self.table[self.best_index].mean

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "grid": self.grid.to_dict(),
            "best_index": self.best_index,
            "best_params": self.best_params,
            "best_mean": self.best_mean,
            "table": [p.to_dict() for p in self.table],
            "fold_sizes": [int(v.size) for _, v in self.folds],
        }


def kfold_indices(y, cfg: CvConfig = CvConfig(), seed: int = 0) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded k-fold partition as sorted (train, validation) index arrays.

    Stratified mode shuffles each class, lays the classes end to end and deals rows
    to folds round-robin, so per-class and total fold sizes differ by at most one.
    """
    y = as_labels(y)
    n = y.shape[0]
    folds = cfg.folds
    if folds < 2:
        raise InputError("cross-validation needs folds >= 2")
    if n < folds:
        raise InputError(f"cannot split {n} rows into {folds} folds")
    rng = make_rng(derive_seed(seed, cfg.seed_tag))
    if cfg.stratified:
        order = []
        for c in np.unique(y):
            members = np.nonzero(y == c)[0]
            if members.size < folds:
                raise InputError(f"class {int(c)} has {members.size} rows, fewer than {folds} folds")
            order.append(members[rng.permutation(members.size)])
        order = np.concatenate(order)
    else:
        order = rng.permutation(n)
    assign = np.empty(n, dtype=np.int64)
    assign[order] = np.arange(n) % folds
    out = []
    for j in range(folds):
        val = np.nonzero(assign == j)[0]
        train = np.nonzero(assign != j)[0]
        out.append((train, val))
    return out


def grid_search(kind: str, grid: ParamGrid, X, y, cfg: CvConfig = CvConfig(), seed: int = 0,
                n_classes: int | None = None, n_jobs: int | None = 1, refit: bool = True) -> GridResult:
    """Score every grid point by mean fold accuracy; the first maximizer wins.

    All points share one fold assignment and the same per-fold fit seeds, so the
    comparison between points is paired.  With ``refit`` the winner is retrained on
    all of ``X``.
    """
    kind = resolve_kind(kind)
    X = as_matrix(X)
    y = as_labels(y, n_rows=X.shape[0])
    k = n_classes if n_classes is not None else max(2, int(y.max()) + 1)
    folds = kfold_indices(y, cfg, seed)
    table = []
    for params in grid.points():
        scores = []
        error = None
        for j, (tr, va) in enumerate(folds):
            try:
                model = fit_model(kind, params, X[tr], y[tr], derive_seed(seed, j), k, n_jobs)
                scores.append(100.0 * float(np.mean(model.predict(X[va]) == y[va])))
            except Exception as exc:  # a failing point is recorded, not fatal
                error = f"fold {j}: {type(exc).__name__}: {exc}"
                break
        if error is None:
            table.append(GridPoint(dict(params), tuple(scores), float(np.mean(scores))))
        else:
            table.append(GridPoint(dict(params), tuple(scores), None, error))
    ok = [i for i, p in enumerate(table) if not p.failed]
    if not ok:
        reasons = "; ".join(f"{p.params}: {p.error}" for p in table)
        raise GridFailure(f"every grid point failed for {kind}: {reasons}", table)
    best = ok[0]
    for i in ok[1:]:
        if table[i].mean > table[best].mean:
            best = i
    model = None
    if refit:
        model = fit_model(kind, table[best].params, X, y, derive_seed(seed, "refit"), k, n_jobs)
    return GridResult(kind, grid, tuple(table), best, tuple(folds), model)


class GridFailure(CtgError, RuntimeError):
    """Every point of a grid failed; ``table`` keeps the per-point reasons."""

    def __init__(self, message: str, table):
        self.table = tuple(table)
        super().__init__(message)


# --------------------------------------------------------------------------- voting


def hard_vote(member_predictions: Sequence, n_classes: int | None = None) -> np.ndarray:
    """Row-wise majority label; count ties go to the lowest class id."""
    preds = [as_labels(p) for p in member_predictions]
    if len(preds) < 2:
        raise InputError("hard voting needs at least 2 members")
    n = preds[0].shape[0]
    if any(p.shape[0] != n for p in preds):
        raise InputError("member predictions differ in length")
    P = np.stack(preds, axis=1)
    k = n_classes if n_classes is not None else (int(P.max()) + 1 if P.size else 1)
    counts = np.zeros((n, k), dtype=np.int64)
    rows = np.arange(n)
    for j in range(P.shape[1]):
        np.add.at(counts, (rows, P[:, j]), 1)
    return np.argmax(counts, axis=1).astype(np.int64)


@dataclass(frozen=True, eq=False)
class VotingModel:
    members: tuple
    names: tuple[str, ...] = ()
    kind: str = "voting"

    def __post_init__(self):
        if len(self.members) < 2:
            raise InputError("a voting ensemble needs at least 2 members")
        dims = {m.n_features for m in self.members}
        if len(dims) != 1:
            raise InputError("ensemble members were trained on different feature spaces")
        if not self.names:
            object.__setattr__(self, "names", tuple(m.kind for m in self.members))

    @property
    def n_features(self) -> int:
        return self.members[0].n_features

    @property
    def n_classes(self) -> int:
        return max(m.n_classes for m in self.members)

    def member_predictions(self, X) -> list[np.ndarray]:
        return [m.predict(X) for m in self.members]

    def predict(self, X) -> np.ndarray:
        return hard_vote(self.member_predictions(X), self.n_classes)

    def to_payload(self) -> dict:
        return {
            "names": list(self.names),
            "members": [{"model_kind": m.kind, "payload": m.to_payload()} for m in self.members],
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "VotingModel":
        members = tuple(model_from_payload(e["model_kind"], e["payload"]) for e in payload["members"])
        return cls(members, tuple(payload.get("names", ())))


def fit_voting(members: Sequence, names: Sequence[str] = ()) -> VotingModel:
    """Wrap already-fitted members; nothing is retrained."""
    return VotingModel(tuple(members), tuple(names))


# --------------------------------------------------------------------------- defaults

DEFAULT_GRIDS: dict[str, dict] = {
    "svm": {"C": [1, 10, 100], "kernel": ["rbf"], "gamma": ["scale", 0.01, 0.1]},
    "dt": {"max_depth": [None, 10, 20], "criterion": ["gini", "entropy"], "min_samples_leaf": [1, 5]},
    "rf": {"n_estimators": [100, 300], "max_depth": [None, 20], "max_features": ["sqrt"]},
    "et": {"n_estimators": [100, 300], "max_depth": [None, 20], "max_features": ["sqrt"]},
    "xgb": {"n_rounds": [100, 300], "learning_rate": [0.1, 0.3], "max_depth": [3, 6]},
    "lgbm": {"n_rounds": [100, 300], "learning_rate": [0.1], "max_leaves": [31, 63]},
    "knn": {"k": [3, 5, 7, 9], "metric": ["euclidean", "manhattan"], "weights": ["uniform", "inverse_distance"]},
}

DEFAULT_ENSEMBLES: tuple[tuple[str, ...], ...] = (
    ("lgbm", "svm"),
    ("xgb", "svm"),
    ("et", "svm"),
    ("rf", "svm"),
    ("dt", "svm"),
    ("et", "lgbm"),
    ("dt", "et"),
    ("xgb", "et"),
    ("xgb", "lgbm"),
    ("svm", "et", "rf"),
)
PROPOSED = ("et", "svm")


def default_grid(name: str) -> ParamGrid:
    short = name if name in DEFAULT_GRIDS else {v: k for k, v in SHORT_NAMES.items()}.get(name)
    if short is None:
        raise InputError(f"no default grid for {name!r}")
    return ParamGrid.from_dict(DEFAULT_GRIDS[short])


def ensemble_label(members: Sequence[str]) -> str:
    return "+".join(DISPLAY[m] for m in members)


@dataclass(frozen=True)
class ResultRow:
    name: str
    members: tuple[str, ...]
    proposed: bool
    report: MetricsReport
    predictions: np.ndarray = field(repr=False)

    @property
    def is_ensemble(self) -> bool:
        return len(self.members) > 1


def run_all_combinations(models: dict, X_test, y_test, ensembles=DEFAULT_ENSEMBLES,
                         n_classes: int = 3) -> list[ResultRow]:
    """Score each single model (in the fixed display order) and then every ensemble.

    Member predictions are computed once and reused by every ensemble that contains
    the member.
    """
    X_test = as_matrix(X_test)
    y_test = as_labels(y_test, n_rows=X_test.shape[0])
    missing = [m for group in ensembles for m in group if m not in models]
    if missing:
        raise InputError(f"ensembles reference untrained models: {', '.join(sorted(set(missing)))}")
    preds = {name: models[name].predict(X_test) for name in models}
    rows = []
    for name in [m for m in MODEL_ORDER if m in models] + [m for m in models if m not in MODEL_ORDER]:
        p = preds[name]
        rows.append(ResultRow(DISPLAY.get(name, name), (name,), False, metrics_report(y_test, p, n_classes), p))
    for group in ensembles:
        group = tuple(group)
        if len(group) < 2:
            raise InputError("an ensemble needs at least 2 members")
        p = hard_vote([preds[m] for m in group], n_classes)
        proposed = sorted(group) == sorted(PROPOSED)
        rows.append(ResultRow(ensemble_label(group), group, proposed, metrics_report(y_test, p, n_classes), p))
    return rows
