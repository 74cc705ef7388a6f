"""Map model kinds and short names to parameter builders, fit functions and payload readers.

Hyperparameters travel as flat JSON-friendly dicts (the shape used by grids and
config files); :func:`build_params` turns one into the typed parameter object.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np

from .boosting import LGBM_DEFAULTS, XGB_DEFAULTS, GbtModel, GbtParams, fit_gbt
from .core import InputError
from .neighbors import KnnModel, KnnParams, fit_knn
from .svm import KernelSpec, MulticlassSvmModel, SvmParams, fit_svm_ovo
from .trees import (
    DecisionTreeModel,
    ForestModel,
    TreeParams,
    fit_extra_trees,
    fit_random_forest,
    fit_tree,
    forest_params,
)

SHORT_NAMES = {
    "svm": "svm",
    "xgb": "gbt_exact",
    "lgbm": "gbt_hist",
    "dt": "decision_tree",
    "rf": "random_forest",
    "et": "extra_trees",
    "knn": "knn",
}
# Display labels used in result tables.
DISPLAY = {"svm": "SVM", "xgb": "XGB", "lgbm": "LGBM", "dt": "DT", "rf": "RF", "et": "ET", "knn": "KNN"}
MODEL_ORDER = ("svm", "xgb", "lgbm", "dt", "rf", "et", "knn")


def resolve_kind(name: str) -> str:
    """Accept a short name (``et``) or a kind (``extra_trees``); return the kind."""
    if name in SHORT_NAMES:
        return SHORT_NAMES[name]
    if name in SHORT_NAMES.values():
        return name
    raise InputError(f"unknown model {name!r}; choose from {', '.join(MODEL_ORDER)}")


def short_name(kind: str) -> str:
    for short, k in SHORT_NAMES.items():
        if k == kind:
            return short
    raise InputError(f"unknown model kind {kind!r}")


def _check_keys(kind: str, params: dict, allowed) -> None:
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise InputError(f"unknown parameter(s) for {kind}: {', '.join(unknown)}")


_TREE_KEYS = ("max_depth", "min_samples_split", "min_samples_leaf", "criterion", "max_features", "splitter")
_GBT_KEYS = tuple(f for f in GbtParams.__dataclass_fields__ if f != "variant")


def build_params(kind: str, params: dict | None = None):
    """Turn a flat grid point into the typed parameter object for ``kind`` (short names accepted)."""
    kind = resolve_kind(kind)
    params = dict(params or {})
    if kind == "decision_tree":
        _check_keys(kind, params, _TREE_KEYS)
        return TreeParams(**params)
    if kind in ("random_forest", "extra_trees"):
        _check_keys(kind, params, _TREE_KEYS + ("n_estimators", "bootstrap"))
        return forest_params(kind=kind, **params)
    if kind == "svm":
        _check_keys(kind, params, ("C", "kernel", "gamma", "degree", "coef0", "tol", "max_passes", "max_iter"))
        spec = KernelSpec(
            params.pop("kernel", "rbf"),
            params.pop("gamma", "scale"),
            int(params.pop("degree", 3)),
            float(params.pop("coef0", 0.0)),
        )
        return SvmParams(kernel=spec, **params)
    if kind in ("gbt_exact", "gbt_hist"):
        _check_keys(kind, params, _GBT_KEYS)
        return replace(XGB_DEFAULTS if kind == "gbt_exact" else LGBM_DEFAULTS, **params)
    if kind == "knn":
        _check_keys(kind, params, ("k", "metric", "weights"))
        return KnnParams(**params)
    raise InputError(f"unknown model kind {kind!r}")


def fit_model(kind: str, params: dict | None, X, y, seed: int = 0, n_classes: int | None = None,
              n_jobs: int | None = 1):
    kind = resolve_kind(kind)
    p = build_params(kind, params)
    if kind == "decision_tree":
        return fit_tree(X, y, p, seed, n_classes)
    if kind == "random_forest":
        return fit_random_forest(X, y, p, seed, n_classes, n_jobs)
    if kind == "extra_trees":
        return fit_extra_trees(X, y, p, seed, n_classes, n_jobs)
    if kind == "svm":
        return fit_svm_ovo(X, y, p, seed, n_classes, n_jobs)
    if kind in ("gbt_exact", "gbt_hist"):
        return fit_gbt(X, y, p, seed, n_classes)
    return fit_knn(X, y, p, n_classes)


def model_from_payload(kind: str, payload: dict):
    if kind == "decision_tree":
        return DecisionTreeModel.from_payload(payload)
    if kind in ("random_forest", "extra_trees"):
        return ForestModel.from_payload(payload, kind)
    if kind == "svm":
        return MulticlassSvmModel.from_payload(payload)
    if kind in ("gbt_exact", "gbt_hist"):
        model = GbtModel.from_payload(payload)
        if model.kind != kind:
            raise InputError(f"payload variant does not match kind {kind!r}")
        return model
    if kind == "knn":
        return KnnModel.from_payload(payload)
    if kind == "voting":
        from .select import VotingModel

        return VotingModel.from_payload(payload)
    raise InputError(f"unknown model kind {kind!r}")


def predict(model, X) -> np.ndarray:
    return model.predict(X)
