"""Imputation, outlier rejection, z-score standardization, random oversampling and splitting.

Two orderings are supported.  ``paper_faithful`` oversamples and standardizes the
whole table before the 70/30 split, which copies duplicated minority rows into
both sides of the split; test scores in that mode are optimistic.
``leakage_safe`` splits first and fits every statistic on the training side only.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Literal

import numpy as np

from .core import N_CLASSES, InputError, derive_seed, make_rng
from .ingest import Dataset

Mode = Literal["paper_faithful", "leakage_safe"]


@dataclass(frozen=True)
class Standardizer:
    means: np.ndarray
    stds: np.ndarray

    @property
    def n_features(self) -> int:
        return self.means.shape[0]

    def to_dict(self) -> dict:
        return {"means": [float(v) for v in self.means], "stds": [float(v) for v in self.stds]}

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(np.array(d["means"], dtype=float), np.array(d["stds"], dtype=float))


@dataclass(frozen=True)
class PipelineConfig:
    mode: Mode = "paper_faithful"
    impute_strategy: Literal["median", "mean"] = "median"
    outlier_enabled: bool = False
    outlier_k: float = 3.0
    oversample_enabled: bool = True
    train_fraction: float = 0.7
    stratify_split: bool = False
    master_seed: int = 0

    def __post_init__(self):
        if self.mode not in ("paper_faithful", "leakage_safe"):
            raise InputError(f"unknown mode {self.mode!r}")
        if self.impute_strategy not in ("median", "mean"):
            raise InputError(f"unknown impute strategy {self.impute_strategy!r}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InputError("train_fraction must lie in (0, 1)")
        if self.outlier_enabled and not self.outlier_k > 0:
            raise InputError("outlier_k must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class StepRecord:
    step: str
    rows_before: int
    rows_after: int
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"step": self.step, "rows_before": self.rows_before, "rows_after": self.rows_after, **self.detail}


@dataclass(frozen=True)
class PreparedData:
    train: Dataset
    test: Dataset
    standardizer: Standardizer
    log: tuple[StepRecord, ...]
    mode: Mode
    # Row indices into the post-oversampling table (paper_faithful) or the
    # original table (leakage_safe).
    train_index: np.ndarray
    test_index: np.ndarray


@dataclass(frozen=True)
class OutlierReport:
    removed_rows: tuple[int, ...]
    triggers: dict[int, tuple[str, ...]]


def impute_missing(X, strategy: str = "median", feature_names=None, stats=None) -> np.ndarray:
    """Replace NaN cells with the column median or mean of the observed cells.

    ``stats`` (per-column fill values) may be passed to impute with statistics
    computed elsewhere, e.g. on a training split.
    """
    X = np.array(X, dtype=np.float64)
    if X.ndim != 2:
        raise InputError("X must be 2-D")
    if stats is None:
        stats = column_fill_values(X, strategy, feature_names)
    mask = np.isnan(X)
    if mask.any():
        X[mask] = np.take(stats, np.nonzero(mask)[1])
    return X


def column_fill_values(X, strategy: str = "median", feature_names=None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if strategy not in ("median", "mean"):
        raise InputError(f"unknown impute strategy {strategy!r}")
    out = np.empty(X.shape[1])
    for j in range(X.shape[1]):
        col = X[:, j]
        observed = col[~np.isnan(col)]
        if observed.size == 0:
            name = feature_names[j] if feature_names is not None else str(j)
            raise InputError(f"column {name!r} has no observed values to impute from")
        out[j] = np.median(observed) if strategy == "median" else observed.mean()
    return out


def reject_outliers(ds: Dataset, k: float = 3.0) -> tuple[Dataset, OutlierReport]:
    """Drop every row with some feature farther than ``k`` population SDs from its mean.

    Statistics come from ``ds`` itself.  Zero-variance columns never trigger.
    """
    if not k > 0:
        raise InputError("outlier multiplier k must be positive")
    if ds.n_rows == 0:
        raise InputError("cannot reject outliers from an empty dataset")
    X = ds.X
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    dev = np.abs(X - mu)
    flags = (dev > k * sd) & (sd > 0)
    hit = flags.any(axis=1)
    if hit.all():
        raise InputError("degenerate outlier threshold: every row would be removed")
    removed = np.nonzero(hit)[0]
    triggers = {
        int(r): tuple(ds.feature_names[j] for j in np.nonzero(flags[r])[0]) for r in removed
    }
    kept = ds.subset(np.nonzero(~hit)[0])
    return kept, OutlierReport(tuple(int(r) for r in removed), triggers)


def fit_standardizer(X) -> Standardizer:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise InputError("cannot fit a standardizer on an empty matrix")
    means = X.mean(axis=0)
    stds = X.std(axis=0)  # population convention (ddof=0)
    return Standardizer(means, stds)


def transform(std: Standardizer, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != std.n_features:
        raise InputError(
            f"dimension mismatch: standardizer has {std.n_features} columns, got {X.shape[-1]}"
        )
    safe = np.where(std.stds > 0, std.stds, 1.0)
    out = (X - std.means) / safe
    out[:, std.stds == 0] = 0.0
    return out


def random_oversample(ds: Dataset, seed: int) -> Dataset:
    """Duplicate minority-class rows (uniformly, with replacement) up to the majority count.

    Output keeps every original row in order, followed by the duplicates grouped by
    ascending class id.
    """
    if ds.n_rows == 0:
        raise InputError("cannot oversample an empty dataset")
    counts = np.bincount(ds.y, minlength=N_CLASSES)
    target = counts.max()
    extra = [np.arange(ds.n_rows)]
    for c in range(counts.size):
        need = target - counts[c]
        if counts[c] == 0 or need == 0:
            continue
        members = np.nonzero(ds.y == c)[0]
        rng = make_rng(derive_seed(seed, c))
        extra.append(members[rng.integers(0, members.size, size=need)])
    return ds.subset(np.concatenate(extra))


def _train_size(n: int, fraction: float) -> int:
    return math.floor(n * Fraction(repr(float(fraction))))


def train_test_split(
    n: int,
    train_fraction: float = 0.7,
    seed: int = 0,
    stratify: bool = False,
    y=None,
) -> tuple[np.ndarray, np.ndarray]:
    """Seeded permutation split; ``floor(n * fraction)`` rows go to train.

    With ``stratify`` the floor rule applies inside every class and the remainders
    go to test.
    """
    if not 0.0 < train_fraction < 1.0:
        raise InputError("train_fraction must lie in (0, 1)")
    if n < 2:
        raise InputError("need at least 2 rows to split")
    rng = make_rng(seed)
    if not stratify:
        perm = rng.permutation(n)
        k = _train_size(n, train_fraction)
        train, test = perm[:k], perm[k:]
    else:
        if y is None:
            raise InputError("stratified split needs labels")
        y = np.asarray(y)
        if y.shape[0] != n:
            raise InputError("label vector length does not match n")
        train_parts, test_parts = [], []
        for c in np.unique(y):
            members = np.nonzero(y == c)[0]
            members = members[rng.permutation(members.size)]
            k = _train_size(members.size, train_fraction)
            train_parts.append(members[:k])
            test_parts.append(members[k:])
        train = np.concatenate(train_parts)
        test = np.concatenate(test_parts)
        # Interleave classes so downstream order does not encode the label.
        train = train[rng.permutation(train.size)]
        test = test[rng.permutation(test.size)]
    if train.size == 0 or test.size == 0:
        raise InputError("split leaves one side empty")
    return train.astype(np.int64), test.astype(np.int64)


def run_pipeline(config: PipelineConfig, ds: Dataset) -> PreparedData:
    if config.mode == "paper_faithful":
        return _paper_faithful(config, ds)
    return _leakage_safe(config, ds)


def _paper_faithful(config: PipelineConfig, ds: Dataset) -> PreparedData:
    log: list[StepRecord] = []
    seed = config.master_seed
    n0 = ds.n_rows
    X = impute_missing(ds.X, config.impute_strategy, ds.feature_names)
    ds = Dataset(X, ds.y, ds.feature_names, ds.source)
    log.append(StepRecord("impute", n0, ds.n_rows, {"strategy": config.impute_strategy}))
    if config.outlier_enabled:
        n_before = ds.n_rows
        ds, report = reject_outliers(ds, config.outlier_k)
        log.append(
            StepRecord("reject_outliers", n_before, ds.n_rows, {"k": config.outlier_k, "removed": len(report.removed_rows)})
        )
    if config.oversample_enabled:
        n_before = ds.n_rows
        ds = random_oversample(ds, derive_seed(seed, "oversample"))
        log.append(StepRecord("oversample", n_before, ds.n_rows, {"class_counts": _counts(ds.y)}))
    std = fit_standardizer(ds.X)
    Z = transform(std, ds.X)
    log.append(StepRecord("standardize", ds.n_rows, ds.n_rows, {"fitted_on": "all rows"}))
    tr, te = train_test_split(
        ds.n_rows, config.train_fraction, derive_seed(seed, "split"), config.stratify_split, ds.y
    )
    log.append(
        StepRecord(
            "split",
            ds.n_rows,
            ds.n_rows,
            {"train_rows": int(tr.size), "test_rows": int(te.size), "stratified": config.stratify_split},
        )
    )
    full = Dataset(Z, ds.y, ds.feature_names, ds.source)
    return PreparedData(
        full.subset(tr), full.subset(te), std, tuple(log), config.mode, tr, te
    )


def _leakage_safe(config: PipelineConfig, ds: Dataset) -> PreparedData:
    log: list[StepRecord] = []
    seed = config.master_seed
    n0 = ds.n_rows
    tr, te = train_test_split(
        n0, config.train_fraction, derive_seed(seed, "split"), config.stratify_split, ds.y
    )
    log.append(
        StepRecord(
            "split",
            n0,
            n0,
            {"train_rows": int(tr.size), "test_rows": int(te.size), "stratified": config.stratify_split},
        )
    )
    fill = column_fill_values(ds.X[tr], config.impute_strategy, ds.feature_names)
    X = impute_missing(ds.X, config.impute_strategy, stats=fill)
    ds = Dataset(X, ds.y, ds.feature_names, ds.source)
    train, test = ds.subset(tr), ds.subset(te)
    log.append(StepRecord("impute", n0, n0, {"strategy": config.impute_strategy, "fitted_on": "train"}))
    if config.outlier_enabled:
        n_before = train.n_rows
        train, report = reject_outliers(train, config.outlier_k)
        log.append(
            StepRecord(
                "reject_outliers",
                n_before,
                train.n_rows,
                {"k": config.outlier_k, "side": "train", "removed": len(report.removed_rows)},
            )
        )
    if config.oversample_enabled:
        n_before = train.n_rows
        train = random_oversample(train, derive_seed(seed, "oversample"))
        log.append(
            StepRecord("oversample", n_before, train.n_rows, {"class_counts": _counts(train.y), "side": "train"})
        )
    std = fit_standardizer(train.X)
    log.append(StepRecord("standardize", train.n_rows, train.n_rows, {"fitted_on": "train"}))
    train = Dataset(transform(std, train.X), train.y, train.feature_names, ds.source)
    test = Dataset(transform(std, test.X), test.y, test.feature_names, ds.source)
    return PreparedData(train, test, std, tuple(log), config.mode, tr, te)


def _counts(y) -> list[int]:
    return [int(v) for v in np.bincount(y, minlength=N_CLASSES)]
