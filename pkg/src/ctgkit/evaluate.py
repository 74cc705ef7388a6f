"""Confusion matrices and percentage metrics; every reported number is computed here."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import ROUND_DOWN, ROUND_HALF_UP, Decimal

import numpy as np

from .core import CLASS_NAMES, InputError, as_labels


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """``counts[i, j]`` = rows of true class ``i`` predicted as ``j``."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise InputError("confusion matrix must be square")
        if (c < 0).any():
            raise InputError("confusion counts must be non-negative")
        c = c.copy()
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def errors(self) -> int:
        return self.total - int(np.trace(self.counts))

    def __eq__(self, other):
        return isinstance(other, ConfusionMatrix) and np.array_equal(self.counts, other.counts)

    __hash__ = None

    def to_list(self) -> list[list[int]]:
        return self.counts.tolist()


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    undefined: bool = False  # some ratio was 0/0 and was set to 0


@dataclass(frozen=True)
class Averages:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    per_class: tuple[ClassMetrics, ...]
    macro: Averages
    weighted: Averages
    confusion: ConfusionMatrix = field(compare=False)

    @property
    def warnings(self) -> list[str]:
        return [f"class {c}: 0/0 metric set to 0" for c, m in enumerate(self.per_class) if m.undefined]

    def to_dict(self, class_names=CLASS_NAMES) -> dict:
        names = list(class_names) + [str(c) for c in range(len(class_names), len(self.per_class))]
        return {
            "accuracy": self.accuracy,
            "per_class": {
                names[c]: {"precision": m.precision, "recall": m.recall, "f1": m.f1, "support": m.support}
                for c, m in enumerate(self.per_class)
            },
            "macro": vars(self.macro),
            "weighted": vars(self.weighted),
            "confusion": self.confusion.to_list(),
            "errors": self.confusion.errors,
            "warnings": self.warnings,
        }


def confusion_matrix(y_true, y_pred, n_classes: int = 3) -> ConfusionMatrix:
    yt = as_labels(y_true)
    yp = as_labels(y_pred)
    if yt.shape[0] != yp.shape[0]:
        raise InputError(f"length mismatch: {yt.shape[0]} true vs {yp.shape[0]} predicted labels")
    if yt.size and max(yt.max(), yp.max()) >= n_classes:
        raise InputError(f"label out of range for {n_classes} classes")
    counts = np.bincount(yt * n_classes + yp, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def _nonempty(cm: ConfusionMatrix) -> None:
    if cm.total == 0:
        raise InputError("metrics are undefined for an empty confusion matrix")


def accuracy(cm: ConfusionMatrix) -> float:
    _nonempty(cm)
    return 100.0 * float(np.trace(cm.counts)) / cm.total


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (0.0, True) if den == 0 else (100.0 * num / den, False)


def per_class_metrics(cm: ConfusionMatrix) -> tuple[ClassMetrics, ...]:
    _nonempty(cm)
    out = []
    for c in range(cm.n_classes):
        tp = int(cm.counts[c, c])
        col = int(cm.counts[:, c].sum())
        row = int(cm.counts[c, :].sum())
        p, bad_p = _ratio(tp, col)
        r, bad_r = _ratio(tp, row)
        f, bad_f = (0.0, True) if p + r == 0 else (2.0 * p * r / (p + r), False)
        out.append(ClassMetrics(p, r, f, row, bad_p or bad_r or bad_f))
    return tuple(out)


def macro_avg(per_class) -> Averages:
    per_class = list(per_class)
    if not per_class:
        raise InputError("no classes to average")
    k = len(per_class)
    return Averages(
        sum(m.precision for m in per_class) / k,
        sum(m.recall for m in per_class) / k,
        sum(m.f1 for m in per_class) / k,
    )


def weighted_avg(per_class) -> Averages:
    per_class = list(per_class)
    total = sum(m.support for m in per_class)
    if total == 0:
        raise InputError("weighted average needs positive total support")
    return Averages(
        sum(m.precision * m.support for m in per_class) / total,
        sum(m.recall * m.support for m in per_class) / total,
        sum(m.f1 * m.support for m in per_class) / total,
    )


def metrics_report(y_true, y_pred, n_classes: int = 3) -> MetricsReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    pcs = per_class_metrics(cm)
    return MetricsReport(accuracy(cm), pcs, macro_avg(pcs), weighted_avg(pcs), cm)


def one_vs_rest_accuracy(cm: ConfusionMatrix) -> float:
    """Accuracy from pooled one-vs-rest counts: 100 (ΣTP + ΣTN) / (ΣTP + ΣTN + ΣFP + ΣFN).

    This binary-style pooling counts each row once per class, so for three or more
    classes it differs from ``accuracy``; it is kept for the report appendix only.
    """
    _nonempty(cm)
    n = cm.total
    tp = np.diag(cm.counts).astype(float)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    tn = n - tp - fp - fn
    return 100.0 * float(tp.sum() + tn.sum()) / float(tp.sum() + tn.sum() + fp.sum() + fn.sum())


def truncate2(value: float) -> str:
    """Two decimals, truncated toward zero (how the reference table prints accuracies)."""
    d = Decimal(repr(float(value))).quantize(Decimal("0.01"), rounding=ROUND_DOWN)
    return f"{d:.2f}"


def whole_percent(value: float) -> int:
    """Nearest whole percent, halves rounded up."""
    if not math.isfinite(value):
        raise InputError("cannot round a non-finite value")
    return int(Decimal(repr(float(value))).quantize(Decimal("1"), rounding=ROUND_HALF_UP))


def misclassified(cm: ConfusionMatrix) -> int:
    return cm.errors
