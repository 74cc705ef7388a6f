"""Loading and validating the cardiotocography (CTG) table."""

from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import CLASS_NAMES, N_CLASSES, InputError, LabelError, ParseError, SchemaError


def normalize_header(name: str) -> str:
    return re.sub(r"[^0-9a-z]", "", name.strip().lower())


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    description: str
    expected_range: tuple[float, float]
    aliases: tuple[str, ...] = ()


@dataclass(frozen=True)
class FeatureSchema:
    features: tuple[FeatureSpec, ...]
    target: str = "NSP"
    target_aliases: tuple[str, ...] = ("fetal_health", "fetal_state")
    dropped: tuple[str, ...] = ("CLASS",)

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(names) != 21:
            raise InputError(f"schema must define 21 features, got {len(names)}")
        if len(set(map(normalize_header, names))) != len(names):
            raise InputError("feature names must be unique")

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def ranges(self) -> np.ndarray:
        return np.array([f.expected_range for f in self.features], dtype=float)


# Ranges as printed for the UCI attributes; MSTV is printed reversed, Tendency as "1".
CTG_SCHEMA = FeatureSchema(
    (
        FeatureSpec("LB", "FHR baseline (beats per minute)", (106, 160), ("baseline value",)),
        FeatureSpec("AC", "Accelerations per second", (0, 0.019), ("accelerations",)),
        FeatureSpec("FM", "Fetal movements per second", (0, 0.481), ("fetal_movement",)),
        FeatureSpec("UC", "Uterine contractions per second", (0, 0.015), ("uterine_contractions",)),
        FeatureSpec("DL", "Light decelerations per second", (0, 0.015), ("light_decelerations",)),
        FeatureSpec("DS", "Severe decelerations per second", (0, 0.001), ("severe_decelerations",)),
        FeatureSpec(
            "DP",
            "Prolonged decelerations per second",
            (0, 0.005),
            ("prolongued_decelerations", "prolonged_decelerations"),
        ),
        FeatureSpec(
            "ASTV",
            "Percentage of time with abnormal short-term variability",
            (12, 87),
            ("abnormal_short_term_variability",),
        ),
        FeatureSpec(
            "MSTV",
            "Mean value of short-term variability",
            (0.2, 7),
            ("mean_value_of_short_term_variability",),
        ),
        FeatureSpec(
            "ALTV",
            "Percentage of time with abnormal long-term variability",
            (0, 91),
            ("percentage_of_time_with_abnormal_long_term_variability",),
        ),
        FeatureSpec(
            "MLTV",
            "Mean value of long-term variability",
            (0, 50.7),
            ("mean_value_of_long_term_variability",),
        ),
        FeatureSpec("Width", "Width of FHR histogram", (3, 180), ("histogram_width",)),
        FeatureSpec("Min", "Minimum of FHR histogram", (50, 159), ("histogram_min",)),
        FeatureSpec("Max", "Maximum of FHR histogram", (122, 238), ("histogram_max",)),
        FeatureSpec("Nmax", "Histogram peaks", (0, 18), ("histogram_number_of_peaks",)),
        FeatureSpec("Nzeros", "Histogram zeros", (0, 10), ("histogram_number_of_zeroes",)),
        FeatureSpec("Mode", "Histogram mode", (60, 187), ("histogram_mode",)),
        FeatureSpec("Mean", "Histogram mean", (73, 182), ("histogram_mean",)),
        FeatureSpec("Median", "Histogram median", (77, 186), ("histogram_median",)),
        FeatureSpec("Variance", "Histogram variance", (0, 269), ("histogram_variance",)),
        FeatureSpec("Tendency", "Histogram tendency", (-1, 1), ("histogram_tendency",)),
    )
)


@dataclass(frozen=True)
class Dataset:
    """Feature matrix, zero-based labels and provenance.

    ``X`` may hold NaN for blank CSV cells until the preprocessing step imputes them.
    """

    X: np.ndarray
    y: np.ndarray
    feature_names: tuple[str, ...]
    source: str = "<memory>"
    notes: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(-1, len(self.feature_names))
        y = np.asarray(self.y, dtype=np.int64)
        if X.shape[0] != y.shape[0]:
            raise InputError(f"X has {X.shape[0]} rows but y has {y.shape[0]} labels")
        if X.shape[1] != len(self.feature_names):
            raise InputError("feature_names does not match X columns")
        if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
            raise LabelError(f"labels must lie in 0..{N_CLASSES - 1}")
        X = np.ascontiguousarray(X)
        y = np.ascontiguousarray(y)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))

    @property
    def n_rows(self) -> int:
        return self.X.shape[0]

    def subset(self, rows, source: str | None = None) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        return Dataset(self.X[rows], self.y[rows], self.feature_names, source or self.source)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.feature_names == other.feature_names
            and self.X.shape == other.X.shape
            and np.array_equal(self.X, other.X, equal_nan=True)
            and np.array_equal(self.y, other.y)
        )

    __hash__ = None


def _parse_cell(text: str, row: int, column: str) -> float:
    text = text.strip()
    if text == "":
        return math.nan
    try:
        value = float(text)
    except ValueError:
        raise ParseError(row, column, text) from None
    if not math.isfinite(value):
        raise ParseError(row, column, text)
    return value


def load_csv(path, schema: FeatureSchema = CTG_SCHEMA) -> Dataset:
    """Read a headered CSV into a :class:`Dataset` in schema column order.

    Headers match case-insensitively after stripping punctuation and spaces, so
    ``fetal_health`` and ``NSP`` both name the target.  Blank cells become NaN.
    Row numbers in errors count data rows from 1 (the header is row 0).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    with path.open(newline="", encoding="utf-8-sig") as fh:
        return _load(fh, schema, str(path))


def loads_csv(text: str, schema: FeatureSchema = CTG_SCHEMA, source: str = "<string>") -> Dataset:
    return _load(io.StringIO(text), schema, source)


def _load(fh, schema: FeatureSchema, source: str) -> Dataset:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(schema.target, "empty file: no header row") from None
    lookup: dict[str, int] = {}
    for j, name in enumerate(header):
        key = normalize_header(name)
        if key and key not in lookup:
            lookup[key] = j

    def find(name: str, aliases) -> int | None:
        for candidate in (name, *aliases):
            j = lookup.get(normalize_header(candidate))
            if j is not None:
                return j
        return None

    columns = []
    for spec in schema.features:
        j = find(spec.name, spec.aliases)
        if j is None:
            raise SchemaError(spec.name)
        columns.append(j)
    target_col = find(schema.target, schema.target_aliases)
    if target_col is None:
        raise SchemaError(schema.target)

    used = set(columns) | {target_col}
    dropped = {normalize_header(d) for d in schema.dropped}
    ignored = [h for j, h in enumerate(header) if j not in used and normalize_header(h) not in dropped]
    names = schema.names

    rows: list[list[float]] = []
    labels: list[int] = []
    for r, record in enumerate(reader, start=1):
        if not record or all(not cell.strip() for cell in record):
            continue
        if len(record) < len(header):
            record = record + [""] * (len(header) - len(record))
        rows.append([_parse_cell(record[j], r, names[k]) for k, j in enumerate(columns)])
        raw = record[target_col].strip()
        try:
            value = float(raw)
        except ValueError:
            raise LabelError(f"non-numeric target {raw!r} at row {r}") from None
        if value not in (1.0, 2.0, 3.0):
            raise LabelError(f"target value {raw!r} at row {r} outside {{1, 2, 3}}")
        labels.append(int(value) - 1)

    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(names))
    notes = tuple(f"ignored column {h!r}" for h in ignored)
    return Dataset(X, np.array(labels, dtype=np.int64), tuple(names), source, notes)


def dumps_csv(ds: Dataset, target: str = "NSP") -> str:
    """Serialize with the schema headers and 1-based targets; blank cells for NaN."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow([*ds.feature_names, target])
    for row, label in zip(ds.X, ds.y):
        writer.writerow(["" if math.isnan(v) else repr(float(v)) for v in row] + [int(label) + 1])
    return out.getvalue()


def write_csv(ds: Dataset, path, target: str = "NSP") -> None:
    Path(path).write_text(dumps_csv(ds, target), encoding="utf-8")


def class_distribution(ds: Dataset) -> dict[int, int]:
    counts = np.bincount(ds.y, minlength=N_CLASSES)
    return {c: int(counts[c]) for c in range(N_CLASSES)}


def named_distribution(ds: Dataset) -> dict[str, int]:
    return {CLASS_NAMES[c]: n for c, n in class_distribution(ds).items()}


@dataclass(frozen=True)
class RangeWarning:
    row: int
    feature: str
    value: float
    expected_range: tuple[float, float]

    def __str__(self):
        lo, hi = self.expected_range
        return f"row {self.row}: {self.feature}={self.value:g} outside [{lo:g}, {hi:g}]"


def validate_ranges(ds: Dataset, schema: FeatureSchema = CTG_SCHEMA) -> list[RangeWarning]:
    """One warning per (row, feature) cell outside the schema range.

    Rows are zero-based indices into ``ds``.  Missing cells are not reported.
    """
    if ds.n_rows == 0:
        return []
    order = [ds.feature_names.index(n) for n in schema.names]
    X = ds.X[:, order]
    ranges = schema.ranges()
    with np.errstate(invalid="ignore"):
        bad = (X < ranges[:, 0]) | (X > ranges[:, 1])
    out = []
    for r, j in zip(*np.nonzero(bad)):
        spec = schema.features[j]
        out.append(RangeWarning(int(r), spec.name, float(X[r, j]), spec.expected_range))
    return out
