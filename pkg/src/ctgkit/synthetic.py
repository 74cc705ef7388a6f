"""CTG-shaped surrogate data for tests, timing runs and demos when the real table is absent.

Rows are drawn from overlapping class-conditional clouds in the unit cube, mapped
onto each feature's documented range and rounded to that feature's resolution, so
the matrix has the same shape, class balance and heavy value duplication as the
recordings.  It carries no clinical meaning.
"""

from __future__ import annotations

import numpy as np

from .core import derive_seed, make_rng
from .ingest import CTG_SCHEMA, Dataset, FeatureSchema

CTG_CLASS_COUNTS = (1655, 295, 176)


def _resolution(lo: float, hi: float) -> float:
    span = hi - lo
    if span >= 10:
        return 1.0
    if span >= 1:
        return 0.1
    return 0.001


def make_ctg_like(
    class_counts=CTG_CLASS_COUNTS,
    seed: int = 0,
    spread: float = 0.3,
    schema: FeatureSchema = CTG_SCHEMA,
    shuffle: bool = True,
) -> Dataset:
    """Surrogate table with exactly ``class_counts[c]`` rows of class ``c``.

    ``spread`` controls class overlap; the default lands tree ensembles around
    ninety-odd percent accuracy.
    """
    ranges = schema.ranges()
    d = ranges.shape[0]
    centers = make_rng(derive_seed(seed, "centers")).uniform(0.2, 0.8, size=(len(class_counts), d))
    rng = make_rng(derive_seed(seed, "rows"))
    parts, labels = [], []
    for c, count in enumerate(class_counts):
        U = centers[c] + spread * rng.standard_normal((int(count), d))
        parts.append(np.clip(U, 0.0, 1.0))
        labels.append(np.full(int(count), c, dtype=np.int64))
    U = np.concatenate(parts) if parts else np.empty((0, d))
    y = np.concatenate(labels) if labels else np.empty(0, dtype=np.int64)
    lo, hi = ranges[:, 0], ranges[:, 1]
    X = lo + U * (hi - lo)
    for j in range(d):
        step = _resolution(lo[j], hi[j])
        X[:, j] = np.round(X[:, j] / step) * step
    if shuffle and y.size:
        order = rng.permutation(y.size)
        X, y = X[order], y[order]
    return Dataset(X, y, tuple(schema.names), "<synthetic>")
