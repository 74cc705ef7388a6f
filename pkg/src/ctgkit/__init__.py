"""From-scratch classifiers, grid search and hard-voting ensembles for cardiotocography data."""

from .core import (
    CLASS_NAMES,
    ConvergenceError,
    CtgError,
    InputError,
    LabelError,
    ParseError,
    SchemaError,
    derive_seed,
)
from .ingest import CTG_SCHEMA, Dataset, load_csv
from .preprocess import PipelineConfig, run_pipeline

__version__ = "0.1.0"

__all__ = [
    "CLASS_NAMES",
    "CTG_SCHEMA",
    "ConvergenceError",
    "CtgError",
    "Dataset",
    "InputError",
    "LabelError",
    "ParseError",
    "PipelineConfig",
    "SchemaError",
    "derive_seed",
    "load_csv",
    "run_pipeline",
]
