"""Self-contained JSON model files.

A file holds the format version, the model kind, training metadata, the
kind-specific payload and (optionally) the standardizer that maps raw feature
rows into the space the model was trained in.  Floats are written with ``repr``
so a reloaded model reproduces predictions bit for bit.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .core import MODEL_KINDS, CtgError, InputError
from .preprocess import Standardizer
from .registry import model_from_payload

FORMAT_VERSION = 1


class ModelFileError(CtgError):
    """A model file exists but cannot be used (corrupt, truncated, wrong version)."""


class VersionError(ModelFileError):
    pass


@dataclass(frozen=True)
class LoadedModel:
    model: object
    standardizer: Standardizer | None
    metadata: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.model.kind


def atomic_write_text(path, text: str) -> None:
    """Write ``text`` next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dumps_model(model, standardizer: Standardizer | None = None, metadata: dict | None = None) -> str:
    if model.kind not in MODEL_KINDS:
        raise InputError(f"unknown model kind {model.kind!r}")
    doc = {
        "format_version": FORMAT_VERSION,
        "model_kind": model.kind,
        "metadata": dict(metadata or {}),
        "payload": model.to_payload(),
        "standardizer": standardizer.to_dict() if standardizer is not None else None,
    }
    return json.dumps(doc, allow_nan=False, separators=(",", ":")) + "\n"


def loads_model(text: str, source: str = "<string>") -> LoadedModel:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"corrupt model file {source}: {exc.msg} at offset {exc.pos}") from None
    if not isinstance(doc, dict):
        raise ModelFileError(f"corrupt model file {source}: top level is not an object")
    version = doc.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionError(
            f"unsupported model format_version {version!r} in {source} (this build reads {FORMAT_VERSION})"
        )
    kind = doc.get("model_kind")
    if kind not in MODEL_KINDS:
        raise ModelFileError(f"unknown model_kind {kind!r} in {source}")
    try:
        model = model_from_payload(kind, doc["payload"])
    except (KeyError, TypeError, ValueError, IndexError, InputError) as exc:
        raise ModelFileError(f"malformed payload in {source}: {type(exc).__name__}: {exc}") from None
    std = doc.get("standardizer")
    return LoadedModel(model, Standardizer.from_dict(std) if std else None, doc.get("metadata", {}))


def save_model(path, model, standardizer: Standardizer | None = None, metadata: dict | None = None) -> Path:
    path = Path(path)
    atomic_write_text(path, dumps_model(model, standardizer, metadata))
    return path


def load_model(path) -> LoadedModel:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"file not found: {path}")
    return loads_model(path.read_text(encoding="utf-8"), str(path))
