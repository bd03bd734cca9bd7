"""Versioned JSON model files.

Floats are written with ``repr`` precision by the json module, so a saved
model reloads bit-for-bit and predicts identically.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import DataError
from .mlp import MlpModel
from .svm import SvmModel

FORMAT = "ftsterrain-model"
VERSION = 1


def model_to_json(model, meta: dict | None = None) -> str:
    """``meta`` holds free-form provenance such as the feature column names."""
    if not isinstance(model, (SvmModel, MlpModel)):
        raise TypeError(f"cannot serialize {type(model).__name__}")
    doc = {"format": FORMAT, "version": VERSION, **model.to_dict(), "meta": dict(meta or {})}
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n"


def model_from_json(text: str, with_meta: bool = False):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DataError(f"model file is not valid JSON: {exc}") from None
    if doc.get("format") != FORMAT:
        raise DataError(f"not a model file (format={doc.get('format')!r})")
    if doc.get("version") != VERSION:
        raise DataError(f"unsupported model file version {doc.get('version')!r}")
    kind = doc.get("kind")
    if kind == "svm":
        model = SvmModel.from_dict(doc)
    elif kind == "mlp":
        model = MlpModel.from_dict(doc)
    else:
        raise DataError(f"unknown model kind {kind!r}")
    return (model, doc.get("meta", {})) if with_meta else model


def save_model(model, path, meta: dict | None = None) -> None:
    Path(path).write_text(model_to_json(model, meta), encoding="utf-8")


def load_model(path, with_meta: bool = False):
    p = Path(path)
    if not p.is_file():
        raise DataError(f"model file not found: {p}")
    return model_from_json(p.read_text(encoding="utf-8"), with_meta)
