"""Versioned JSON documents for fitted models."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

from . import boosting, cart, linear, svm
from .evaluation import ConstantModel

FORMAT = "lapsekit-model"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def model_to_dict(model: Any, family: str, params: dict | None = None) -> dict:
    if isinstance(model, ConstantModel):
        body = {"constant_label": model.label}
    elif isinstance(model, cart.CartModel):
        body = cart.to_records(model)
    elif isinstance(model, boosting.BoostedModel):
        body = boosting.to_records(model)
    elif isinstance(model, svm.SvmModel):
        body = svm.to_records(model)
    elif isinstance(model, linear.LogitModel):
        body = linear.to_records(model)
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    return {"format": FORMAT, "version": VERSION, "family": family, "params": params or {}, "model": body}


def model_from_dict(doc: dict) -> tuple[str, Any]:
    if doc.get("format") != FORMAT:
        raise ModelFormatError("not a lapsekit model document")
    if doc.get("version") != VERSION:
        raise ModelFormatError(f"unsupported model version {doc.get('version')!r}")
    family, body = doc["family"], doc["model"]
    if "constant_label" in body:
        return family, ConstantModel(int(body["constant_label"]))
    readers = {
        "logit": linear.from_records,
        "cart": cart.from_records,
        "svm": svm.from_records,
        "boost": boosting.from_records,
        "boost-profit": boosting.from_records,
    }
    if family not in readers:
        raise ModelFormatError(f"unknown model family {family!r}")
    return family, readers[family](body)


def save_model(path: str | Path, model: Any, family: str, params: dict | None = None) -> None:
    text = json.dumps(model_to_dict(model, family, params), indent=1) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_model(path: str | Path) -> tuple[str, Any]:
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
