"""JSON model files and the fixed-precision report serializer.

A model file looks like::

    {
      "labels": ["F", "M"],
      "probe_prior": [0.5, 0.5],
      "imposter_prior": [0.5, 0.5],
      "probe_channel": [[0.9, 0.1], [0.1, 0.9]],
      "gallery_channel": [[0.8, 0.2], [0.2, 0.8]],
      "metadata": {"name": "noisy gender"}
    }

``probe_channel`` and ``gallery_channel`` rows are indexed by the true label,
columns by the classifier output.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .prob import Channel, CovariateSpace, Distribution, ModelError, WorldModel
from .retrieval import RetrievalPolicy

REQUIRED_KEYS = ("labels", "probe_prior", "imposter_prior", "probe_channel", "gallery_channel")


@dataclass(frozen=True, eq=False)
class ModelFile:
    """A parsed model plus the values exactly as they appeared in the file."""

    model: WorldModel
    raw: dict

    @property
    def name(self) -> str | None:
        meta = self.raw.get("metadata")
        return meta.get("name") if isinstance(meta, dict) else None


def _number(x: Any, where: str) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ModelError(f"{where}: expected a number, got {x!r}")
    return float(x)


def _vector(doc: dict, key: str, m: int) -> list[float]:
    v = doc[key]
    if not isinstance(v, list):
        raise ModelError(f"{key}: expected an array of {m} numbers")
    if len(v) != m:
        raise ModelError(f"{key}: has {len(v)} entries but there are {m} labels")
    return [_number(x, f"{key}[{i}]") for i, x in enumerate(v)]


def _matrix(doc: dict, key: str, m: int) -> list[list[float]]:
    rows = doc[key]
    if not isinstance(rows, list) or len(rows) != m:
        raise ModelError(f"{key}: expected {m} rows (one per label)")
    out = []
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != m:
            raise ModelError(f"{key}[{i}]: expected {m} entries")
        out.append([_number(x, f"{key}[{i}][{k}]") for k, x in enumerate(row)])
    return out


def parse_model(doc: Any) -> ModelFile:
    if not isinstance(doc, dict):
        raise ModelError("model file must hold a JSON object")
    missing = [k for k in REQUIRED_KEYS if k not in doc]
    if missing:
        raise ModelError(f"model file is missing keys {missing}")
    labels = doc["labels"]
    if not isinstance(labels, list):
        raise ModelError("labels: expected an array of strings")
    space = CovariateSpace(labels)
    m = space.size
    parts = {}
    for key, kind in (
        ("probe_prior", Distribution),
        ("imposter_prior", Distribution),
        ("probe_channel", Channel),
        ("gallery_channel", Channel),
    ):
        values = _vector(doc, key, m) if kind is Distribution else _matrix(doc, key, m)
        try:
            parts[key] = kind(space, np.array(values))
        except ModelError as exc:
            raise ModelError(f"{key}: {exc}") from None
    model = WorldModel(space, **parts)
    return ModelFile(model, doc)


def load_model(path: str | Path) -> ModelFile:
    """Read and validate a model file. OSError propagates; bad content raises ModelError."""
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    return parse_model(doc)


def model_to_doc(model: WorldModel, name: str | None = None) -> dict:
    doc = {
        "labels": list(model.space.labels),
        "probe_prior": model.probe_prior.probs.tolist(),
        "imposter_prior": model.imposter_prior.probs.tolist(),
        "probe_channel": model.probe_channel.matrix.tolist(),
        "gallery_channel": model.gallery_channel.matrix.tolist(),
    }
    if name is not None:
        doc["metadata"] = {"name": name}
    return doc


def load_policy(path: str | Path, space: CovariateSpace) -> RetrievalPolicy:
    """Read ``{"labels": [...], "rule": [[...], ...]}``; labels must match the model's."""
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ModelError(f"policy file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or "rule" not in doc:
        raise ModelError("policy file must be an object with a 'rule' matrix")
    if "labels" in doc and list(doc["labels"]) != list(space.labels):
        raise ModelError(f"policy labels {doc['labels']} differ from model labels {list(space.labels)}")
    rule = _matrix(doc, "rule", space.size)
    return RetrievalPolicy(space, np.array(rule))


def policy_to_doc(policy: RetrievalPolicy) -> dict:
    return {"labels": list(policy.space.labels), "rule": policy.rule.tolist()}


def format_float(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    s = format(x, ".17g")
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def dumps(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with every float written at 17 significant digits."""
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (float, np.floating)):
        return format_float(float(obj))
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(x, (int, float, str, np.number)) or x is None for x in obj):
            return "[" + ", ".join(dumps(x, indent, _level + 1) for x in obj) + "]"
        items = [pad + dumps(x, indent, _level + 1) for x in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            pad + json.dumps(str(k), ensure_ascii=False) + ": " + dumps(v, indent, _level + 1)
            for k, v in obj.items()
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    raise TypeError(f"cannot serialize {type(obj).__name__}")
