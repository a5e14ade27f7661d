"""Versioned single-file persistence for trained CTGAN models.

Layout: a first line ``TABSHIFT-MODEL <version>`` followed by one JSON
document (sorted keys). Parameter and buffer arrays are stored as base64 of
their little-endian float64 bytes, so a load reproduces them bit for bit and
identical models serialise to identical bytes.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path

import numpy as np

from . import ctgan
from .data import TableSchema
from .nn import NoiseSpec
from .transform import GmmConfig, TableTransformer

MAGIC = "TABSHIFT-MODEL"
FORMAT_VERSION = 1


class ModelFormatError(ValueError):
    pass


def _pack(a: np.ndarray) -> dict:
    a = np.ascontiguousarray(a, dtype="<f8")
    return {"shape": list(a.shape), "data": base64.b64encode(a.tobytes()).decode("ascii")}


def _unpack(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def dumps(model: ctgan.CtganModel) -> str:
    doc = {
        "format_version": FORMAT_VERSION,
        "schema": model.schema.to_dict(),
        "transformer": model.transformer.to_dict(),
        "cond_layout": model.layout.to_dict(),
        "noise_dim": model.noise.dim,
        "config": model.config.to_dict(),
        "seed": model.seed,
        "frequencies": [c.tolist() for c in model.frequencies.counts],
        "arrays": {k: _pack(v) for k, v in ctgan.named_arrays(model).items()},
        "loss_trace": [list(p) for p in model.loss_trace],
    }
    return f"{MAGIC} {FORMAT_VERSION}\n" + json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads(text: str) -> ctgan.CtganModel:
    head, _, body = text.partition("\n")
    parts = head.split()
    if not parts or parts[0] != MAGIC:
        raise ModelFormatError(f"not a model file (missing {MAGIC} header)")
    if len(parts) != 2 or parts[1] != str(FORMAT_VERSION):
        raise ModelFormatError(f"unsupported model format version {parts[1:] or '?'}")
    try:
        doc = json.loads(body)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"corrupt model body: {exc}") from None
    schema = TableSchema.from_dict(doc["schema"])
    transformer = TableTransformer.from_dict(schema, doc["transformer"])
    layout = ctgan.CondLayout.from_dict(doc["cond_layout"])
    if layout != ctgan.CondLayout.from_transformer(transformer):
        raise ModelFormatError("cond layout does not match the transformer spans")
    cfg_raw = dict(doc["config"])
    cfg_raw["gmm"] = GmmConfig(**cfg_raw["gmm"])
    cfg = ctgan.CtganConfig(**cfg_raw)
    arrays = {k: _unpack(v) for k, v in doc["arrays"].items()}
    gen, critic = ctgan.rebuild(transformer, layout, cfg, arrays)
    return ctgan.CtganModel(
        gen,
        critic,
        transformer,
        layout,
        NoiseSpec(doc["noise_dim"]),
        cfg,
        doc["seed"],
        ctgan.FrequencyTable(tuple(np.array(c) for c in doc["frequencies"])),
        [tuple(p) for p in doc["loss_trace"]],
    )


def save_model(model: ctgan.CtganModel, path: str | Path) -> None:
    Path(path).write_text(dumps(model), encoding="utf-8")


def load_model(path: str | Path) -> ctgan.CtganModel:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    return loads(path.read_text(encoding="utf-8"))
