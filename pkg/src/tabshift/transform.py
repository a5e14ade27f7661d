"""Reversible row encoding: mode-specific normalisation plus one-hot blocks.

A continuous column becomes ``[alpha, beta_1..beta_m]``: ``beta`` one-hot
selects a mixture mode and ``alpha = (c - mu_k) / (4 sigma_k)``, clipped to
``[-alpha_clip, alpha_clip]``. A categorical column becomes a one-hot block.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import ColumnKind, Dataset, Role, TableSchema
from .gmm import GaussianMixtureModel, fit_em, responsibilities

ALPHA_SCALE = 4.0


@dataclass(frozen=True)
class GmmConfig:
    m_max: int = 10
    tol: float = 1e-6
    max_iter: int = 300
    prune_weight: float = 0.005
    select: str = "bic"
    max_fit_rows: int = 20000


@dataclass(frozen=True)
class ContinuousTransform:
    gmm: GaussianMixtureModel
    alpha_clip: float = 1.0

    def __post_init__(self):
        if self.alpha_clip <= 0:
            raise ValueError("alpha_clip must be positive")

    @property
    def width(self) -> int:
        return 1 + self.gmm.n_modes


@dataclass(frozen=True)
class CategoricalTransform:
    categories: tuple[str, ...]

    def __post_init__(self):
        if len(self.categories) < 1:
            raise ValueError("categorical transform needs at least one category")

    @property
    def width(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class Span:
    column: str
    offset: int
    width: int
    kind: ColumnKind

    @property
    def stop(self) -> int:
        return self.offset + self.width


@dataclass(frozen=True)
class TableTransformer:
    schema: TableSchema
    transforms: tuple
    spans: tuple[Span, ...] = field(init=False)

    def __post_init__(self):
        spans, off = [], 0
        for col, t in zip(self.schema.columns, self.transforms):
            spans.append(Span(col.name, off, t.width, col.kind))
            off += t.width
        object.__setattr__(self, "spans", tuple(spans))

    @property
    def width(self) -> int:
        return sum(s.width for s in self.spans)

    def softmax_blocks(self) -> list[tuple[int, int]]:
        """Encoded slices that hold one-hot blocks (mode selectors and categoricals)."""
        out = []
        for s in self.spans:
            if s.kind is ColumnKind.CONTINUOUS:
                out.append((s.offset + 1, s.stop))
            else:
                out.append((s.offset, s.stop))
        return out

    def alpha_positions(self) -> list[int]:
        return [s.offset for s in self.spans if s.kind is ColumnKind.CONTINUOUS]

    def to_dict(self) -> dict:
        cols = []
        for span, t in zip(self.spans, self.transforms):
            entry = {"column": span.column, "offset": span.offset, "width": span.width, "kind": span.kind.value}
            if isinstance(t, ContinuousTransform):
                entry["gmm"] = t.gmm.to_dict()
                entry["alpha_clip"] = t.alpha_clip
            else:
                entry["categories"] = list(t.categories)
            cols.append(entry)
        return {"spans": cols}

    @classmethod
    def from_dict(cls, schema: TableSchema, d: dict) -> "TableTransformer":
        transforms = []
        for entry in d["spans"]:
            if entry["kind"] == ColumnKind.CONTINUOUS.value:
                transforms.append(ContinuousTransform(GaussianMixtureModel.from_dict(entry["gmm"]), entry["alpha_clip"]))
            else:
                transforms.append(CategoricalTransform(tuple(entry["categories"])))
        t = cls(schema, tuple(transforms))
        for span, entry in zip(t.spans, d["spans"]):
            if (span.column, span.offset, span.width) != (entry["column"], entry["offset"], entry["width"]):
                raise ValueError(f"span table mismatch for column {entry['column']!r}")
        return t


def fit_transformer(
    ds: Dataset, gmm_config: GmmConfig | None = None, seed: int = 0, alpha_clip: float = 1.0
) -> TableTransformer:
    cfg = gmm_config or GmmConfig()
    if len(ds) == 0:
        raise ValueError("cannot fit a transformer on an empty dataset")
    rng = np.random.default_rng(seed)
    cells = ds.cells()
    transforms = []
    for j, col in enumerate(ds.schema.columns):
        if col.is_categorical:
            transforms.append(CategoricalTransform(col.categories))
            continue
        x = cells[:, j]
        if len(x) > cfg.max_fit_rows:
            x = rng.choice(x, size=cfg.max_fit_rows, replace=False)
        g = fit_em(x, cfg.m_max, cfg.tol, cfg.max_iter, cfg.prune_weight, int(rng.integers(2**31)), cfg.select)
        transforms.append(ContinuousTransform(g, alpha_clip))
    return TableTransformer(ds.schema, tuple(transforms))


def _pick_modes(t: ContinuousTransform, x: np.ndarray, rng, deterministic: bool) -> np.ndarray:
    r = responsibilities(t.gmm, x)
    if r.ndim == 1:
        r = r[None, :]
    if deterministic or rng is None:
        return np.argmax(r, axis=1)
    u = rng.random(len(x))
    cdf = np.cumsum(r, axis=1)
    k = (u[:, None] >= cdf).sum(axis=1)
    return np.minimum(k, r.shape[1] - 1)


def encode(t: TableTransformer, cells: np.ndarray, rng=None, deterministic: bool = False) -> np.ndarray:
    """Encode an (n, columns) cell matrix. Modes are sampled unless ``deterministic``."""
    cells = np.atleast_2d(np.asarray(cells, dtype=np.float64))
    if cells.shape[1] != t.schema.width:
        raise ValueError(f"expected {t.schema.width} cells per row, got {cells.shape[1]}")
    n = cells.shape[0]
    out = np.zeros((n, t.width))
    rows = np.arange(n)
    for j, (span, tr) in enumerate(zip(t.spans, t.transforms)):
        x = cells[:, j]
        if isinstance(tr, ContinuousTransform):
            k = _pick_modes(tr, x, rng, deterministic)
            g = tr.gmm
            alpha = (x - g.means[k]) / (ALPHA_SCALE * g.stds[k])
            out[:, span.offset] = np.clip(alpha, -tr.alpha_clip, tr.alpha_clip)
            out[rows, span.offset + 1 + k] = 1.0
        else:
            out[rows, span.offset + x.astype(np.int64)] = 1.0
    return out


def encode_row(t: TableTransformer, row, rng=None, deterministic: bool = False) -> np.ndarray:
    return encode(t, np.asarray(row, dtype=np.float64)[None, :], rng, deterministic)[0]


def encode_dataset(t: TableTransformer, ds: Dataset, rng=None, deterministic: bool = False) -> np.ndarray:
    return encode(t, ds.cells(), rng, deterministic)


def decode(t: TableTransformer, encoded: np.ndarray) -> np.ndarray:
    """Invert :func:`encode`; one-hot blocks are hardened by argmax (lowest index on ties)."""
    e = np.atleast_2d(np.asarray(encoded, dtype=np.float64))
    if e.shape[1] != t.width:
        raise ValueError(f"encoded width {e.shape[1]} does not match transformer width {t.width}")
    out = np.empty((e.shape[0], t.schema.width))
    for j, (span, tr) in enumerate(zip(t.spans, t.transforms)):
        if isinstance(tr, ContinuousTransform):
            k = np.argmax(e[:, span.offset + 1 : span.stop], axis=1)
            alpha = np.clip(e[:, span.offset], -tr.alpha_clip, tr.alpha_clip)
            out[:, j] = alpha * ALPHA_SCALE * tr.gmm.stds[k] + tr.gmm.means[k]
        else:
            out[:, j] = np.argmax(e[:, span.offset : span.stop], axis=1)
    return out


def decode_row(t: TableTransformer, e) -> tuple:
    cells = decode(t, np.asarray(e)[None, :])[0]
    return tuple(int(v) if c.is_categorical else float(v) for v, c in zip(cells, t.schema.columns))


def decode_dataset(t: TableTransformer, encoded: np.ndarray, role: Role = Role.SYNTHETIC) -> Dataset:
    return Dataset(t.schema, decode(t, encoded), role)
