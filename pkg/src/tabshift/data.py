"""Tabular dataset representation, CSV ingestion and sampling utilities."""

from __future__ import annotations

import contextlib
import csv
import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
import yaml

MISSING = "⟨missing⟩"
SAME_TARGET_THRESHOLD = 0.05


class SchemaError(ValueError):
    pass


class DataError(ValueError):
    pass


class LabelLeakError(RuntimeError):
    """Raised when sealed ground-truth labels are read outside an allowed scope."""


class ColumnKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    CATEGORICAL = "categorical"


class Role(str, enum.Enum):
    TRAIN = "train"
    TEST = "test"
    SYNTHETIC = "synthetic"


class MissingPolicy(str, enum.Enum):
    STRICT = "strict"  # any empty cell or unknown category is an error
    IMPUTE = "impute"  # empty cells imputed, unknown categories are an error
    LENIENT = "lenient"  # as impute, and unknown categories map to MISSING


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: ColumnKind
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "kind", ColumnKind(self.kind))
        object.__setattr__(self, "categories", tuple(str(c) for c in self.categories))
        if self.kind is ColumnKind.CONTINUOUS and self.categories:
            raise SchemaError(f"continuous column {self.name!r} cannot carry categories")
        if len(set(self.categories)) != len(self.categories):
            raise SchemaError(f"duplicate category labels in column {self.name!r}")

    @property
    def is_categorical(self) -> bool:
        return self.kind is ColumnKind.CATEGORICAL


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]
    target: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("column names must be unique")
        if self.target is not None:
            if self.target not in names:
                raise SchemaError(f"target {self.target!r} is not a column")
            col = self.columns[names.index(self.target)]
            # an empty category list is allowed until the categories are inferred
            if not col.is_categorical or len(col.categories) not in (0, 2):
                raise SchemaError(f"target {self.target!r} must be a binary categorical column")

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def width(self) -> int:
        return len(self.columns)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise SchemaError(f"unknown column {name!r}") from None

    def column(self, name: str) -> ColumnSpec:
        return self.columns[self.index(name)]

    @property
    def target_index(self) -> int | None:
        return None if self.target is None else self.index(self.target)

    @property
    def n_categorical(self) -> int:
        return sum(c.is_categorical for c in self.columns)

    def with_column(self, spec: ColumnSpec) -> "TableSchema":
        cols = [spec if c.name == spec.name else c for c in self.columns]
        return TableSchema(tuple(cols), self.target)

    def to_dict(self) -> dict:
        out: dict = {
            "columns": [
                {"name": c.name, "kind": c.kind.value, **({"categories": list(c.categories)} if c.is_categorical else {})}
                for c in self.columns
            ]
        }
        if self.target is not None:
            out["target"] = self.target
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TableSchema":
        if not isinstance(raw, dict) or "columns" not in raw:
            raise SchemaError("schema must be a mapping with a 'columns' list")
        unknown = set(raw) - {"columns", "target"}
        if unknown:
            raise SchemaError(f"unknown schema key(s): {sorted(unknown)}")
        cols = []
        for entry in raw["columns"]:
            extra = set(entry) - {"name", "kind", "categories"}
            if extra:
                raise SchemaError(f"unknown column key(s) {sorted(extra)} in {entry.get('name')!r}")
            try:
                kind = ColumnKind(entry.get("kind"))
            except ValueError:
                raise SchemaError(
                    f"column {entry.get('name')!r}: kind must be 'continuous' or 'categorical'"
                ) from None
            cols.append(ColumnSpec(str(entry["name"]), kind, tuple(entry.get("categories") or ())))
        return cls(tuple(cols), raw.get("target"))


def load_schema(path: str | Path) -> TableSchema:
    """Read a schema from a YAML or JSON file (keys: columns[name, kind, categories], target)."""
    path = Path(path)
    if not path.is_file():
        raise SchemaError(f"schema file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh) if path.suffix == ".json" else yaml.safe_load(fh)
    return TableSchema.from_dict(raw)


class _LabelSeal:
    """Access log and gate for the target column of a sealed dataset."""

    def __init__(self):
        self.readers: list[str] = []
        self._open: list[str] = []

    def check(self):
        if not self._open:
            raise LabelLeakError("sealed target labels read outside an authorised scope")
        self.readers.append(self._open[-1])


@dataclass(frozen=True, eq=False)
class Dataset:
    """Immutable table of typed rows.

    ``values`` holds one float column per schema column; categorical cells are
    stored as category indices.
    """

    schema: TableSchema
    values: np.ndarray
    role: Role = Role.TRAIN
    imputed: np.ndarray | None = field(default=None, repr=False)
    _seal: _LabelSeal | None = field(default=None, repr=False)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim == 1 and vals.size == 0:
            vals = vals.reshape(0, self.schema.width)
        if vals.ndim != 2 or vals.shape[1] != self.schema.width:
            raise DataError(f"expected {self.schema.width} cells per row, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DataError("cells must be finite")
        for j, col in enumerate(self.schema.columns):
            if col.is_categorical:
                c = vals[:, j]
                if np.any(c != np.round(c)) or np.any(c < 0) or np.any(c >= len(col.categories)):
                    raise DataError(f"invalid category index in column {col.name!r}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "role", Role(self.role))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_rows(self) -> int:
        return len(self)

    @property
    def rows(self) -> Iterator[tuple]:
        self._check_full_access()
        for r in self.values:
            yield tuple(
                int(v) if col.is_categorical else float(v) for v, col in zip(r, self.schema.columns)
            )

    def cells(self) -> np.ndarray:
        """All cells including the target; guarded when the labels are sealed."""
        self._check_full_access()
        return self.values

    def _check_full_access(self):
        if self._seal is not None and self.schema.target is not None:
            self._seal.check()

    def column(self, name: str) -> np.ndarray:
        if name == self.schema.target:
            self._check_full_access()
        return self.values[:, self.schema.index(name)]

    def feature_columns(self) -> list[int]:
        t = self.schema.target_index
        return [j for j in range(self.schema.width) if j != t]

    def features(self) -> np.ndarray:
        """Cells of every non-target column (never guarded)."""
        return self.values[:, self.feature_columns()]

    def labels(self) -> np.ndarray:
        """Binary labels: 1 where the target equals its second (positive) category."""
        if self.schema.target is None:
            raise DataError("dataset has no target column")
        return self.column(self.schema.target).astype(np.int64)

    def take(self, idx: Sequence[int] | np.ndarray, role: Role | None = None) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        imp = None if self.imputed is None else self.imputed[idx]
        return Dataset(self.schema, self.values[idx], role or self.role, imp, self._seal)

    def with_role(self, role: Role) -> "Dataset":
        return replace(self, role=role)

    # -- label sealing -------------------------------------------------

    def sealed(self) -> "Dataset":
        """Copy whose target labels can be read only inside :meth:`reading_labels`."""
        return replace(self, _seal=_LabelSeal())

    @property
    def is_sealed(self) -> bool:
        return self._seal is not None

    @property
    def label_readers(self) -> list[str]:
        return [] if self._seal is None else list(self._seal.readers)

    @contextlib.contextmanager
    def reading_labels(self, reader: str):
        if self._seal is None:
            yield self
            return
        self._seal._open.append(reader)
        try:
            yield self
        finally:
            self._seal._open.pop()

    def without_seal(self) -> "Dataset":
        return replace(self, _seal=None)

    @classmethod
    def from_rows(cls, schema: TableSchema, rows: Sequence[Sequence], role: Role = Role.TRAIN) -> "Dataset":
        """Build from rows whose categorical cells are labels or indices."""
        out = np.empty((len(rows), schema.width))
        for i, row in enumerate(rows):
            if len(row) != schema.width:
                raise DataError(f"row {i} has {len(row)} cells, expected {schema.width}")
            for j, (cell, col) in enumerate(zip(row, schema.columns)):
                if col.is_categorical and isinstance(cell, str):
                    if cell not in col.categories:
                        raise DataError(f"unknown category {cell!r} in column {col.name!r}")
                    out[i, j] = col.categories.index(cell)
                else:
                    out[i, j] = float(cell)
        return cls(schema, out, role)


def concat(parts: Sequence[Dataset], role: Role | None = None) -> Dataset:
    schema = parts[0].schema
    for p in parts[1:]:
        if p.schema != schema:
            raise SchemaError("cannot concatenate datasets with different schemas")
    vals = np.concatenate([p.values for p in parts], axis=0)
    return Dataset(schema, vals, role or parts[0].role)


# -- CSV ----------------------------------------------------------------------


def load_csv(
    path: str | Path,
    schema: TableSchema,
    missing_policy: MissingPolicy | str = MissingPolicy.IMPUTE,
    role: Role = Role.TRAIN,
) -> Dataset:
    """Parse a headered UTF-8 CSV according to ``schema``.

    Categorical columns with an empty category list take their categories from
    the file (sorted). Missing continuous cells are mean-imputed and flagged in
    ``Dataset.imputed``; missing categorical cells become the ``MISSING``
    category, appended to the column spec.
    """
    policy = MissingPolicy(missing_policy)
    path = Path(path)
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path} is empty") from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"cannot parse {path}: {exc}") from exc
        header = [h.strip() for h in header]
        if sorted(header) != sorted(schema.names):
            raise SchemaError(f"{path}: header {header} does not match schema columns {schema.names}")
        order = [header.index(n) for n in schema.names]
        try:
            raw = [[rec[k].strip() for k in order] for rec in reader if rec]
        except IndexError:
            raise DataError(f"{path}: ragged row") from None
        except (csv.Error, UnicodeDecodeError) as exc:
            raise DataError(f"cannot parse {path}: {exc}") from exc

    n = len(raw)
    values = np.empty((n, schema.width))
    imputed = np.zeros((n, schema.width), dtype=bool)
    columns = list(schema.columns)
    for j, col in enumerate(columns):
        cells = [r[j] for r in raw]
        if col.is_categorical:
            cats = list(col.categories) or sorted({c for c in cells if c != ""})
            lookup = {c: k for k, c in enumerate(cats)}
            for i, c in enumerate(cells):
                if c == "" or (c not in lookup and policy is MissingPolicy.LENIENT):
                    if policy is MissingPolicy.STRICT or col.name == schema.target:
                        raise DataError(f"{path}: missing value in column {col.name!r}, row {i + 1}")
                    if MISSING not in lookup:
                        lookup[MISSING] = len(cats)
                        cats.append(MISSING)
                    values[i, j] = lookup[MISSING]
                elif c not in lookup:
                    raise DataError(f"{path}: unknown category {c!r} in column {col.name!r}, row {i + 1}")
                else:
                    values[i, j] = lookup[c]
            columns[j] = ColumnSpec(col.name, col.kind, tuple(cats))
        else:
            missing = [i for i, c in enumerate(cells) if c == ""]
            if missing and policy is MissingPolicy.STRICT:
                raise DataError(f"{path}: missing value in column {col.name!r}, row {missing[0] + 1}")
            for i, c in enumerate(cells):
                if c == "":
                    continue
                try:
                    v = float(c)
                except ValueError:
                    raise DataError(f"{path}: unparseable number {c!r} in column {col.name!r}, row {i + 1}") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: non-finite number in column {col.name!r}, row {i + 1}")
                values[i, j] = v
            present = np.ones(n, dtype=bool)
            present[missing] = False
            fill = float(values[present, j].mean()) if present.any() else 0.0
            values[~present, j] = fill
            imputed[~present, j] = True
    new_schema = TableSchema(tuple(columns), schema.target)
    return Dataset(new_schema, values, role, imputed if imputed.any() else None)


def write_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ds.schema.names)
        for row in ds.cells():
            w.writerow(_format_row(row, ds.schema))


def _format_row(row: np.ndarray, schema: TableSchema) -> list[str]:
    out = []
    for v, col in zip(row, schema.columns):
        if col.is_categorical:
            cat = col.categories[int(v)]
            out.append("" if cat == MISSING else cat)
        else:
            out.append(repr(float(v)))
    return out


# -- sampling -------------------------------------------------------------------


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Unstratified random partition into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    n = len(ds)
    if n < 2:
        raise ValueError("split needs at least 2 rows")
    n_test = min(max(int(round(test_fraction * n)), 1), n - 1)
    perm = np.random.default_rng(seed).permutation(n)
    test_idx, train_idx = np.sort(perm[:n_test]), np.sort(perm[n_test:])
    return ds.take(train_idx, Role.TRAIN), ds.take(test_idx, Role.TEST)


def sample_fraction(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Uniform sample of ``round(fraction * n)`` rows without replacement."""
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must lie in (0, 1], got {fraction}")
    k = int(round(fraction * len(ds)))
    if k < 1:
        raise ValueError(f"fraction {fraction} of {len(ds)} rows leaves an empty sample")
    idx = np.sort(np.random.default_rng(seed).choice(len(ds), size=k, replace=False))
    return ds.take(idx)


def target_rate(ds: Dataset) -> float:
    if ds.schema.target is None:
        raise DataError("dataset has no target column")
    if len(ds) == 0:
        raise DataError("target rate of an empty dataset is undefined")
    return float(ds.labels().mean())


def same_target(train_rate: float, test_rate: float, threshold: float = SAME_TARGET_THRESHOLD) -> int:
    # small epsilon so that e.g. |0.30 - 0.35| counts as within 5%
    return int(abs(train_rate - test_rate) <= threshold + 1e-12)
