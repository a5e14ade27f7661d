"""Seeded toy tables: covariate-shift benchmarks and small GAN sanity sets."""

from __future__ import annotations

import numpy as np

from .data import ColumnKind, ColumnSpec, Dataset, Role, TableSchema

SHIFT_SCHEMA = TableSchema(
    (
        ColumnSpec("x1", ColumnKind.CONTINUOUS),
        ColumnSpec("x2", ColumnKind.CONTINUOUS),
        ColumnSpec("x3", ColumnKind.CONTINUOUS),
        ColumnSpec("c1", ColumnKind.CATEGORICAL, ("a", "b", "c")),
        ColumnSpec("y", ColumnKind.CATEGORICAL, ("0", "1")),
    ),
    target="y",
)


def _shift_rows(n: int, shift: float, rng: np.random.Generator) -> np.ndarray:
    # Covariates move with ``shift``; the labelling rule does not (pure covariate shift).
    x1 = rng.normal(shift * 1.5, 1.0, n)
    x2 = rng.normal(0.0, 1.0 + 0.5 * shift, n)
    x3 = rng.normal(0.0, 1.0, n)
    c1 = rng.choice(3, size=n, p=[0.6 - 0.3 * shift / 2, 0.3, 0.1 + 0.3 * shift / 2])
    logit = 1.5 * np.sin(1.5 * x1) + x2 * x1 * 0.8 + 0.7 * x3 + np.array([-0.5, 0.0, 0.8])[c1]
    y = (rng.random(n) < 1.0 / (1.0 + np.exp(-logit))).astype(np.float64)
    return np.column_stack([x1, x2, x3, c1.astype(np.float64), y])


def shift_dataset(n_train: int, n_test: int, shift: float = 1.0, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Train drawn at shift 0, test at ``shift`` (0 gives i.i.d. train and test)."""
    if not 0.0 <= shift <= 2.0:
        raise ValueError("shift must lie in [0, 2]")
    rng = np.random.default_rng(seed)
    train = Dataset(SHIFT_SCHEMA, _shift_rows(n_train, 0.0, rng), Role.TRAIN)
    test = Dataset(SHIFT_SCHEMA, _shift_rows(n_test, shift, rng), Role.TEST)
    return train, test


BIMODAL_SCHEMA = TableSchema(
    (ColumnSpec("x", ColumnKind.CONTINUOUS), ColumnSpec("flag", ColumnKind.CATEGORICAL, ("no", "yes")))
)


def bimodal_dataset(n: int = 2000, seed: int = 0, centers=(-3.0, 3.0), std: float = 0.5) -> Dataset:
    """One continuous column with two equal, well separated modes plus a binary column."""
    rng = np.random.default_rng(seed)
    mode = rng.integers(2, size=n)
    x = rng.normal(np.asarray(centers)[mode], std)
    flag = (rng.random(n) < 0.5).astype(np.float64)
    return Dataset(BIMODAL_SCHEMA, np.column_stack([x, flag]), Role.TRAIN)


SKEWED_SCHEMA = TableSchema(
    (ColumnSpec("x", ColumnKind.CONTINUOUS), ColumnSpec("cat", ColumnKind.CATEGORICAL, ("A", "B")))
)


def skewed_dataset(n: int = 2000, seed: int = 0, p_b: float = 0.1) -> Dataset:
    """Category A:B = (1-p_b):p_b, with a continuous column whose location depends on the category."""
    rng = np.random.default_rng(seed)
    cat = (rng.random(n) < p_b).astype(np.float64)
    x = rng.normal(np.where(cat == 1, 2.0, -1.0), 0.7)
    return Dataset(SKEWED_SCHEMA, np.column_stack([x, cat]), Role.TRAIN)
