"""Tabular GAN augmentation with adversarial filtering for covariate shift."""

from .data import ColumnKind, ColumnSpec, Dataset, MissingPolicy, Role, TableSchema, load_csv, split
from .pipeline import Strategy, aggregate, adversarial_filter, run_strategy

__version__ = "0.1.0"

__all__ = [
    "ColumnKind", "ColumnSpec", "Dataset", "MissingPolicy", "Role", "Strategy", "TableSchema",
    "adversarial_filter", "aggregate", "load_csv", "run_strategy", "split",
]
