import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tabshift.data import ColumnKind, ColumnSpec, Dataset, TableSchema

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def mixed_schema():
    return TableSchema(
        (
            ColumnSpec("age", ColumnKind.CONTINUOUS),
            ColumnSpec("job", ColumnKind.CATEGORICAL, ("a", "b")),
            ColumnSpec("y", ColumnKind.CATEGORICAL, ("no", "yes")),
        ),
        target="y",
    )


@pytest.fixture
def mixed_data(mixed_schema):
    rng = np.random.default_rng(0)
    n = 200
    vals = np.column_stack([rng.normal(40, 10, n), rng.integers(2, size=n), rng.integers(2, size=n)])
    return Dataset(mixed_schema, vals)
