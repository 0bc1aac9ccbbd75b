import numpy as np
import pytest

from hermit.table import Table


@pytest.fixture
def four_col_schema():
    return [("a", "i64"), ("b", "f64"), ("c", "f64"), ("d", "f64")]


def make_linear_table(
    rows: int,
    slope: float = 2.0,
    intercept: float = 1.0,
    c_range=(0.0, 1000.0),
    seed: int = 0,
    id_scheme: str = "physical",
) -> Table:
    """Small table with b = slope*c + intercept, pk a = 0..rows-1."""
    rng = np.random.default_rng(seed)
    a = np.arange(rows, dtype=np.int64)
    c = rng.uniform(c_range[0], c_range[1], rows)
    b = slope * c + intercept
    d = rng.uniform(0.0, 1.0, rows)
    table = Table([("a", "i64"), ("b", "f64"), ("c", "f64"), ("d", "f64")], 0, id_scheme)
    table.append_rows([a, b, c, d])
    return table


@pytest.fixture
def linear_table():
    return make_linear_table(1000)
