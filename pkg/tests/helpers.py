"""Shared builders for test tables."""

import numpy as np

from synthtab.schema import DataTable


def random_mixed_table(schema, n, rng):
    return DataTable(
        schema,
        {
            "age": np.round(rng.normal(60, 10, n), 2),
            "score": rng.integers(0, 30, n).astype(float),
            "sex": rng.integers(0, 2, n),
            "grade": rng.integers(1, 4, n),
        },
    )
