import hypothesis
import numpy as np
import pytest

from synthtab import fixtures
from synthtab.schema import ColumnSpec, DataTable, TableSchema

hypothesis.settings.register_profile("ci", max_examples=60, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=10, deadline=None)
hypothesis.settings.load_profile("ci")


@pytest.fixture(scope="session")
def ppmi_schema():
    return fixtures.ppmi_schema()


@pytest.fixture(scope="session")
def ppmi_desc():
    return fixtures.ppmi_description()


@pytest.fixture(scope="session")
def oracle_1000():
    return fixtures.oracle_table(1000, seed=0)


@pytest.fixture(scope="session")
def mixed_schema():
    return TableSchema(
        (
            ColumnSpec("age", "continuous", "Age", unit="years", plausible_range=(20, 90)),
            ColumnSpec("score", "integer", "Score"),
            ColumnSpec("sex", "categorical", "Sex", categories=((0, "Female"), (1, "Male"))),
            ColumnSpec("grade", "categorical", "Grade", categories=((1, "low"), (2, "mid"), (3, "high"))),
        ),
        target_column="score",
        key_fields=("sex", "grade"),
        sensitive_field="score",
    )


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(RESULTS):
        ok, detail = RESULTS[n]
        terminalreporter.write_line(f"CRITERION {n}: {'PASS' if ok else 'FAIL'} - {detail}")
