"""Bundled PPMI-style schema, description and mock sampling laws."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from ..llm import MockBackendSpec
from ..prompt import load_description
from ..schema import DataTable, TableSchema, load_schema


def path(name: str) -> Path:
    return Path(str(resources.files(__name__).joinpath(name)))


def ppmi_schema() -> TableSchema:
    return load_schema(path("ppmi_schema.json"))


def ppmi_description():
    return load_description(path("ppmi_description.json"))


def mock_spec(kind: str = "true") -> MockBackendSpec:
    return MockBackendSpec.from_dict(json.loads(path(f"ppmi_mock_{kind}.json").read_text(encoding="utf-8")))


def oracle_table(n_rows: int = 1000, seed: int = 0) -> DataTable:
    """Rows drawn from the known PPMI-style law (stand-in for restricted data)."""
    return mock_spec("true").sample_table(ppmi_schema(), n_rows, seed)
