"""Rendering of the text-to-tabular generation prompt."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .schema import ColumnSpec, TableSchema

# Stable section headers; golden-file tests pin the rendered text.
PRIOR_HEADER = "### Prior knowledge"
INSTRUCTIONS_HEADER = "### Instructions"
SPECS_HEADER = "### Data specifications"
CONTEXT_HEADER = "### Context"
PROMPT_VERSION = "1"


@dataclass(frozen=True)
class DatabaseDescription:
    db_name: str
    nature: str
    population_criteria: str
    disease_context: str

    def check(self) -> None:
        for key in ("db_name", "nature", "population_criteria", "disease_context"):
            if not getattr(self, key).strip():
                raise ValueError(f"description field {key} is empty")


@dataclass(frozen=True)
class ExampleRow:
    values: Mapping[str, Any]
    source_note: str = ""

    def check(self, schema: TableSchema) -> None:
        for col in schema.columns:
            if col.name not in self.values or self.values[col.name] is None:
                raise ValueError(f"example row lacks column {col.name}")
            v = self.values[col.name]
            if col.kind == "categorical":
                if col.match_code(v) is None:
                    raise ValueError(f"example row: {v!r} is not a code of {col.name}")
            elif not isinstance(v, (int, float)) or isinstance(v, bool):
                raise ValueError(f"example row: {col.name} must be numeric")
            elif col.kind == "integer" and v != int(v):
                raise ValueError(f"example row: {col.name} must be a whole number")


@dataclass(frozen=True)
class PromptText:
    rendered: str
    column_order: tuple[str, ...]
    n_rows_requested: int


def load_description(path: str | Path) -> tuple[DatabaseDescription, list[ExampleRow]]:
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    desc = DatabaseDescription(
        db_name=d["db_name"],
        nature=d["nature"],
        population_criteria=d["population_criteria"],
        disease_context=d["disease_context"],
    )
    examples = []
    for ex in d.get("examples", []) or []:
        if "values" in ex:
            examples.append(ExampleRow(dict(ex["values"]), ex.get("source_note", "")))
        else:
            examples.append(ExampleRow(dict(ex)))
    return desc, examples


def permute_columns(schema: TableSchema, seed: int) -> tuple[str, ...]:
    """Uniformly random column ordering, reproducible from ``seed``."""
    names = schema.names
    perm = np.random.default_rng(seed).permutation(len(names))
    return tuple(names[i] for i in perm)


def _type_label(col: ColumnSpec) -> str:
    if col.kind == "continuous":
        return "float"
    if col.kind == "integer":
        return "integer"
    code_types = {type(c) for c in col.codes}
    return "categorical (integer code)" if code_types == {int} else "categorical (code)"


def _fmt_number(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _spec_line(col: ColumnSpec) -> str:
    parts = [f"- {col.name}: {col.definition.strip() or 'no definition given'}"]
    parts.append(f"Type: {_type_label(col)}.")
    if col.unit:
        parts.append(f"Unit: {col.unit}.")
    if col.categories:
        mapping = ", ".join(f'{json.dumps(code)} -> "{label}"' for code, label in col.categories)
        parts.append(f"Encoding: {mapping}.")
    if col.plausible_range is not None:
        lo, hi = col.plausible_range
        parts.append(f"Typical range: {_fmt_number(lo)} to {_fmt_number(hi)}.")
    line = parts[0]
    if not line.endswith("."):
        line += "."
    return " ".join([line, *parts[1:]])


def _example_json(example: ExampleRow, schema: TableSchema, ordering: Sequence[str]) -> str:
    obj = {}
    for name in ordering:
        col = schema[name]
        v = example.values[name]
        if col.kind == "categorical":
            v = col.match_code(v)
        elif col.kind == "integer":
            v = int(v)
        else:
            v = float(v)
        obj[name] = v
    return json.dumps(obj, ensure_ascii=False)


def build_prompt(
    desc: DatabaseDescription,
    schema: TableSchema,
    examples: Sequence[ExampleRow],
    n: int,
    ordering: Sequence[str] | None = None,
) -> PromptText:
    if n < 1:
        raise ValueError(f"number of requested rows must be >= 1, got {n}")
    desc.check()
    ordering = tuple(ordering) if ordering is not None else tuple(schema.names)
    if sorted(ordering) != sorted(schema.names):
        raise ValueError("ordering must be a permutation of the schema columns")
    for ex in examples:
        ex.check(schema)

    prior = (
        f"The data come from {desc.db_name.strip()}, a {desc.nature.strip().rstrip('.')}. "
        f"Population: {desc.population_criteria.strip()} "
        f"Disease: {desc.disease_context.strip()}"
    )
    noun = "record" if n == 1 else "records"
    instructions = "\n".join([
        "Do not comment, do not repeat the question and do not answer it.",
        f"Generate exactly {n} synthetic patient {noun} drawn from the population described above.",
        f"Output format: a JSON array of {n} JSON objects, one object per patient, "
        "with the column names below as keys, in the order listed.",
        "No missing values: every object must contain every column with a non-null value.",
    ])
    specs = "\n".join(_spec_line(schema[name]) for name in ordering)

    sections = [PRIOR_HEADER, prior, "", INSTRUCTIONS_HEADER, instructions, "", SPECS_HEADER, specs]
    if examples:
        lead = "Example of a fictitious patient:" if len(examples) == 1 else "Examples of fictitious patients:"
        sections += ["", CONTEXT_HEADER, lead]
        sections += [_example_json(ex, schema, ordering) for ex in examples]
    return PromptText("\n".join(sections) + "\n", ordering, n)


@dataclass(frozen=True)
class PromptSections:
    """Rendered prompt split back into its headed sections."""

    prior: str
    instructions: str
    specs: str
    context: str | None = None
    order: tuple[str, ...] = field(default_factory=tuple)


def split_sections(rendered: str) -> PromptSections:
    headers = [PRIOR_HEADER, INSTRUCTIONS_HEADER, SPECS_HEADER, CONTEXT_HEADER]
    found = {}
    order = []
    current = None
    for line in rendered.splitlines():
        if line in headers:
            current = line
            order.append(line)
            found[line] = []
        elif current is not None:
            found[current].append(line)
    text = {h: "\n".join(v).strip() for h, v in found.items()}
    return PromptSections(
        prior=text.get(PRIOR_HEADER, ""),
        instructions=text.get(INSTRUCTIONS_HEADER, ""),
        specs=text.get(SPECS_HEADER, ""),
        context=text.get(CONTEXT_HEADER),
        order=tuple(order),
    )
