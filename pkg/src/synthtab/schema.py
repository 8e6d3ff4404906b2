"""Table schema, typed tables, CSV I/O, splitting and the numeric encoding
shared by the distance-based metrics and learners."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

log = logging.getLogger(__name__)

KINDS = ("continuous", "integer", "categorical")


class SchemaError(ValueError):
    """Schema or data violates a declared invariant."""


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    definition: str = ""
    unit: str | None = None
    categories: tuple[tuple[Any, str], ...] = ()
    plausible_range: tuple[float, float] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"column {self.name}: unknown kind {self.kind!r}")
        if self.kind == "categorical":
            if not self.categories:
                raise SchemaError(f"column {self.name}: categorical column needs categories")
            codes = [c for c, _ in self.categories]
            labels = [lab for _, lab in self.categories]
            if len(set(map(str, codes))) != len(codes):
                raise SchemaError(f"column {self.name}: duplicate category codes")
            if len(set(labels)) != len(labels):
                raise SchemaError(f"column {self.name}: duplicate category labels")
        elif self.categories:
            raise SchemaError(f"column {self.name}: categories given for {self.kind} column")
        if self.plausible_range is not None:
            lo, hi = self.plausible_range
            if not lo < hi:
                raise SchemaError(f"column {self.name}: range min must be < max")

    @property
    def is_numeric(self) -> bool:
        return self.kind != "categorical"

    @property
    def codes(self) -> list:
        return [c for c, _ in self.categories]

    def match_code(self, value: Any):
        """Return the declared code equal to ``value`` (by value or text), else None."""
        for code in self.codes:
            if value == code and not isinstance(value, bool):
                return code
        text = str(value).strip()
        for code in self.codes:
            if text == str(code):
                return code
        try:
            num = float(text)
        except ValueError:
            return None
        for code in self.codes:
            if isinstance(code, (int, float)) and not isinstance(code, bool) and num == code:
                return code
        return None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"name": self.name, "kind": self.kind, "definition": self.definition}
        if self.unit is not None:
            out["unit"] = self.unit
        if self.categories:
            out["categories"] = [{"code": c, "label": lab} for c, lab in self.categories]
        if self.plausible_range is not None:
            out["range"] = list(self.plausible_range)
        return out

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ColumnSpec":
        cats = tuple((c["code"], str(c["label"])) for c in d.get("categories", []) or [])
        rng = d.get("range")
        return cls(
            name=str(d["name"]),
            kind=str(d["kind"]),
            definition=str(d.get("definition", "")),
            unit=d.get("unit"),
            categories=cats,
            plausible_range=(float(rng[0]), float(rng[1])) if rng is not None else None,
        )


@dataclass(frozen=True)
class TableSchema:
    columns: tuple[ColumnSpec, ...]
    target_column: str | None = None
    key_fields: tuple[str, ...] = ()
    sensitive_field: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "key_fields", tuple(self.key_fields))
        if not self.columns:
            raise SchemaError("schema has no columns")
        seen = set()
        for col in self.columns:
            if col.name in seen:
                raise SchemaError(f"duplicate column name {col.name}")
            seen.add(col.name)
        for ref in [self.target_column, *self.key_fields, self.sensitive_field]:
            if ref is not None and ref not in seen:
                raise SchemaError(f"unknown column {ref} referenced by schema")
        if self.sensitive_field is not None:
            if self.sensitive_field in self.key_fields:
                raise SchemaError("sensitive_field must not be a key field")
            if self[self.sensitive_field].kind == "continuous":
                raise SchemaError("sensitive_field must be categorical or integer")

    def __getitem__(self, name: str) -> ColumnSpec:
        for col in self.columns:
            if col.name == name:
                return col
        raise KeyError(name)

    def __contains__(self, name: str) -> bool:
        return any(c.name == name for c in self.columns)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    @property
    def numeric_names(self) -> list[str]:
        return [c.name for c in self.columns if c.is_numeric]

    @property
    def categorical_names(self) -> list[str]:
        return [c.name for c in self.columns if not c.is_numeric]

    def to_dict(self) -> dict:
        return {
            "columns": [c.to_dict() for c in self.columns],
            "target_column": self.target_column,
            "key_fields": list(self.key_fields),
            "sensitive_field": self.sensitive_field,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TableSchema":
        return cls(
            columns=tuple(ColumnSpec.from_dict(c) for c in d["columns"]),
            target_column=d.get("target_column"),
            key_fields=tuple(d.get("key_fields", []) or []),
            sensitive_field=d.get("sensitive_field"),
        )


def load_schema(path: str | Path) -> TableSchema:
    with open(path, encoding="utf-8") as fh:
        return TableSchema.from_dict(json.load(fh))


def save_schema(schema: TableSchema, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schema.to_dict(), indent=2) + "\n", encoding="utf-8")


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DataTable:
    """Column-oriented table conforming to a schema.

    Numeric columns are float arrays with NaN as the missing marker;
    categorical columns are object arrays of declared codes with None
    as the missing marker.
    """

    schema: TableSchema
    data: Mapping[str, np.ndarray]

    def __post_init__(self):
        names = self.schema.names
        if set(self.data) != set(names):
            missing = [n for n in names if n not in self.data]
            raise SchemaError(f"table columns do not match schema (missing {missing})")
        lengths = {len(self.data[n]) for n in names}
        if len(lengths) > 1:
            raise SchemaError("columns have different lengths")
        fixed = {}
        for col in self.schema.columns:
            arr = self.data[col.name]
            if col.is_numeric:
                arr = np.array(arr, dtype=float)
                if col.kind == "integer":
                    ok = np.isnan(arr) | (arr == np.round(arr))
                    if not ok.all():
                        raise SchemaError(f"column {col.name}: non-integer value")
            else:
                cache: dict = {}
                out = np.empty(len(arr), dtype=object)
                for i, v in enumerate(arr):
                    if v is None:
                        continue
                    if v not in cache:
                        cache[v] = col.match_code(v)
                    if cache[v] is None:
                        raise SchemaError(f"column {col.name}: value {v!r} not a declared code")
                    out[i] = cache[v]
                arr = out
            fixed[col.name] = _freeze(arr)
        object.__setattr__(self, "data", fixed)

    @classmethod
    def from_rows(cls, schema: TableSchema, rows: Iterable[Mapping[str, Any]]) -> "DataTable":
        rows = list(rows)
        data = {}
        for col in schema.columns:
            vals = []
            for r in rows:
                v = r.get(col.name)
                if col.is_numeric:
                    vals.append(np.nan if v is None else float(v))
                else:
                    vals.append(None if v is None else col.match_code(v))
            data[col.name] = vals
        return cls(schema, data)

    @classmethod
    def from_columns(cls, schema: TableSchema, columns: Mapping[str, Sequence]) -> "DataTable":
        return cls(schema, dict(columns))

    def __len__(self) -> int:
        return len(self.data[self.schema.names[0]])

    @property
    def n_rows(self) -> int:
        return len(self)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.data[name]

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self)):
            rec = {}
            for col in self.schema.columns:
                v = self.data[col.name][i]
                if col.is_numeric:
                    if np.isnan(v):
                        v = None
                    elif col.kind == "integer":
                        v = int(v)
                    else:
                        v = float(v)
                rec[col.name] = v
            out.append(rec)
        return out

    def missing_mask(self) -> np.ndarray:
        mask = np.zeros(len(self), dtype=bool)
        for col in self.schema.columns:
            arr = self.data[col.name]
            if col.is_numeric:
                mask |= np.isnan(arr)
            else:
                mask |= np.array([v is None for v in arr], dtype=bool)
        return mask

    def take(self, indices: Sequence[int]) -> "DataTable":
        idx = np.asarray(indices, dtype=int)
        return DataTable(self.schema, {n: a[idx] for n, a in self.data.items()})

    def concat(self, other: "DataTable") -> "DataTable":
        if other.schema.names != self.schema.names:
            raise SchemaError("cannot concatenate tables with different schemas")
        return DataTable(
            self.schema,
            {n: np.concatenate([self.data[n], other.data[n]]) for n in self.schema.names},
        )

    def equals(self, other: "DataTable") -> bool:
        if self.schema.names != other.schema.names or len(self) != len(other):
            return False
        for col in self.schema.columns:
            a, b = self.data[col.name], other.data[col.name]
            if col.is_numeric:
                if not np.array_equal(a, b, equal_nan=True):
                    return False
            elif list(a) != list(b):
                return False
        return True


# -- CSV ---------------------------------------------------------------------

def _parse_cell(col: ColumnSpec, text: str, row: int):
    text = text.strip()
    if text == "":
        return None
    if col.kind == "categorical":
        code = col.match_code(text)
        if code is None:
            log.warning("row %d column %s: %r is not a declared code, marked missing", row, col.name, text)
        return code
    try:
        value = float(text)
    except ValueError:
        log.warning("row %d column %s: cannot parse %r as a number, marked missing", row, col.name, text)
        return None
    if not math.isfinite(value):
        log.warning("row %d column %s: non-finite value %r, marked missing", row, col.name, text)
        return None
    if col.kind == "integer" and value != round(value):
        log.warning("row %d column %s: %r is not a whole number, marked missing", row, col.name, text)
        return None
    return value


def load_csv(path: str | Path, schema: TableSchema) -> DataTable:
    """Read a CSV file into a table, marking unparseable cells as missing."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"empty file {path}") from None
        header = [h.strip() for h in header]
        for name in schema.names:
            if name not in header:
                raise SchemaError(f"missing column {name}")
        pos = {name: header.index(name) for name in schema.names}
        rows = []
        for i, raw in enumerate(reader, start=1):
            if not raw or all(not c.strip() for c in raw):
                continue
            rec = {}
            for col in schema.columns:
                j = pos[col.name]
                rec[col.name] = _parse_cell(col, raw[j] if j < len(raw) else "", i)
            rows.append(rec)
    return DataTable.from_rows(schema, rows)


def _format_cell(col: ColumnSpec, v) -> str:
    if v is None:
        return ""
    if col.kind == "categorical":
        return str(v)
    if np.isnan(v):
        return ""
    if col.kind == "integer":
        return str(int(v))
    return repr(float(v))


def write_csv(table: DataTable, path: str | Path) -> None:
    cols = table.schema.columns
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([c.name for c in cols])
        arrays = [table[c.name] for c in cols]
        for i in range(len(table)):
            writer.writerow([_format_cell(c, a[i]) for c, a in zip(cols, arrays)])


# -- cleaning and splitting ---------------------------------------------------

def drop_incomplete_rows(table: DataTable) -> tuple[DataTable, int]:
    """Keep only rows without missing cells; returns (table, n_removed)."""
    mask = table.missing_mask()
    removed = int(mask.sum())
    if removed == len(table) and removed > 0:
        raise SchemaError("empty table after exclusion")
    if removed:
        log.info("excluded %d incomplete rows", removed)
    return table.take(np.flatnonzero(~mask)), removed


@dataclass(frozen=True)
class SplitPlan:
    seed: int
    train_fraction: float
    train_indices: tuple[int, ...]
    test_indices: tuple[int, ...]


def plan_split(n_rows: int, train_fraction: float, seed: int) -> SplitPlan:
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    if n_rows < 2:
        raise ValueError("need at least 2 rows to split")
    # floor with a guard against float noise such as 0.29 * 100 = 28.999...
    n_train = int(math.floor(train_fraction * n_rows + 1e-9))
    n_train = min(max(n_train, 1), n_rows - 1)
    perm = np.random.default_rng(seed).permutation(n_rows)
    return SplitPlan(
        seed=seed,
        train_fraction=train_fraction,
        train_indices=tuple(int(i) for i in np.sort(perm[:n_train])),
        test_indices=tuple(int(i) for i in np.sort(perm[n_train:])),
    )


def split(table: DataTable, train_fraction: float, seed: int) -> tuple[DataTable, DataTable]:
    plan = plan_split(len(table), train_fraction, seed)
    return table.take(plan.train_indices), table.take(plan.test_indices)


# -- encoding -----------------------------------------------------------------

@dataclass(frozen=True)
class EncodedMatrix:
    values: np.ndarray
    feature_names: tuple[str, ...]
    feature_map: Mapping[str, tuple[int, ...]]
    scaling_stats: Mapping[str, tuple[float, float]] = field(default_factory=dict)


def encode(table: DataTable, reference: DataTable, columns: Sequence[str] | None = None) -> EncodedMatrix:
    """Min-max scale numeric columns on the reference range (clipped to
    [0, 1]) and one-hot categorical columns over the declared codes."""
    if len(reference) == 0:
        raise ValueError("reference table is empty")
    if table.schema.names != reference.schema.names:
        raise SchemaError("table and reference do not share a schema")
    names = list(columns) if columns is not None else table.schema.names
    blocks, feat_names, fmap, stats = [], [], {}, {}
    pos = 0
    for name in names:
        col = table.schema[name]
        x = table[name]
        if col.is_numeric:
            ref = reference[name]
            lo, hi = float(np.nanmin(ref)), float(np.nanmax(ref))
            stats[name] = (lo, hi)
            if hi > lo:
                block = np.clip((x - lo) / (hi - lo), 0.0, 1.0)[:, None]
            else:
                log.warning("column %s is constant in the reference; encoded as 0.5", name)
                block = np.full((len(x), 1), 0.5)
            feat_names.append(name)
            fmap[name] = (pos,)
            pos += 1
        else:
            codes = col.codes
            block = np.zeros((len(x), len(codes)))
            lookup = {str(c): j for j, c in enumerate(codes)}
            for i, v in enumerate(x):
                if v is not None:
                    block[i, lookup[str(v)]] = 1.0
            feat_names.extend(f"{name}={c}" for c in codes)
            fmap[name] = tuple(range(pos, pos + len(codes)))
            pos += len(codes)
        blocks.append(block)
    values = np.hstack(blocks) if blocks else np.zeros((len(table), 0))
    return EncodedMatrix(values, tuple(feat_names), fmap, stats)
