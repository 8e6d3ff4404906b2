"""Privacy metrics of a synthetic table against the training table it may
have been exposed to."""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .schema import DataTable, encode

MATCH_RTOL = 0.01
MATCH_ATOL = 1e-9
_CHUNK = 128


def nearest_distances(synth: np.ndarray, train: np.ndarray, k: int) -> np.ndarray:
    """Exact Euclidean distances from each synthetic row to its ``k``
    nearest training rows, ascending."""
    out = np.empty((len(synth), k))
    for start in range(0, len(synth), _CHUNK):
        block = synth[start : start + _CHUNK]
        diff = block[:, None, :] - train[None, :, :]
        d = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        if k < d.shape[1]:
            d = np.partition(d, k - 1, axis=1)[:, :k]
        out[start : start + len(block)] = np.sort(d, axis=1)[:, :k]
    return out


def _encoded(synth: DataTable, train: DataTable) -> tuple[np.ndarray, np.ndarray]:
    if len(synth) == 0 or len(train) == 0:
        raise ValueError("privacy metrics need non-empty tables")
    return encode(synth, train).values, encode(train, train).values


def dcr_values(synth: DataTable, train: DataTable) -> np.ndarray:
    s, t = _encoded(synth, train)
    return nearest_distances(s, t, 1)[:, 0]


def dcr_percentile(synth: DataTable, train: DataTable, percentile: float = 5.0) -> float:
    return float(np.percentile(dcr_values(synth, train), percentile))


def nndr_values(synth: DataTable, train: DataTable) -> np.ndarray:
    if len(train) < 2:
        raise ValueError("NNDR needs at least 2 training rows")
    s, t = _encoded(synth, train)
    d = nearest_distances(s, t, 2)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = d[:, 0] / d[:, 1]
    return np.where(d[:, 1] == 0, 1.0, ratio)


def nndr_percentile(synth: DataTable, train: DataTable, percentile: float = 5.0) -> float:
    return float(np.percentile(nndr_values(synth, train), percentile))


def matched_rows(synth: DataTable, train: DataTable, rtol: float = MATCH_RTOL, atol: float = MATCH_ATOL) -> np.ndarray:
    """Boolean mask of synthetic rows that copy some training row."""
    schema = train.schema
    num = schema.numeric_names
    cat = schema.categorical_names
    t_num = np.column_stack([train[c] for c in num]) if num else np.zeros((len(train), 0))
    s_num = np.column_stack([synth[c] for c in num]) if num else np.zeros((len(synth), 0))
    tol = np.maximum(rtol * np.abs(t_num), atol)
    t_cat = [tuple(str(train[c][i]) for c in cat) for i in range(len(train))]
    groups: dict[tuple, list[int]] = defaultdict(list)
    for i, key in enumerate(t_cat):
        groups[key].append(i)
    groups_idx = {k: np.array(v) for k, v in groups.items()}
    out = np.zeros(len(synth), dtype=bool)
    for i in range(len(synth)):
        key = tuple(str(synth[c][i]) for c in cat)
        idx = groups_idx.get(key)
        if idx is None:
            continue
        close = np.abs(t_num[idx] - s_num[i]) <= tol[idx]
        out[i] = bool(close.all(axis=1).any())
    return out


def new_row_synthesis(synth: DataTable, train: DataTable, rtol: float = MATCH_RTOL) -> float:
    if len(synth) == 0 or len(train) == 0:
        raise ValueError("new row synthesis needs non-empty tables")
    return float(1.0 - matched_rows(synth, train, rtol).mean())


def categorical_cap(synth: DataTable, train: DataTable, key_fields: Sequence[str], sensitive_field: str) -> float:
    """1 - mean correct-attribution probability over training rows.

    Training rows whose key combination never occurs in the synthetic
    table contribute probability 0.
    """
    schema = train.schema
    for name in [*key_fields, sensitive_field]:
        if schema[name].kind == "continuous":
            raise ValueError(
                f"field {name} is continuous; discretize it into an integer or categorical column for CAP"
            )
    if not key_fields:
        raise ValueError("CAP needs at least one key field")
    lookup: dict[tuple, Counter] = defaultdict(Counter)
    for i in range(len(synth)):
        key = tuple(synth[k][i] for k in key_fields)
        lookup[key][synth[sensitive_field][i]] += 1
    probs = np.zeros(len(train))
    for i in range(len(train)):
        key = tuple(train[k][i] for k in key_fields)
        hits = lookup.get(key)
        if hits:
            probs[i] = hits[train[sensitive_field][i]] / sum(hits.values())
    return float(1.0 - probs.mean())


@dataclass
class PrivacyReport:
    dcr_p5: float
    nndr_p5: float
    new_row_rate: float
    cap_score: float | None
    percentile: float
    match_rtol: float
    key_fields: list[str]
    sensitive_field: str | None
    cap_no_match_attribution: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")


def evaluate_privacy(synth: DataTable, train: DataTable, percentile: float = 5.0, rtol: float = MATCH_RTOL) -> PrivacyReport:
    schema = train.schema
    cap = None
    if schema.key_fields and schema.sensitive_field:
        cap = categorical_cap(synth, train, schema.key_fields, schema.sensitive_field)
    return PrivacyReport(
        dcr_p5=dcr_percentile(synth, train, percentile),
        nndr_p5=nndr_percentile(synth, train, percentile),
        new_row_rate=new_row_synthesis(synth, train, rtol),
        cap_score=cap,
        percentile=percentile,
        match_rtol=rtol,
        key_fields=list(schema.key_fields),
        sensitive_field=schema.sensitive_field,
    )
