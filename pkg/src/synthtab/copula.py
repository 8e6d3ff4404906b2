"""Gaussian copula with empirical marginals, fitted on a real table."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .schema import DataTable, TableSchema

log = logging.getLogger(__name__)

EIGEN_FLOOR = 1e-8


@dataclass(frozen=True)
class MarginalModel:
    name: str
    kind: str
    support: np.ndarray | None = None  # sorted training values, numeric columns
    codes: tuple = ()
    probs: np.ndarray | None = None  # categorical columns

    @property
    def constant(self) -> bool:
        if self.kind == "categorical":
            return int(np.count_nonzero(self.probs)) <= 1
        return bool(self.support[0] == self.support[-1])

    @property
    def intervals(self) -> np.ndarray:
        """Cumulative (lower, upper) bounds of each category in [0, 1]."""
        upper = np.cumsum(self.probs)
        upper[-1] = 1.0
        lower = np.concatenate([[0.0], upper[:-1]])
        return np.column_stack([lower, upper])

    def quantile(self, u: np.ndarray):
        if self.kind == "categorical":
            upper = self.intervals[:, 1]
            idx = np.searchsorted(upper, u, side="right")
            idx = np.minimum(idx, len(self.codes) - 1)
            # zero-probability codes own an empty interval and are never hit
            return [self.codes[i] for i in idx]
        n = len(self.support)
        grid = (np.arange(n) + 0.5) / n
        x = np.interp(u, grid, self.support)
        if self.kind == "integer":
            x = np.round(x)
        return x

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"name": self.name, "kind": self.kind}
        if self.kind == "categorical":
            d["codes"] = list(self.codes)
            d["probs"] = self.probs.tolist()
        else:
            d["support"] = self.support.tolist()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MarginalModel":
        if d["kind"] == "categorical":
            return cls(d["name"], d["kind"], codes=tuple(d["codes"]), probs=np.asarray(d["probs"], dtype=float))
        return cls(d["name"], d["kind"], support=np.asarray(d["support"], dtype=float))


@dataclass(frozen=True)
class CopulaModel:
    marginals: tuple[MarginalModel, ...]
    correlation: np.ndarray
    fitted_on_rows: int

    def to_dict(self) -> dict:
        return {
            "marginals": [m.to_dict() for m in self.marginals],
            "correlation": self.correlation.tolist(),
            "fitted_on_rows": self.fitted_on_rows,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CopulaModel":
        return cls(
            tuple(MarginalModel.from_dict(m) for m in d["marginals"]),
            np.asarray(d["correlation"], dtype=float),
            int(d["fitted_on_rows"]),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CopulaModel":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def clip_eigenvalues(matrix: np.ndarray, floor: float = EIGEN_FLOOR) -> np.ndarray:
    a = np.asarray(matrix, dtype=float)
    a = (a + a.T) / 2.0
    vals, vecs = np.linalg.eigh(a)
    return (vecs * np.maximum(vals, floor)) @ vecs.T


def nearest_psd(matrix: np.ndarray, floor: float = EIGEN_FLOOR) -> np.ndarray:
    """Clip eigenvalues at ``floor`` and rescale back to a unit diagonal."""
    a = clip_eigenvalues(matrix, floor)
    d = np.sqrt(np.diag(a))
    out = a / np.outer(d, d)
    out = (out + out.T) / 2.0
    np.fill_diagonal(out, 1.0)
    return np.clip(out, -1.0, 1.0)


def _uniform_scores(col: np.ndarray) -> np.ndarray:
    n = len(col)
    eps = 1.0 / (2 * n)
    u = (rankdata(col, method="average") - 0.5) / n
    return np.clip(u, eps, 1.0 - eps)


def fit(train: DataTable, seed: int = 0) -> CopulaModel:
    """Fit empirical marginals and the latent normal-score correlation."""
    n = len(train)
    if n < 2:
        raise ValueError("copula fit needs at least 2 rows")
    if train.missing_mask().any():
        raise ValueError("copula fit needs a complete table")
    rng = np.random.default_rng(seed)
    eps = 1.0 / (2 * n)
    marginals, scores, constant = [], [], []
    for col in train.schema.columns:
        x = train[col.name]
        if col.is_numeric:
            m = MarginalModel(col.name, col.kind, support=np.sort(x.astype(float)))
            u = _uniform_scores(x)
        else:
            codes = tuple(col.codes)
            counts = np.array([sum(1 for v in x if v == c) for c in codes], dtype=float)
            m = MarginalModel(col.name, col.kind, codes=codes, probs=counts / n)
            bounds = m.intervals
            idx = np.array([codes.index(v) for v in x])
            lo, hi = bounds[idx, 0], bounds[idx, 1]
            u = np.clip(lo + rng.random(n) * (hi - lo), eps, 1.0 - eps)
        z = ndtri(u)
        if m.constant:
            log.warning("column %s is constant; latent score fixed at 0", col.name)
            z = np.zeros(n)
        marginals.append(m)
        scores.append(z)
        constant.append(m.constant)
    z = np.column_stack(scores)
    d = z.shape[1]
    corr = np.eye(d)
    live = [j for j in range(d) if not constant[j]]
    if len(live) > 1:
        sub = np.corrcoef(z[:, live], rowvar=False)
        corr[np.ix_(live, live)] = sub
    corr = nearest_psd(corr)
    return CopulaModel(tuple(marginals), corr, n)


def _factor(corr: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(corr)
        return vecs * np.sqrt(np.maximum(vals, 0.0))


def sample(model: CopulaModel, n_rows: int, seed: int, schema: TableSchema) -> DataTable:
    if n_rows < 1:
        raise ValueError("n_rows must be >= 1")
    if [m.name for m in model.marginals] != schema.names:
        raise ValueError("model columns do not match the schema")
    rng = np.random.default_rng(seed)
    factor = _factor(model.correlation)
    z = rng.standard_normal((n_rows, len(model.marginals))) @ factor.T
    u = ndtr(z)
    data = {m.name: m.quantile(u[:, j]) for j, m in enumerate(model.marginals)}
    return DataTable(schema, data)


class GaussianCopulaGenerator:
    """Tabular-to-tabular baseline: fit on a training table, sample tables."""

    name = "GC"

    def __init__(self):
        self.model: CopulaModel | None = None
        self.schema: TableSchema | None = None

    def fit(self, train: DataTable, seed: int = 0) -> "GaussianCopulaGenerator":
        self.model = fit(train, seed)
        self.schema = train.schema
        return self

    def generate(self, n_rows: int, seed: int) -> DataTable:
        if self.model is None:
            raise RuntimeError("generator not fitted")
        return sample(self.model, n_rows, seed, self.schema)
