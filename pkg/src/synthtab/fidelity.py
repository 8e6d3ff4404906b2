"""Distribution-shape, pair-trend and detection metrics of a synthetic
table measured against a real one."""

from __future__ import annotations

import csv
import itertools
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import learn
from .schema import DataTable, encode

log = logging.getLogger(__name__)

JSD_BINS = 20
PAIR_BINS = 10
DETECTION_FOLDS = 5


class UndefinedMetricError(ValueError):
    """The metric has no value for these inputs (e.g. zero variance)."""


def _nonempty(*samples):
    for s in samples:
        if len(s) == 0:
            raise ValueError("empty sample")


def _freqs(values) -> Counter:
    c = Counter(values)
    n = sum(c.values())
    return Counter({k: v / n for k, v in c.items()})


def _ecdf(sample: np.ndarray, points: np.ndarray) -> np.ndarray:
    return np.searchsorted(np.sort(sample), points, side="right") / len(sample)


def ks_complement(real, synth) -> float:
    real = np.asarray(real, dtype=float)
    synth = np.asarray(synth, dtype=float)
    _nonempty(real, synth)
    pts = np.unique(np.concatenate([real, synth]))
    return float(1.0 - np.max(np.abs(_ecdf(real, pts) - _ecdf(synth, pts))))


def tv_complement(real, synth) -> float:
    _nonempty(real, synth)
    p, q = _freqs(real), _freqs(synth)
    tvd = 0.5 * sum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in set(p) | set(q))
    return float(1.0 - tvd)


def wasserstein_1d(real, synth) -> float:
    """Area between the two empirical CDFs, in the data's own units."""
    real = np.asarray(real, dtype=float)
    synth = np.asarray(synth, dtype=float)
    _nonempty(real, synth)
    pts = np.sort(np.concatenate([real, synth]))
    widths = np.diff(pts)
    gap = np.abs(_ecdf(real, pts[:-1]) - _ecdf(synth, pts[:-1]))
    return float(np.sum(gap * widths))


def _js_distance(p: np.ndarray, q: np.ndarray) -> float:
    p = p / p.sum()
    q = q / q.sum()
    m = 0.5 * (p + q)

    def kl(a):
        nz = a > 0
        return float(np.sum(a[nz] * np.log2(a[nz] / m[nz])))

    js = 0.5 * kl(p) + 0.5 * kl(q)
    return float(np.sqrt(min(max(js, 0.0), 1.0)))


def jsd_column(real, synth, categorical: bool, bins: int = JSD_BINS) -> float:
    """Jensen-Shannon distance (base 2) of category frequencies or of
    equal-width histograms over the pooled range."""
    _nonempty(real, synth)
    if categorical:
        cats = sorted(set(real) | set(synth), key=str)
        cr, cs = Counter(real), Counter(synth)
        p = np.array([cr.get(c, 0) for c in cats], dtype=float)
        q = np.array([cs.get(c, 0) for c in cats], dtype=float)
        return _js_distance(p, q)
    real = np.asarray(real, dtype=float)
    synth = np.asarray(synth, dtype=float)
    lo = min(real.min(), synth.min())
    hi = max(real.max(), synth.max())
    if hi <= lo:
        return 0.0
    p, _ = np.histogram(real, bins=bins, range=(lo, hi))
    q, _ = np.histogram(synth, bins=bins, range=(lo, hi))
    return _js_distance(p.astype(float), q.astype(float))


def correlation_similarity(real_a, real_b, synth_a, synth_b) -> float:
    cols = [np.asarray(c, dtype=float) for c in (real_a, real_b, synth_a, synth_b)]
    for c in cols:
        if len(np.unique(c)) < 2:
            raise UndefinedMetricError("correlation undefined for a zero-variance column")
    r_real = np.corrcoef(cols[0], cols[1])[0, 1]
    r_synth = np.corrcoef(cols[2], cols[3])[0, 1]
    return float(1.0 - abs(r_real - r_synth) / 2.0)


def contingency_similarity(real_a, real_b, synth_a, synth_b) -> float:
    _nonempty(real_a, synth_a)
    p = _freqs(zip(real_a, real_b))
    q = _freqs(zip(synth_a, synth_b))
    tvd = 0.5 * sum(abs(p.get(c, 0.0) - q.get(c, 0.0)) for c in set(p) | set(q))
    return float(1.0 - tvd)


def quantile_bins(reference: np.ndarray, bins: int = PAIR_BINS) -> np.ndarray:
    edges = np.unique(np.quantile(np.asarray(reference, dtype=float), np.linspace(0, 1, bins + 1)))
    return edges[1:-1]


def discretize(values, inner_edges: np.ndarray) -> np.ndarray:
    return np.searchsorted(inner_edges, np.asarray(values, dtype=float), side="right")


def column_shape_scores(real: DataTable, synth: DataTable) -> dict[str, float]:
    scores = {}
    for col in real.schema.columns:
        if col.is_numeric:
            scores[col.name] = ks_complement(real[col.name], synth[col.name])
        else:
            scores[col.name] = tv_complement(list(real[col.name]), list(synth[col.name]))
    return scores


def column_shapes(real: DataTable, synth: DataTable) -> float:
    return float(np.mean(list(column_shape_scores(real, synth).values())))


@dataclass(frozen=True)
class PairScore:
    a: str
    b: str
    metric: str
    value: float


def pair_scores(real: DataTable, synth: DataTable, bins: int = PAIR_BINS) -> list[PairScore]:
    out = []
    schema = real.schema
    for a, b in itertools.combinations(schema.names, 2):
        ca, cb = schema[a], schema[b]
        if ca.is_numeric and cb.is_numeric:
            try:
                v = correlation_similarity(real[a], real[b], synth[a], synth[b])
            except UndefinedMetricError:
                log.warning("pair (%s, %s): correlation undefined, pair excluded", a, b)
                continue
            out.append(PairScore(a, b, "CorrelationSimilarity", v))
            continue
        ra, rb, sa, sb = real[a], real[b], synth[a], synth[b]
        if ca.is_numeric:
            edges = quantile_bins(ra, bins)
            ra, sa = discretize(ra, edges), discretize(sa, edges)
        if cb.is_numeric:
            edges = quantile_bins(rb, bins)
            rb, sb = discretize(rb, edges), discretize(sb, edges)
        v = contingency_similarity(list(ra), list(rb), list(sa), list(sb))
        out.append(PairScore(a, b, "ContingencySimilarity", v))
    return out


def column_pair_trends(real: DataTable, synth: DataTable) -> float:
    if len(real.schema.names) < 2:
        raise ValueError("pair trends need at least 2 columns")
    scores = pair_scores(real, synth)
    if not scores:
        raise UndefinedMetricError("no pair has a defined score")
    return float(np.mean([s.value for s in scores]))


def logistic_detection(real: DataTable, synth: DataTable, seed: int = 0, folds: int = DETECTION_FOLDS) -> float:
    """1 - 2 * (max(AUC, 0.5) - 0.5) of a cross-validated real-vs-synthetic
    logistic classifier; 1 means indistinguishable."""
    if len(real) < 20 or len(synth) < 20:
        raise ValueError("logistic detection needs at least 20 rows per table")
    X = np.vstack([encode(real, real).values, encode(synth, real).values])
    y = np.concatenate([np.zeros(len(real), dtype=int), np.ones(len(synth), dtype=int)])
    proba = np.empty(len(y))
    for test_idx in learn.stratified_folds(y, folds, seed):
        train_mask = np.ones(len(y), dtype=bool)
        train_mask[test_idx] = False
        model = learn.logistic_fit(X[train_mask], y[train_mask])
        proba[test_idx] = model.predict_proba(X[test_idx])
    a = learn.auc(proba, y)
    return float(1.0 - 2.0 * (max(a, 0.5) - 0.5))


@dataclass
class FidelityReport:
    column_scores: list[tuple[str, str, float]] = field(default_factory=list)
    pair_scores: list[PairScore] = field(default_factory=list)
    summaries: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "summaries": self.summaries,
            "columns": [{"column": c, "metric": m, "value": v} for c, m, v in self.column_scores],
            "pairs": [{"columns": [p.a, p.b], "metric": p.metric, "value": p.value} for p in self.pair_scores],
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["metric", "target", "value"])
            for name, value in self.summaries.items():
                w.writerow([name, "", repr(value)])
            for c, m, v in self.column_scores:
                w.writerow([m, c, repr(v)])
            for p in self.pair_scores:
                w.writerow([p.metric, f"{p.a}|{p.b}", repr(p.value)])


def _mean(values: Sequence[float]) -> float | None:
    return float(np.mean(values)) if len(values) else None


def evaluate_fidelity(
    real: DataTable,
    synth: DataTable,
    seed: int = 0,
    detection: bool = True,
    jsd_bins: int = JSD_BINS,
) -> FidelityReport:
    """All column, pair and summary fidelity scores in schema order."""
    if real.schema.names != synth.schema.names:
        raise ValueError("real and synthetic tables do not share a schema")
    rep = FidelityReport()
    ks, tv, wd, jsd = [], [], [], []
    for col in real.schema.columns:
        r, s = real[col.name], synth[col.name]
        if col.is_numeric:
            v = ks_complement(r, s)
            ks.append(v)
            rep.column_scores.append((col.name, "KSComplement", v))
            d = wasserstein_1d(r, s)
            wd.append(d)
            rep.column_scores.append((col.name, "WD", d))
            j = jsd_column(r, s, categorical=False, bins=jsd_bins)
        else:
            v = tv_complement(list(r), list(s))
            tv.append(v)
            rep.column_scores.append((col.name, "TVComplement", v))
            j = jsd_column(list(r), list(s), categorical=True)
        jsd.append(j)
        rep.column_scores.append((col.name, "JSD", j))
    if len(real.schema.names) >= 2:
        rep.pair_scores = pair_scores(real, synth)
    corr = [p.value for p in rep.pair_scores if p.metric == "CorrelationSimilarity"]
    cont = [p.value for p in rep.pair_scores if p.metric == "ContingencySimilarity"]
    summaries = {
        "Column Shapes": _mean(ks + tv),
        "Column Pair Trends": _mean(corr + cont),
        "KSComplement": _mean(ks),
        "TVComplement": _mean(tv),
        "CorrelationSimilarity": _mean(corr),
        "ContingencySimilarity": _mean(cont),
        "WD": _mean(wd),
        "JSD": _mean(jsd),
    }
    if detection:
        summaries["LogisticDetection"] = logistic_detection(real, synth, seed)
    rep.summaries = {k: v for k, v in summaries.items() if v is not None}
    return rep
