"""Small supervised-learning kit and the TSTR / TATR utility metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from .schema import DataTable, encode

ERR_CLIP = 1e-10
_TIE_TOL = 1e-12


# -- metrics ------------------------------------------------------------------

def f1(predicted, actual) -> float:
    predicted = np.asarray(predicted).astype(int)
    actual = np.asarray(actual).astype(int)
    if len(predicted) == 0 or len(predicted) != len(actual):
        raise ValueError("f1 needs two non-empty label vectors of equal length")
    tp = int(np.sum((predicted == 1) & (actual == 1)))
    fp = int(np.sum((predicted == 1) & (actual == 0)))
    fn = int(np.sum((predicted == 0) & (actual == 1)))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def auc(scores, actual) -> float:
    """Mann-Whitney AUC with mid-ranks for tied scores."""
    scores = np.asarray(scores, dtype=float)
    actual = np.asarray(actual).astype(int)
    n_pos = int(actual.sum())
    n_neg = len(actual) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes among the actual labels")
    ranks = rankdata(scores, method="average")
    return float((ranks[actual == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def stratified_folds(labels, k: int, seed: int) -> list[np.ndarray]:
    """Test-index arrays of ``k`` folds, each class dealt round-robin after a seeded shuffle."""
    labels = np.asarray(labels)
    if len(labels) < k:
        raise ValueError(f"need at least {k} rows for {k}-fold cross-validation")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    offset = 0
    for cls in np.unique(labels):
        idx = rng.permutation(np.flatnonzero(labels == cls))
        for j, i in enumerate(idx):
            folds[(j + offset) % k].append(int(i))
        offset += len(idx)
    return [np.sort(np.array(f, dtype=int)) for f in folds]


# -- logistic regression ------------------------------------------------------

@dataclass(frozen=True)
class LogisticModel:
    weights: np.ndarray
    intercept: float
    mean: np.ndarray
    scale: np.ndarray

    def decision(self, X) -> np.ndarray:
        Xs = (np.asarray(X, dtype=float) - self.mean) / self.scale
        return Xs @ self.weights + self.intercept

    def predict_proba(self, X) -> np.ndarray:
        return 1.0 / (1.0 + np.exp(-self.decision(X)))


def logistic_fit(X, y, ridge: float = 1e-4, iterations: int = 500, step: float = 0.1) -> LogisticModel:
    """Full-batch gradient descent on the ridge-penalized mean log-loss,
    features standardized on the training rows."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Xs = (X - mean) / scale
    n, d = Xs.shape
    w = np.zeros(d)
    b = 0.0
    for _ in range(iterations):
        p = 1.0 / (1.0 + np.exp(-(Xs @ w + b)))
        r = p - y
        w -= step * (Xs.T @ r / n + ridge * w)
        b -= step * r.mean()
    return LogisticModel(w, float(b), mean, scale)


# -- AdaBoost with stumps -----------------------------------------------------

@dataclass(frozen=True)
class Stump:
    feature: int
    threshold: float
    polarity: int  # +1: predict 1 when x > threshold
    alpha: float

    def vote(self, X) -> np.ndarray:
        x = np.asarray(X, dtype=float)[:, self.feature]
        return np.where(self.polarity * (x - self.threshold) > 0, 1.0, -1.0)


@dataclass(frozen=True)
class StumpEnsemble:
    stumps: tuple[Stump, ...]

    @property
    def rounds(self) -> int:
        return len(self.stumps)

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        total = np.zeros(len(X))
        for s in self.stumps:
            total += s.alpha * s.vote(X)
        return total

    def predict(self, X) -> np.ndarray:
        return (self.decision(X) > 0).astype(int)


def best_stump(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> tuple[int, float, int, float] | None:
    """Weighted-error minimizing (feature, threshold, polarity, error).

    Thresholds are midpoints between sorted distinct values.  Ties resolve
    to the lowest feature index, then the lowest threshold, then polarity +1.
    """
    best = None
    pos = y == 1
    for j in range(X.shape[1]):
        order = np.argsort(X[:, j], kind="stable")
        xs = X[order, j]
        cut = np.flatnonzero(xs[1:] != xs[:-1])
        if len(cut) == 0:
            continue
        thr = (xs[cut] + xs[cut + 1]) / 2.0
        wp = np.where(pos[order], w[order], 0.0)
        wn = np.where(pos[order], 0.0, w[order])
        # weight at or below each cut point
        left_pos = np.cumsum(wp)[cut]
        left_neg = np.cumsum(wn)[cut]
        tot_pos, tot_neg = wp.sum(), wn.sum()
        err_plus = left_pos + (tot_neg - left_neg)   # predict 1 above threshold
        err_minus = left_neg + (tot_pos - left_pos)  # predict 1 at or below
        for pol, err in ((1, err_plus), (-1, err_minus)):
            k = int(np.argmin(err))
            # earliest threshold within tolerance of the minimum
            k = int(np.flatnonzero(err <= err[k] + _TIE_TOL)[0])
            cand = (j, float(thr[k]), pol, float(err[k]))
            if best is None or cand[3] < best[3] - _TIE_TOL:
                best = cand
            elif abs(cand[3] - best[3]) <= _TIE_TOL and cand[0] == best[0] and cand[1] < best[1]:
                best = cand
    return best


def adaboost_fit(X, y, rounds: int = 50, seed: int = 0) -> StumpEnsemble:
    """Discrete AdaBoost on depth-1 stumps (deterministic; ``seed`` unused)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    if len(np.unique(y)) < 2:
        raise ValueError("adaboost needs both classes in the training labels")
    n = len(y)
    w = np.full(n, 1.0 / n)
    ys = np.where(y == 1, 1.0, -1.0)
    stumps: list[Stump] = []
    for r in range(rounds):
        found = best_stump(X, y, w)
        if found is None or found[3] >= 0.5:
            if r == 0:
                majority = 1 if y.sum() * 2 > n else -1
                stumps.append(Stump(0, -np.inf, majority, 1.0))
            break
        j, thr, pol, err = found
        err = min(max(err, ERR_CLIP), 1.0 - ERR_CLIP)
        alpha = 0.5 * np.log((1.0 - err) / err)
        stump = Stump(j, thr, pol, float(alpha))
        stumps.append(stump)
        w = w * np.exp(-alpha * ys * stump.vote(X))
        w /= w.sum()
        if found[3] <= ERR_CLIP:
            break
    return StumpEnsemble(tuple(stumps))


# -- utility metrics ----------------------------------------------------------

def binarize_target(table: DataTable, target: str, cutoff_source: DataTable) -> tuple[np.ndarray, float]:
    """Labels 1 above the median of ``cutoff_source[target]``; returns (labels, median)."""
    if not table.schema[target].is_numeric:
        raise ValueError(f"target {target} must be numeric")
    if len(cutoff_source) == 0:
        raise ValueError("cutoff source is empty")
    median = float(np.median(cutoff_source[target]))
    labels = (table[target] > median).astype(int)
    if len(labels) and (labels.min() == labels.max()):
        raise ValueError(f"single class after binarizing {target} at median {median}")
    return labels, median


def feature_matrix(table: DataTable, target: str, reference: DataTable) -> np.ndarray:
    cols = [c for c in table.schema.names if c != target]
    return encode(table, reference, cols).values


def train_on(
    fit_table: DataTable, test: DataTable, cutoff_source: DataTable, target: str, rounds: int = 50, seed: int = 0
) -> float:
    y_fit, _ = binarize_target(fit_table, target, cutoff_source)
    median = float(np.median(cutoff_source[target]))
    y_test = (test[target] > median).astype(int)
    model = adaboost_fit(feature_matrix(fit_table, target, cutoff_source), y_fit, rounds, seed)
    pred = model.predict(feature_matrix(test, target, cutoff_source))
    return f1(pred, y_test)


def tstr(synth: DataTable, test: DataTable, cutoff_source: DataTable, target: str, rounds: int = 50, seed: int = 0) -> float:
    """F1 on real test rows of a classifier trained on synthetic rows."""
    return train_on(synth, test, cutoff_source, target, rounds, seed)


def tatr(
    train: DataTable, synth: DataTable, test: DataTable, target: str, rounds: int = 50, seed: int = 0
) -> float:
    """F1 on real test rows of a classifier trained on real + synthetic rows."""
    return train_on(train.concat(synth), test, train, target, rounds, seed)
