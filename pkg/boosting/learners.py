"""
Component learners: decision stump, shallow decision tree and a tiny neural
network, each trained against a sample distribution.

The stump search presorts every column once; later rounds on the same data
only redo the cumulative weight sums.
"""

from __future__ import annotations

import logging
from typing import Optional, Protocol, Tuple

import numpy as np
from django.conf import settings

from haarboost_project.exceptions import LearnerError
from svm.models import Dataset, SampleMode

from .models import ComponentClassifier, Stump, TinyNet, Tree, WeightVector, hard_sign

logger = logging.getLogger(__name__)


class ComponentLearner(Protocol):
    """Trains one component classifier for a weighted dataset."""

    def __call__(self, data: Dataset, w: WeightVector) -> ComponentClassifier: ...


def _column_ids(data: Dataset) -> np.ndarray:
    if data.feature_ids is not None:
        return np.asarray(data.feature_ids, dtype=np.int64)
    return np.arange(data.dimension, dtype=np.int64)


class StumpSearch:
    """
    Exhaustive weighted stump search over the columns of a fixed matrix.

    Candidate thresholds per column are min - 1, every midpoint between
    consecutive distinct values, and max + 1. Ties go to the smaller column,
    then the smaller threshold, then polarity +1.
    """

    def __init__(self, X: np.ndarray):
        self.X = np.asarray(X, dtype=np.float64)
        n, f = self.X.shape
        self.order = np.argsort(self.X, axis=0, kind="stable").astype(np.int32)
        self.sorted = np.take_along_axis(self.X, self.order, axis=0)
        lows = self.sorted[:1] - 1.0 if n else np.zeros((1, f))
        highs = self.sorted[-1:] + 1.0 if n else np.zeros((1, f))
        mids = (self.sorted[:-1] + self.sorted[1:]) / 2.0
        self.thresholds = np.vstack([lows, mids, highs])
        self.valid = np.vstack([
            np.ones((1, f), dtype=bool),
            self.sorted[1:] > self.sorted[:-1],
            np.ones((1, f), dtype=bool),
        ])

    def _chunk(self) -> int:
        return max(1, int(settings.HAARBOOST["FEATURES"]["FEATURE_CHUNK"]) // max(1, 2 * len(self.X) + 2))

    def _column_errors(self, y: np.ndarray, w: np.ndarray, cols: slice) -> np.ndarray:
        """(n + 1, 2, cols) weighted errors for polarity +1 and -1 at every candidate."""
        order = self.order[:, cols]
        w_pos = np.where(y > 0, w, 0.0)[order]
        w_neg = np.where(y < 0, w, 0.0)[order]
        total_pos = w_pos.sum(axis=0)
        total_neg = w_neg.sum(axis=0)
        zeros = np.zeros((1, order.shape[1]))
        cum_pos = np.vstack([zeros, np.cumsum(w_pos, axis=0)])
        cum_neg = np.vstack([zeros, np.cumsum(w_neg, axis=0)])
        # positives at or below the threshold plus negatives above it
        err_plus = cum_pos + (total_neg - cum_neg)
        err_minus = (total_pos + total_neg) - err_plus
        errors = np.stack([err_plus, err_minus], axis=1)
        return np.where(self.valid[:, None, cols], errors, np.inf)

    def column_bests(self, y: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Best (error, threshold, polarity) per column."""
        f = self.X.shape[1]
        best_err = np.empty(f)
        best_thr = np.empty(f)
        best_pol = np.empty(f, dtype=np.int8)
        step = self._chunk()
        for start in range(0, f, step):
            cols = slice(start, min(f, start + step))
            errors = self._column_errors(y, w, cols)
            flat = errors.reshape(-1, errors.shape[2])
            pick = np.argmin(flat, axis=0)
            rows, pols = np.divmod(pick, 2)
            width = flat.shape[1]
            best_err[cols] = flat[pick, np.arange(width)]
            best_thr[cols] = self.thresholds[rows, np.arange(start, start + width)]
            best_pol[cols] = np.where(pols == 0, 1, -1)
        return best_err, best_thr, best_pol

    def best(self, y: np.ndarray, w: np.ndarray) -> Tuple[int, float, int, float]:
        """(column, threshold, polarity, error) of the weighted-error minimiser."""
        err, thr, pol = self.column_bests(y, w)
        col = int(np.argmin(err))
        return col, float(thr[col]), int(pol[col]), float(err[col])


def stump_errors(data: Dataset, w: WeightVector, search: Optional[StumpSearch] = None) -> np.ndarray:
    """Weighted error of the best stump on each column of ``data``."""
    search = search or StumpSearch(data.points)
    return search.column_bests(data.labels, np.asarray(w))[0]


def learn_stump(data: Dataset, w: WeightVector, search: Optional[StumpSearch] = None) -> Stump:
    """Exact weighted-error minimising stump over all columns, thresholds and polarities."""
    search = search or StumpSearch(data.points)
    col, thr, pol, _ = search.best(data.labels, np.asarray(w))
    return Stump(int(_column_ids(data)[col]), thr, pol)


# ----- Tree -----

def _gini_split(X: np.ndarray, y: np.ndarray, w: np.ndarray) -> Optional[Tuple[int, float]]:
    """Column and midpoint threshold minimising weighted Gini impurity of the children."""
    best: Optional[Tuple[float, int, float]] = None
    total = w.sum()
    if total <= 0:
        return None
    for col in range(X.shape[1]):
        order = np.argsort(X[:, col], kind="stable")
        values = X[order, col]
        wp = np.cumsum(np.where(y[order] > 0, w[order], 0.0))
        wa = np.cumsum(w[order])
        distinct = np.flatnonzero(values[1:] > values[:-1])
        if not len(distinct):
            continue
        left_w = wa[distinct]
        left_p = wp[distinct]
        right_w = total - left_w
        right_p = wp[-1] - left_p
        with np.errstate(divide="ignore", invalid="ignore"):
            gini_left = np.where(left_w > 0, 2 * left_p * (left_w - left_p) / left_w, 0.0)
            gini_right = np.where(right_w > 0, 2 * right_p * (right_w - right_p) / right_w, 0.0)
        impurity = gini_left + gini_right
        k = int(np.argmin(impurity))
        if best is None or impurity[k] < best[0]:
            idx = distinct[k]
            best = (float(impurity[k]), col, float((values[idx] + values[idx + 1]) / 2.0))
    return None if best is None else (best[1], best[2])


def _leaf_value(y: np.ndarray, w: np.ndarray) -> int:
    return 1 if (w * y).sum() >= 0 else -1


def learn_tree(data: Dataset, w: WeightVector, max_depth: Optional[int] = None) -> Tree:
    """
    Greedy depth-limited tree.

    Internal levels split on weighted Gini impurity; a split whose children
    are leaves is chosen by weighted error (the stump search restricted to the
    node), so a depth-1 tree is exactly the best stump.
    """
    max_depth = int(settings.HAARBOOST["BOOSTING"]["TREE_MAX_DEPTH"] if max_depth is None else max_depth)
    ids = _column_ids(data)
    X, y, weights = data.points, data.labels.astype(np.float64), np.asarray(w)
    features, thresholds, lefts, rights, values = [], [], [], [], []

    def add_leaf(value: int) -> int:
        features.append(-1)
        thresholds.append(0.0)
        lefts.append(-1)
        rights.append(-1)
        values.append(value)
        return len(features) - 1

    def grow(rows: np.ndarray, depth: int) -> int:
        yw = weights[rows]
        ys = y[rows]
        pure = (ys > 0).all() or (ys < 0).all()
        if depth >= max_depth or pure or len(rows) < 2:
            return add_leaf(_leaf_value(ys, yw))
        if depth == max_depth - 1:
            col, thr, pol, _ = StumpSearch(X[rows]).best(ys, yw)
            node = add_leaf(0)
            features[node], thresholds[node] = int(ids[col]), thr
            lefts[node] = add_leaf(-pol)
            rights[node] = add_leaf(pol)
            return node
        split = _gini_split(X[rows], ys, yw)
        if split is None:
            return add_leaf(_leaf_value(ys, yw))
        col, thr = split
        node = add_leaf(0)
        features[node], thresholds[node] = int(ids[col]), thr
        go_right = X[rows, col] > thr
        lefts[node] = grow(rows[~go_right], depth + 1)
        rights[node] = grow(rows[go_right], depth + 1)
        return node

    grow(np.arange(len(data)), 0)
    return Tree(
        np.asarray(features, dtype=np.int64),
        np.asarray(thresholds, dtype=np.float64),
        np.asarray(lefts, dtype=np.int64),
        np.asarray(rights, dtype=np.int64),
        np.asarray(values, dtype=np.int8),
    )


# ----- Tiny network -----

def learn_tinynet(
    data: Dataset,
    w: WeightVector,
    hidden: Optional[int] = None,
    epochs: Optional[int] = None,
    learning_rate: Optional[float] = None,
    seed: Optional[int] = None,
    input_columns: Optional[np.ndarray] = None,
    mode: SampleMode = SampleMode.RESAMPLE,
) -> TinyNet:
    """
    One-hidden-layer tanh network fit by full-batch gradient descent on a
    squared loss.

    In resample mode (the default, as for SVM components) the network sees a
    size-N bootstrap drawn with probabilities w and weighs it uniformly. In
    reweight mode it fits sum_i w_i (o_i - y_i)^2 on the full set.

    Args:
        data: Training set
        w: Sample distribution
        hidden: Hidden units (settings default)
        epochs: Gradient steps (settings default)
        learning_rate: Step size (settings default)
        seed: Seed for the bootstrap and the initialisation, recorded on the network
        input_columns: Column positions to use (default all)
        mode: How w reaches the loss

    Raises:
        LearnerError: if training produced non-finite values
    """
    conf = settings.HAARBOOST["BOOSTING"]
    hidden = int(conf["NET_HIDDEN"] if hidden is None else hidden)
    epochs = int(conf["NET_EPOCHS"] if epochs is None else epochs)
    lr = float(conf["NET_LEARNING_RATE"] if learning_rate is None else learning_rate)
    rng = np.random.default_rng(seed)

    columns = np.arange(data.dimension) if input_columns is None else np.asarray(input_columns)
    X = data.points[:, columns]
    if not np.isfinite(X).all():
        raise LearnerError("non-finite training values for the network")
    y = data.labels.astype(np.float64)
    weights = np.asarray(w, dtype=np.float64)
    if SampleMode(mode) == SampleMode.RESAMPLE:
        drawn = rng.choice(len(data), size=len(data), replace=True, p=weights / weights.sum())
        X, y = X[drawn], y[drawn]
        weights = np.full(len(drawn), 1.0 / len(drawn))
    means = X.mean(axis=0)
    scales = X.std(axis=0)
    scales[scales == 0] = 1.0
    z = (X - means) / scales

    n_in = z.shape[1]
    w1 = rng.normal(0.0, 1.0 / np.sqrt(max(1, n_in)), size=(n_in, hidden))
    b1 = np.zeros(hidden)
    w2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), size=hidden)
    b2 = 0.0
    for _ in range(epochs):
        h = np.tanh(z @ w1 + b1)
        out = h @ w2 + b2
        grad_out = 2.0 * weights * (out - y)
        grad_w2 = h.T @ grad_out
        grad_b2 = grad_out.sum()
        grad_h = np.outer(grad_out, w2) * (1.0 - h * h)
        w1 -= lr * (z.T @ grad_h)
        b1 -= lr * grad_h.sum(axis=0)
        w2 -= lr * grad_w2
        b2 -= lr * grad_b2
    if not (np.isfinite(w1).all() and np.isfinite(w2).all() and np.isfinite(b2)):
        raise LearnerError("network weights diverged")
    return TinyNet(_column_ids(data)[columns], means, scales, w1, b1, w2, float(b2), seed)


# ----- Learner objects for the boosting loop -----

class StumpLearner:
    """Stump learner that keeps the presorted columns between rounds."""

    def __init__(self) -> None:
        self._search: Optional[StumpSearch] = None
        self._points: Optional[np.ndarray] = None

    def search_for(self, data: Dataset) -> StumpSearch:
        if self._search is None or self._points is not data.points:
            self._search = StumpSearch(data.points)
            self._points = data.points
        return self._search

    def __call__(self, data: Dataset, w: WeightVector) -> ComponentClassifier:
        return learn_stump(data, w, self.search_for(data))


class TreeLearner:
    def __init__(self, max_depth: Optional[int] = None) -> None:
        self.max_depth = max_depth

    def __call__(self, data: Dataset, w: WeightVector) -> ComponentClassifier:
        return learn_tree(data, w, self.max_depth)


class TinyNetLearner:
    """
    Network learner with a fresh seed per round drawn from ``rng``.

    Inputs wider than ``max_inputs`` are cut to the columns with the lowest
    best-stump error under the current weights.
    """

    def __init__(
        self,
        rng: np.random.Generator,
        hidden: Optional[int] = None,
        epochs: Optional[int] = None,
        max_inputs: Optional[int] = None,
    ) -> None:
        self.rng = rng
        self.hidden = hidden
        self.epochs = epochs
        self.max_inputs = int(settings.HAARBOOST["BOOSTING"]["NET_MAX_INPUTS"] if max_inputs is None else max_inputs)
        self._stumps = StumpLearner()

    def __call__(self, data: Dataset, w: WeightVector) -> ComponentClassifier:
        columns = None
        if data.dimension > self.max_inputs:
            errors = stump_errors(data, w, self._stumps.search_for(data))
            columns = np.sort(np.argsort(errors, kind="stable")[: self.max_inputs])
        seed = int(self.rng.integers(0, 2**31 - 1))
        return learn_tinynet(data, w, self.hidden, self.epochs, seed=seed, input_columns=columns)


def predictions_for(h: ComponentClassifier, data: Dataset) -> np.ndarray:
    return h.predict(data.points, data.feature_ids)


__all__ = [
    "ComponentLearner",
    "StumpSearch",
    "StumpLearner",
    "TreeLearner",
    "TinyNetLearner",
    "learn_stump",
    "learn_tree",
    "learn_tinynet",
    "stump_errors",
    "predictions_for",
    "hard_sign",
]
