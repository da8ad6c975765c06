"""Scoring models: a from-scratch CART random forest and an external-score table.

Trees are stored as flat node arrays; growing and batch scoring run as
numba kernels because explanation generation rescores thousands of
perturbed rows per instance.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from numba import njit

__all__ = [
    "ForestParams",
    "DecisionTree",
    "RandomForest",
    "ExternalScores",
    "train_forest",
    "score",
    "load_external_scores",
]


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_samples_leaf: int = 2
    seed: int = 42
    bootstrap: bool = True
    # None: sqrt(F) for classification, ceil(F/3) for regression
    max_features: Optional[int] = None

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")


@njit(cache=True)
def _grow(X, y, classify, max_depth, min_leaf, m, seed):
    np.random.seed(seed)
    n, F = X.shape
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    idx = np.arange(n)
    buf = np.empty(n, dtype=np.int64)
    s_node = np.empty(cap, dtype=np.int64)
    s_lo = np.empty(cap, dtype=np.int64)
    s_hi = np.empty(cap, dtype=np.int64)
    s_depth = np.empty(cap, dtype=np.int64)
    value[0] = y.mean()
    count = 1
    top = 0
    s_node[0], s_lo[0], s_hi[0], s_depth[0] = 0, 0, n, 0
    depth_seen = 0
    while top >= 0:
        node, lo, hi, depth = s_node[top], s_lo[top], s_hi[top], s_depth[top]
        top -= 1
        if depth > depth_seen:
            depth_seen = depth
        size = hi - lo
        if (max_depth >= 0 and depth >= max_depth) or size < 2 * min_leaf:
            continue
        rows = idx[lo:hi]
        yi = y[rows]
        total = yi.sum()
        if yi.min() == yi.max():
            continue
        if classify:
            p = total / size
            parent = size * 2.0 * p * (1.0 - p)
        else:
            parent = (yi * yi).sum() - total * total / size
        best_cost = np.inf
        best_f = -1
        best_thr = 0.0
        tried = 0
        for f in np.random.permutation(F):
            xf = X[rows, f]
            if xf.min() == xf.max():
                continue
            tried += 1
            order = np.argsort(xf)
            xs = xf[order]
            ys = yi[order]
            cs = 0.0
            cs2 = 0.0
            tot2 = (ys * ys).sum()
            for i in range(size - 1):
                cs += ys[i]
                cs2 += ys[i] * ys[i]
                nl = i + 1
                nr = size - nl
                if nl < min_leaf or nr < min_leaf or xs[i + 1] <= xs[i]:
                    continue
                if classify:
                    pl = cs / nl
                    pr = (total - cs) / nr
                    cost = nl * 2.0 * pl * (1.0 - pl) + nr * 2.0 * pr * (1.0 - pr)
                else:
                    rs = total - cs
                    cost = (cs2 - cs * cs / nl) + ((tot2 - cs2) - rs * rs / nr)
                if cost < best_cost:
                    best_cost = cost
                    best_f = f
                    best_thr = (xs[i] + xs[i + 1]) / 2.0
            if tried >= m:
                break
        if best_f < 0 or best_cost >= parent - 1e-12:
            continue
        # stable partition of idx[lo:hi]
        nl = 0
        for j in range(lo, hi):
            if X[idx[j], best_f] < best_thr:
                buf[nl] = idx[j]
                nl += 1
        k = nl
        for j in range(lo, hi):
            if not X[idx[j], best_f] < best_thr:
                buf[k] = idx[j]
                k += 1
        idx[lo:hi] = buf[:size]
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = count
        right[node] = count + 1
        value[count] = y[idx[lo:lo + nl]].mean()
        value[count + 1] = y[idx[lo + nl:hi]].mean()
        top += 1
        s_node[top], s_lo[top], s_hi[top], s_depth[top] = count + 1, lo + nl, hi, depth + 1
        top += 1
        s_node[top], s_lo[top], s_hi[top], s_depth[top] = count, lo, lo + nl, depth + 1
        count += 2
    return (feature[:count], threshold[:count], left[:count], right[:count],
            value[:count], depth_seen)


@njit(cache=True)
def _apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] >= 0:
            if X[r, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out


class DecisionTree:
    """CART tree (Gini for classification, squared error for regression).

    A row goes left when ``x[feature] < threshold``; thresholds are midpoints
    between consecutive distinct values. At each split, features are tried
    in random order until ``max_features`` non-constant ones have been
    evaluated. Leaves carry the mean target of their samples; classification
    trees vote 1 if that mean is above 0.5, 0 below, and split the vote on
    an exact tie.
    """

    def __init__(self, task: str, max_depth=None, min_samples_leaf=2,
                 max_features=None, seed: int = 0):
        self.task = task
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.seed = seed

    def fit(self, X, y):
        X = np.ascontiguousarray(X, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        F = X.shape[1]
        m = F if self.max_features is None else max(1, min(F, self.max_features))
        (self.feature, self.threshold, self.left, self.right,
         self.value, self.depth) = _grow(
            X, y, self.task == "classification",
            -1 if self.max_depth is None else self.max_depth,
            self.min_samples_leaf, m, self.seed,
        )
        self.n_features = F
        return self

    def apply(self, X):
        """Leaf index reached by each row."""
        X = np.ascontiguousarray(X, dtype=float)
        return _apply(X, self.feature, self.threshold, self.left, self.right)

    def predict(self, X):
        v = self.value[self.apply(X)]
        if self.task == "classification":
            return np.where(v > 0.5, 1.0, np.where(v < 0.5, 0.0, 0.5))
        return v


@njit(cache=True, nogil=True)
def _forest_mean(X, roots, feature, threshold, left, right, leaf_out):
    out = np.zeros(X.shape[0])
    for t in range(roots.shape[0]):
        for r in range(X.shape[0]):
            node = roots[t]
            while feature[node] >= 0:
                if X[r, feature[node]] < threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[r] += leaf_out[node]
    return out / roots.shape[0]


class RandomForest:
    """Bagged CART trees. Classification scores are positive-class vote fractions."""

    kind = "builtin_forest"

    def __init__(self, trees: list, task: str, n_features: int):
        self.trees = trees
        self.task = task
        self.n_features = n_features
        # all trees flattened into one node table for batch scoring
        sizes = [len(t.feature) for t in trees]
        offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(np.int64)
        self._roots = offsets
        self._feature = np.concatenate([t.feature for t in trees])
        self._threshold = np.concatenate([t.threshold for t in trees])
        self._left = np.concatenate([np.where(t.left >= 0, t.left + o, -1)
                                     for t, o in zip(trees, offsets)])
        self._right = np.concatenate([np.where(t.right >= 0, t.right + o, -1)
                                      for t, o in zip(trees, offsets)])
        value = np.concatenate([t.value for t in trees])
        if task == "classification":
            value = np.where(value > 0.5, 1.0, np.where(value < 0.5, 0.0, 0.5))
        self._leaf_out = value

    def predict(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.n_features:
            raise ValueError(
                f"instance has {X.shape[1]} features, model expects {self.n_features}"
            )
        return _forest_mean(np.ascontiguousarray(X), self._roots, self._feature,
                            self._threshold, self._left, self._right, self._leaf_out)


def train_forest(X, y, params: ForestParams = ForestParams(),
                 task: str = "classification") -> RandomForest:
    """Train a random forest on ``(X, y)``.

    Each tree sees a bootstrap resample (unless ``params.bootstrap`` is off)
    and draws a fresh random feature subset at every split.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if task not in ("classification", "regression"):
        raise ValueError(f"unknown task {task!r}")
    if X.ndim != 2 or len(X) == 0:
        raise ValueError("training set is empty")
    if len(y) != len(X):
        raise ValueError("X and y differ in length")
    if task == "classification" and not np.all((y == 0) | (y == 1)):
        raise ValueError("classification target must be binary (0/1)")
    F = X.shape[1]
    m = params.max_features
    if m is None:
        m = max(1, int(math.sqrt(F))) if task == "classification" else math.ceil(F / 3)
    rng = np.random.default_rng(params.seed)
    trees = []
    for _ in range(params.n_trees):
        idx = rng.integers(0, len(X), len(X)) if params.bootstrap else np.arange(len(X))
        seed = int(rng.integers(0, 2**31 - 1))
        tree = DecisionTree(task, params.max_depth, params.min_samples_leaf, m, seed)
        trees.append(tree.fit(X[idx], y[idx]))
    return RandomForest(trees, task, F)


class ExternalScores:
    """Precomputed scores keyed by instance id. Cannot rescore new rows."""

    kind = "external_scores"

    def __init__(self, table: dict, task: str = "classification"):
        self.table = dict(table)
        self.task = task

    def score_id(self, instance_id) -> float:
        try:
            return self.table[int(instance_id)]
        except (KeyError, ValueError):
            raise KeyError(f"no score for instance {instance_id}") from None

    def score_ids(self, ids):
        return np.array([self.score_id(i) for i in ids], dtype=float)

    def predict(self, X):
        raise TypeError("external scores cannot rescore feature vectors")


def score(model: Union[RandomForest, ExternalScores], instance) -> float:
    """Score one instance: a feature vector for a forest, an id for external scores."""
    if isinstance(model, ExternalScores):
        return model.score_id(instance)
    x = np.asarray(instance, dtype=float)
    if x.ndim != 1:
        raise ValueError("expected a single feature vector")
    return float(model.predict(x[None, :])[0])


def load_external_scores(path, task: str = "classification") -> ExternalScores:
    """Read an ``id,score`` CSV (UTF-8, ``.`` decimals)."""
    table = {}
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["id", "score"]:
            raise ValueError(f"{path}: line 1: expected header 'id,score'")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise ValueError(f"{path}: line {line}: expected 2 fields, got {len(row)}")
            try:
                key, val = int(row[0]), float(row[1])
            except ValueError:
                raise ValueError(f"{path}: line {line}: malformed row {row!r}") from None
            if not math.isfinite(val):
                raise ValueError(f"{path}: line {line}: non-finite score")
            if task == "classification" and not 0.0 <= val <= 1.0:
                raise ValueError(f"{path}: line {line}: score {val} outside [0, 1]")
            if key in table:
                raise ValueError(f"{path}: line {line}: duplicate id {key}")
            table[key] = val
    if not table:
        raise ValueError(f"{path}: no scores")
    return ExternalScores(table, task)
