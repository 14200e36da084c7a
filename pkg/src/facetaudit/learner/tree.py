"""Gini-split classification trees over a dense float feature matrix.

Coded (categorical/binary) features hold their dictionary codes, with -1
for missing; they split on one-vs-rest equality. Numeric features split on
``x <= threshold`` at midpoints between consecutive distinct values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# A split must lower weighted impurity by more than this to be taken.
MIN_IMPURITY_DECREASE = 1e-12

LEAF = -1


def gini_impurity(counts) -> float:
    """1 - sum_k p_k^2 for a vector of class counts."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 1 or np.any(counts < 0):
        raise ValueError("class counts must be a non-negative vector")
    total = counts.sum()
    if total <= 0:
        raise ValueError("gini impurity of an empty node is undefined")
    p = counts / total
    return float(1.0 - np.dot(p, p))


@dataclass(frozen=True, eq=False)
class Tree:
    """Flat node arrays; node 0 is the root and ``feature == -1`` marks a leaf.

    For internal nodes ``threshold`` is the numeric cut (left iff ``x <= t``)
    when ``categorical`` is false, else the category code sent left.
    """

    feature: np.ndarray
    categorical: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    counts: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def predicted(self) -> np.ndarray:
        return np.argmax(self.counts, axis=1)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row of ``X``."""
        node = np.zeros(len(X), dtype=np.int64)
        active = np.flatnonzero(self.feature[node] != LEAF)
        while active.size:
            cur = node[active]
            f = self.feature[cur]
            x = X[active, f]
            t = self.threshold[cur]
            go_left = np.where(self.categorical[cur], x == t, x <= t)
            node[active] = np.where(go_left, self.left[cur], self.right[cur])
            active = active[self.feature[node[active]] != LEAF]
        return node

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.predicted[self.apply(X)]

    def equals(self, other: Tree) -> bool:
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("feature", "categorical", "threshold", "left", "right", "counts")
        )


def _best_numeric(x: np.ndarray, y: np.ndarray, n_classes: int):
    order = np.argsort(x, kind="stable")
    xs = x[order]
    n = len(xs)
    boundary = np.flatnonzero(xs[:-1] < xs[1:])
    if boundary.size == 0:
        return None
    onehot = np.zeros((n, n_classes))
    onehot[np.arange(n), y[order]] = 1.0
    cum = np.cumsum(onehot, axis=0)
    left = cum[boundary]
    right = cum[-1] - left
    n_left = boundary + 1.0
    score = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / (n - n_left)
    i = int(np.argmax(score))
    lo, hi = xs[boundary[i]], xs[boundary[i] + 1]
    cut = lo + (hi - lo) / 2.0
    if not lo <= cut < hi:
        cut = lo
    return float(score[i]), float(cut)


def _best_categorical(x: np.ndarray, y: np.ndarray, n_classes: int):
    values, inverse = np.unique(x, return_inverse=True)
    if len(values) < 2:
        return None
    n = len(x)
    table = np.bincount(inverse * n_classes + y, minlength=len(values) * n_classes)
    left = table.reshape(len(values), n_classes).astype(np.float64)
    right = left.sum(axis=0) - left
    n_left = left.sum(axis=1)
    score = (left * left).sum(axis=1) / n_left + (right * right).sum(axis=1) / (n - n_left)
    i = int(np.argmax(score))
    return float(score[i]), float(values[i])


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    categorical: np.ndarray,
    rng: np.random.Generator,
    max_depth: int | None = None,
    min_samples_split: int = 2,
    features_per_split: int = 1,
) -> Tree:
    """Grow one tree on all rows of ``X`` (callers pass the bootstrap sample).

    Nodes are expanded depth-first, left child first, and numbered in
    creation order, so the random stream is consumed in a fixed order.
    Candidate splits are scanned in feature order, then value order; only a
    strictly better score replaces the incumbent.
    """
    n_features = X.shape[1]
    k = min(features_per_split, n_features)
    feature, is_cat, threshold, left, right, counts = [], [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        is_cat.append(False)
        threshold.append(0.0)
        left.append(LEAF)
        right.append(LEAF)
        counts.append(np.bincount(y[idx], minlength=n_classes))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(y))), np.arange(len(y)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        node_counts = counts[node]
        n = len(idx)
        if (
            (max_depth is not None and depth >= max_depth)
            or n < min_samples_split
            or np.count_nonzero(node_counts) <= 1
        ):
            continue
        parent = 1.0 - float(np.dot(node_counts, node_counts)) / (n * n)
        chosen = np.sort(rng.choice(n_features, size=k, replace=False))
        y_node = y[idx]
        best = None
        for f in chosen:
            x = X[idx, f]
            found = (_best_categorical if categorical[f] else _best_numeric)(x, y_node, n_classes)
            if found is not None and (best is None or found[0] > best[0]):
                best = (found[0], found[1], int(f))
        if best is None:
            continue
        score, cut, f = best
        if 1.0 - score / n >= parent - MIN_IMPURITY_DECREASE:
            continue
        x = X[idx, f]
        go_left = (x == cut) if categorical[f] else (x <= cut)
        left_idx, right_idx = idx[go_left], idx[~go_left]
        feature[node], is_cat[node], threshold[node] = f, bool(categorical[f]), cut
        left[node] = new_node(left_idx)
        right[node] = new_node(right_idx)
        stack.append((right[node], right_idx, depth + 1))
        stack.append((left[node], left_idx, depth + 1))

    return Tree(
        feature=np.asarray(feature, dtype=np.int64),
        categorical=np.asarray(is_cat, dtype=bool),
        threshold=np.asarray(threshold, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        counts=np.asarray(counts, dtype=np.int64).reshape(-1, n_classes),
    )
