"""Bagged random forest classifier built on :mod:`facetaudit.learner.tree`."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, DataError, DegenerateTaskError, SchemaMismatchError
from ..tabular import DataTable, Role
from .tree import Tree, grow_tree

FEATURE_ROLES = (Role.FEATURE, Role.PROTECTED)


@dataclass(frozen=True)
class ForestConfig:
    master_seed: int
    n_estimators: int = 300
    max_depth: int | None = None
    min_samples_split: int = 2
    features_per_split: int | None = None

    def __post_init__(self):
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ConfigError("master_seed must be a non-negative integer")
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ConfigError("max_depth must be >= 0 or null")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ConfigError("features_per_split must be >= 1 or null")

    def split_width(self, n_features: int) -> int:
        if self.features_per_split is not None:
            return min(self.features_per_split, n_features)
        return max(1, math.isqrt(n_features))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: list[Tree]
    classes: tuple[str, ...]
    features: tuple[str, ...]
    categorical: tuple[bool, ...]
    medians: tuple[float | None, ...]
    fingerprint: str
    config: ForestConfig
    n_train: int
    metadata: dict = field(default_factory=dict)

    @property
    def n_estimators(self) -> int:
        return len(self.trees)

    def equals(self, other: ForestModel) -> bool:
        return (
            self.classes == other.classes
            and self.features == other.features
            and self.fingerprint == other.fingerprint
            and self.medians == other.medians
            and self.config == other.config
            and len(self.trees) == len(other.trees)
            and all(a.equals(b) for a, b in zip(self.trees, other.trees))
        )


def feature_columns(table: DataTable) -> list[str]:
    return [c.name for c in table.with_role(*FEATURE_ROLES)]


def _matrix(table: DataTable, names: Sequence[str], medians: Sequence[float | None]) -> np.ndarray:
    X = np.empty((table.n_rows, len(names)), dtype=np.float64)
    for j, (name, med) in enumerate(zip(names, medians)):
        values = table[name].values
        if med is None:
            X[:, j] = values
        else:
            X[:, j] = np.where(np.isnan(values), med, values)
    return X


def _tree_rng(master_seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([master_seed, index])


def bootstrap_indices(master_seed: int, index: int, n: int) -> np.ndarray:
    return _tree_rng(master_seed, index).integers(0, n, size=n)


def train_forest(
    features: DataTable,
    labels: np.ndarray,
    config: ForestConfig,
    classes: Sequence[str] | None = None,
    workers: int = 1,
    **metadata,
) -> ForestModel:
    """Fit ``config.n_estimators`` trees, each on its own bootstrap sample.

    Tree ``i`` draws from a generator seeded by ``(master_seed, i)``: first
    the bootstrap indices, then the per-node feature subsets. Trees are
    independent, so ``workers`` only changes wall time, never the model.
    Feature columns are those with role ``feature`` or ``protected``;
    numeric gaps are filled with the training-set median.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) != features.n_rows:
        raise ValueError("labels not aligned with feature rows")
    names = feature_columns(features)
    if not names:
        raise DataError("empty feature set: no columns with role feature or protected")
    if classes is None:
        classes = tuple(str(i) for i in range(int(labels.max(initial=-1)) + 1))
    if len(np.unique(labels)) < 2:
        raise DegenerateTaskError("degenerate task: fewer than two classes in training labels")
    n = features.n_rows
    if n < config.min_samples_split:
        raise DataError(f"{n} training rows is below min_samples_split={config.min_samples_split}")

    medians = []
    for name in names:
        col = features[name]
        if col.schema.is_coded:
            medians.append(None)
        else:
            present = col.values[~np.isnan(col.values)]
            medians.append(float(np.median(present)) if present.size else 0.0)
    categorical = np.array([features[name].schema.is_coded for name in names])
    X = _matrix(features, names, medians)
    k = len(classes)
    width = config.split_width(len(names))

    def fit(i: int) -> Tree:
        rng = _tree_rng(config.master_seed, i)
        boot = rng.integers(0, n, size=n)
        return grow_tree(
            X[boot], labels[boot], k, categorical, rng,
            max_depth=config.max_depth,
            min_samples_split=config.min_samples_split,
            features_per_split=width,
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trees = list(pool.map(fit, range(config.n_estimators)))
    else:
        trees = [fit(i) for i in range(config.n_estimators)]

    return ForestModel(
        trees=trees,
        classes=tuple(classes),
        features=tuple(names),
        categorical=tuple(bool(c) for c in categorical),
        medians=tuple(medians),
        fingerprint=features.fingerprint(names),
        config=config,
        n_train=n,
        metadata=dict(metadata),
    )


def check_schema(model: ForestModel, features: DataTable) -> None:
    missing = [n for n in model.features if n not in features]
    if missing:
        raise SchemaMismatchError(f"inference table lacks model features {missing}")
    got = features.fingerprint(model.features)
    if got != model.fingerprint:
        raise SchemaMismatchError(
            f"schema fingerprint {got} does not match model fingerprint {model.fingerprint} "
            "(column kinds or category dictionaries differ)"
        )


def votes(model: ForestModel, features: DataTable, trees: Sequence[int] | None = None) -> np.ndarray:
    """Per-row vote counts, shape ``(n_rows, n_classes)``."""
    check_schema(model, features)
    X = _matrix(features, model.features, model.medians)
    tally = np.zeros((features.n_rows, len(model.classes)), dtype=np.int64)
    rows = np.arange(features.n_rows)
    for i in range(model.n_estimators) if trees is None else trees:
        np.add.at(tally, (rows, model.trees[i].predict(X)), 1)
    return tally


def predict(model: ForestModel, features: DataTable) -> np.ndarray:
    """Majority vote per row; ties go to the lowest class code."""
    return np.argmax(votes(model, features), axis=1)


def oob_accuracy(model: ForestModel, features: DataTable, labels: np.ndarray) -> float:
    """Accuracy of out-of-bag votes on the training table the model was fitted on."""
    if features.n_rows != model.n_train:
        raise ValueError("out-of-bag evaluation needs the original training table")
    check_schema(model, features)
    X = _matrix(features, model.features, model.medians)
    n = model.n_train
    tally = np.zeros((n, len(model.classes)), dtype=np.int64)
    for i, tree in enumerate(model.trees):
        out = np.ones(n, dtype=bool)
        out[bootstrap_indices(model.config.master_seed, i, n)] = False
        rows = np.flatnonzero(out)
        np.add.at(tally, (rows, tree.predict(X[rows])), 1)
    scored = tally.sum(axis=1) > 0
    if not scored.any():
        raise ValueError("no out-of-bag rows")
    return float(np.mean(np.argmax(tally[scored], axis=1) == np.asarray(labels)[scored]))


def hyperparameters(config: ForestConfig) -> dict:
    return asdict(config)
