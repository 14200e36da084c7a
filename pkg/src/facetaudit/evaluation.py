"""Cross-group evaluation: every group's model applied to every group."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import DegenerateTaskError, SchemaMismatchError
from .facets import FacetSpec
from .learner import ForestModel, predict
from .tabular import DataTable, GroupPartition, extract_task

log = logging.getLogger(__name__)

OUTCOMES = ("tp", "fp", "tn", "fn")


def accuracy(preds, labels) -> float:
    preds, labels = np.asarray(preds), np.asarray(labels)
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if len(preds) == 0:
        raise ValueError("accuracy of an empty prediction set")
    return float(np.count_nonzero(preds == labels) / len(labels))


def _binary_f1(preds: np.ndarray, labels: np.ndarray, positive: int) -> float:
    tp = np.count_nonzero((preds == positive) & (labels == positive))
    fp = np.count_nonzero((preds == positive) & (labels != positive))
    fn = np.count_nonzero((preds != positive) & (labels == positive))
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return float(2 * precision * recall / (precision + recall))


def f1_score(preds, labels, positive: int | None = None) -> float:
    """Positive-class F1 when ``positive`` is given, else macro F1 over observed classes."""
    preds, labels = np.asarray(preds), np.asarray(labels)
    if len(preds) != len(labels):
        raise ValueError("preds and labels differ in length")
    if len(preds) == 0:
        raise ValueError("F1 of an empty prediction set")
    if positive is not None:
        return _binary_f1(preds, labels, positive)
    classes = np.union1d(preds, labels)
    return float(np.mean([_binary_f1(preds, labels, int(c)) for c in classes]))


@dataclass(frozen=True)
class SideConfusion:
    n: int
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def rates(self) -> dict[str, float]:
        return {k: getattr(self, k) / self.n for k in OUTCOMES}

    def to_dict(self) -> dict:
        return {"n": self.n, **{k: getattr(self, k) for k in OUTCOMES}, "rates": self.rates}


@dataclass(frozen=True)
class FacetConfusion:
    """Confusion counts for facets a and d of one attribute, or a null with its reason."""

    attribute: str
    a: SideConfusion | None
    d: SideConfusion | None
    reason: str | None = None

    @property
    def is_null(self) -> bool:
        return self.a is None or self.d is None

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "a": self.a.to_dict() if self.a else None,
            "d": self.d.to_dict() if self.d else None,
            "reason": self.reason,
        }


def _side(preds: np.ndarray, labels: np.ndarray, positive: int) -> SideConfusion:
    pp, lp = preds == positive, labels == positive
    return SideConfusion(
        n=len(preds),
        tp=int(np.count_nonzero(pp & lp)),
        fp=int(np.count_nonzero(pp & ~lp)),
        tn=int(np.count_nonzero(~pp & ~lp)),
        fn=int(np.count_nonzero(~pp & lp)),
    )


def confusion_by_facet(
    preds, labels, table: DataTable, facet: FacetSpec, positive: int | None
) -> FacetConfusion:
    """Raw and side-normalized tp/fp/tn/fn for each facet of ``facet``.

    Rows outside both facets (including missing attribute values) appear in
    neither side.
    """
    preds, labels = np.asarray(preds), np.asarray(labels)
    if positive is None:
        return FacetConfusion(facet.attribute, None, None, "confusion breakdown needs a binary task")
    sides = facet.sides(table)
    empty = [s for s, code in (("a", 0), ("d", 1)) if not np.any(sides == code)]
    if empty:
        return FacetConfusion(facet.attribute, None, None, f"no facet members: facet {'/'.join(empty)} empty in test group")
    a, d = sides == 0, sides == 1
    return FacetConfusion(
        facet.attribute,
        _side(preds[a], labels[a], positive),
        _side(preds[d], labels[d], positive),
    )


@dataclass(frozen=True)
class EvalCell:
    train_group: str
    test_group: str
    n_test: int = 0
    n_correct: int = 0
    accuracy: float | None = None
    f1: float | None = None
    confusion: dict[str, FacetConfusion] = field(default_factory=dict)
    holdout: bool = False
    reason: str | None = None

    @property
    def is_null(self) -> bool:
        return self.accuracy is None

    def to_dict(self) -> dict:
        return {
            "train_group": self.train_group,
            "test_group": self.test_group,
            "n_test": self.n_test,
            "n_correct": self.n_correct,
            "accuracy": self.accuracy,
            "f1": self.f1,
            "holdout": self.holdout,
            "confusion": [c.to_dict() for c in self.confusion.values()],
            "reason": self.reason,
        }


@dataclass(frozen=True)
class EvalMatrix:
    groups: tuple[str, ...]
    cells: tuple[EvalCell, ...]
    f1_kind: str = "binary"
    positive_class: str | None = None

    def __post_init__(self):
        if len(self.cells) != len(self.groups) ** 2:
            raise ValueError(f"{len(self.cells)} cells for {len(self.groups)} groups")

    def cell(self, train: str, test: str) -> EvalCell:
        g = len(self.groups)
        return self.cells[self.groups.index(train) * g + self.groups.index(test)]

    def to_dict(self) -> dict:
        return {
            "groups": list(self.groups),
            "f1_kind": self.f1_kind,
            "positive_class": self.positive_class,
            "cells": [c.to_dict() for c in self.cells],
        }


def evaluate_cell(
    model: ForestModel,
    train_group: str,
    test_group: str,
    test_table: DataTable,
    label: str,
    facets: Sequence[FacetSpec],
    positive_class: str | None,
    holdout: bool = False,
) -> EvalCell:
    try:
        task = extract_task(test_table, label, min_classes=1)
    except DegenerateTaskError as exc:
        return EvalCell(train_group, test_group, reason=str(exc))
    try:
        preds = predict(model, task.features)
    except SchemaMismatchError as exc:
        raise SchemaMismatchError(f"model {train_group!r} on group {test_group!r}: {exc}") from None
    positive = task.classes.index(positive_class) if positive_class is not None else None
    return EvalCell(
        train_group,
        test_group,
        n_test=len(task.labels),
        n_correct=int(np.count_nonzero(preds == task.labels)),
        accuracy=accuracy(preds, task.labels),
        f1=f1_score(preds, task.labels, positive),
        confusion={
            f.attribute: confusion_by_facet(preds, task.labels, task.features, f, positive) for f in facets
        },
        holdout=holdout,
    )


def cross_evaluate(
    models: Mapping[str, ForestModel | None],
    groups: GroupPartition,
    table: DataTable,
    label: str,
    facets: Sequence[FacetSpec],
    positive_class: str | None = None,
    holdout: Mapping[str, np.ndarray] | None = None,
    reasons: Mapping[str, str] | None = None,
) -> EvalMatrix:
    """Fill the G x G matrix in (train, test) declaration order.

    A ``None`` model marks a group that could not be trained; its whole row
    and column become null cells carrying ``reasons[group]``. When
    ``holdout`` maps a group to row indices, the diagonal cell for that
    group is scored on those rows only.
    """
    reasons = dict(reasons or {})
    tables = {g: table.take(groups.rows(g)) for g in groups.groups}
    empty = [g for g, t in tables.items() if t.n_rows == 0 and models.get(g) is not None]
    if empty:
        raise ValueError(f"empty groups: {empty}")
    cells = []
    for train in groups.groups:
        model = models.get(train)
        for test in groups.groups:
            bad = next((g for g in (train, test) if models.get(g) is None), None)
            if bad is not None:
                why = reasons.get(bad, "no model")
                cells.append(EvalCell(train, test, reason=f"group {bad!r} untrained: {why}"))
                continue
            use_holdout = holdout is not None and train == test and train in holdout
            test_table = table.take(holdout[train]) if use_holdout else tables[test]
            cells.append(evaluate_cell(model, train, test, test_table, label, facets, positive_class, use_holdout))
    return EvalMatrix(
        groups.groups,
        tuple(cells),
        f1_kind="binary" if positive_class is not None else "macro",
        positive_class=positive_class,
    )
