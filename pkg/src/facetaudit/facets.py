"""Protected-attribute facets and facet-conditional label distributions."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, NoFacetMembers
from .tabular import MISSING, DataTable


@dataclass(frozen=True)
class FacetSpec:
    """Two disjoint value sets of one protected attribute.

    ``advantaged`` is facet *a* (the group bias is expected to favour),
    ``disadvantaged`` is facet *d*. Values outside both sets, and missing
    values, belong to neither facet.
    """

    attribute: str
    advantaged: frozenset[str]
    disadvantaged: frozenset[str]

    def __post_init__(self):
        object.__setattr__(self, "advantaged", frozenset(map(str, self.advantaged)))
        object.__setattr__(self, "disadvantaged", frozenset(map(str, self.disadvantaged)))
        if not self.advantaged or not self.disadvantaged:
            raise ConfigError(f"facet {self.attribute!r}: both value sets must be non-empty")
        overlap = self.advantaged & self.disadvantaged
        if overlap:
            raise ConfigError(f"facet {self.attribute!r}: values in both facets: {sorted(overlap)}")
        if MISSING in self.advantaged | self.disadvantaged:
            raise ConfigError(f"facet {self.attribute!r}: the missing marker cannot be a facet value")

    def swapped(self) -> FacetSpec:
        return FacetSpec(self.attribute, self.disadvantaged, self.advantaged)

    def sides(self, table: DataTable) -> np.ndarray:
        """Per-row facet membership: 0 for facet a, 1 for facet d, -1 for neither."""
        col = table[self.attribute]
        if not col.schema.is_coded:
            raise ConfigError(f"protected attribute {self.attribute!r} must be categorical")
        lookup = np.full(len(col.categories) + 1, -1, dtype=np.int64)
        for code, value in enumerate(col.categories):
            if value in self.advantaged:
                lookup[code] = 0
            elif value in self.disadvantaged:
                lookup[code] = 1
        return lookup[col.values]

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute,
            "advantaged": sorted(self.advantaged),
            "disadvantaged": sorted(self.disadvantaged),
        }


@dataclass(frozen=True)
class FacetCounts:
    n_a: int
    n_d: int
    n_excluded: int

    def to_dict(self) -> dict:
        return {"n_a": self.n_a, "n_d": self.n_d, "n_excluded": self.n_excluded}


@dataclass(frozen=True)
class LabelDistribution:
    labels: tuple[str, ...]
    counts_a: tuple[int, ...]
    counts_d: tuple[int, ...]

    @property
    def p_a(self) -> tuple[float, ...]:
        return _normalize(self.counts_a)

    @property
    def p_d(self) -> tuple[float, ...]:
        return _normalize(self.counts_d)

    def swapped(self) -> LabelDistribution:
        return LabelDistribution(self.labels, self.counts_d, self.counts_a)

    def to_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "counts_a": list(self.counts_a),
            "counts_d": list(self.counts_d),
            "p_a": list(self.p_a),
            "p_d": list(self.p_d),
        }


def _normalize(counts: Sequence[int]) -> tuple[float, ...]:
    total = sum(counts)
    if total == 0:
        raise NoFacetMembers("no facet members")
    return tuple(c / total for c in counts)


def facet_counts(table: DataTable, facet: FacetSpec, rows: np.ndarray | None = None) -> FacetCounts:
    """Count facet-a, facet-d and excluded rows (optionally within ``rows``)."""
    sides = facet.sides(table)
    if rows is not None:
        sides = sides[rows]
    n_a = int(np.count_nonzero(sides == 0))
    n_d = int(np.count_nonzero(sides == 1))
    if n_a + n_d == 0:
        raise NoFacetMembers(f"no facet members for {facet.attribute!r}")
    return FacetCounts(n_a, n_d, len(sides) - n_a - n_d)


def label_distribution(
    table: DataTable,
    facet: FacetSpec,
    labels: np.ndarray,
    classes: Sequence[str] | None = None,
    rows: np.ndarray | None = None,
) -> LabelDistribution:
    """Per-facet label frequencies.

    ``labels`` holds class codes aligned with ``table`` (negative codes mark
    unlabeled rows and are ignored). ``classes`` fixes the label order; it
    defaults to the codes ``0..max``.
    """
    labels = np.asarray(labels)
    if len(labels) != table.n_rows:
        raise ValueError(f"labels ({len(labels)}) not aligned with table ({table.n_rows} rows)")
    sides = facet.sides(table)
    if rows is not None:
        sides, labels = sides[rows], labels[rows]
    if classes is None:
        classes = tuple(str(i) for i in range(int(labels.max(initial=-1)) + 1))
    k = len(classes)
    labeled = labels >= 0
    counts_a = np.bincount(labels[labeled & (sides == 0)], minlength=k)
    counts_d = np.bincount(labels[labeled & (sides == 1)], minlength=k)
    if counts_a.sum() == 0 or counts_d.sum() == 0:
        empty = "a" if counts_a.sum() == 0 else "d"
        raise NoFacetMembers(f"no facet members: facet {empty} of {facet.attribute!r} has no labeled rows")
    return LabelDistribution(tuple(classes), tuple(map(int, counts_a)), tuple(map(int, counts_d)))
