"""Pre-training bias metrics: Class Imbalance, KL divergence and the KS statistic."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import NoFacetMembers
from .facets import FacetCounts, FacetSpec, LabelDistribution, facet_counts, label_distribution
from .tabular import DataTable

INFINITY = math.inf


@dataclass(frozen=True)
class BiasMetrics:
    ci: float
    kl_nats: float
    ks: float
    ks_arg_label: str

    def to_dict(self) -> dict:
        return {
            "ci": self.ci,
            "kl_nats": "Infinity" if math.isinf(self.kl_nats) else self.kl_nats,
            "ks": self.ks,
            "ks_arg_label": self.ks_arg_label,
        }


def class_imbalance(counts: FacetCounts) -> float:
    """(n_a - n_d) / (n_a + n_d); positive when facet a is the larger one."""
    total = counts.n_a + counts.n_d
    if total == 0:
        raise NoFacetMembers("no facet members")
    return (counts.n_a - counts.n_d) / total


def _probabilities(counts: Sequence[int], smoothing: float) -> list[float]:
    if smoothing:
        counts = [c + smoothing for c in counts]
    total = sum(counts)
    if total == 0:
        raise NoFacetMembers("no facet members")
    return [c / total for c in counts]


def kl_divergence(dist: LabelDistribution, smoothing: float = 0.0) -> float:
    """KL(P_a || P_d) in nats.

    Labels absent from facet a contribute nothing. A label present in facet a
    but absent from facet d makes the divergence infinite (returned as
    ``math.inf``) unless ``smoothing`` adds a pseudo-count to every label.
    """
    if smoothing < 0:
        raise ValueError("smoothing must be non-negative")
    p_a = _probabilities(dist.counts_a, smoothing)
    p_d = _probabilities(dist.counts_d, smoothing)
    total = 0.0
    for pa, pd in zip(p_a, p_d):
        if pa == 0.0:
            continue
        if pd == 0.0:
            return INFINITY
        total += pa * math.log(pa / pd)
    # rounding can leave tiny negatives when the distributions coincide
    return max(total, 0.0)


def ks_statistic(dist: LabelDistribution) -> tuple[float, str]:
    """Largest per-label gap |P_a(y) - P_d(y)| and the label attaining it (first on ties).

    Gaps are compared as exact integers |c_a * n_d - c_d * n_a| so that ties
    in the true proportions are not broken by float rounding.
    """
    n_a, n_d = sum(dist.counts_a), sum(dist.counts_d)
    if n_a == 0 or n_d == 0:
        raise NoFacetMembers("no facet members")
    gaps = [abs(ca * n_d - cd * n_a) for ca, cd in zip(dist.counts_a, dist.counts_d)]
    arg = gaps.index(max(gaps))
    return gaps[arg] / (n_a * n_d), dist.labels[arg]


def bias_metrics(counts: FacetCounts, dist: LabelDistribution, smoothing: float = 0.0) -> BiasMetrics:
    ks, arg = ks_statistic(dist)
    return BiasMetrics(class_imbalance(counts), kl_divergence(dist, smoothing), ks, arg)


@dataclass(frozen=True)
class MetricCell:
    """Metrics for one (group, protected attribute) pair, or a null with its reason."""

    group: str
    attribute: str
    metrics: BiasMetrics | None
    counts: FacetCounts | None = None
    distribution: LabelDistribution | None = None
    reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "group": self.group,
            "attribute": self.attribute,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "counts": self.counts.to_dict() if self.counts else None,
            "distribution": self.distribution.to_dict() if self.distribution else None,
            "reason": self.reason,
        }


def audit_group(
    table: DataTable,
    group: str,
    rows: np.ndarray,
    facets: Sequence[FacetSpec],
    labels: np.ndarray,
    classes: Sequence[str],
    smoothing: float = 0.0,
) -> list[MetricCell]:
    """Compute one :class:`MetricCell` per facet for the rows of one group.

    ``labels`` is aligned with ``table``; negative codes mark unlabeled rows,
    which still count toward facet membership (and hence CI) but not toward
    the label distributions.
    """
    if len(rows) == 0:
        raise ValueError(f"group {group!r} is empty")
    cells = []
    for facet in facets:
        counts = dist = None
        try:
            counts = facet_counts(table, facet, rows)
            dist = label_distribution(table, facet, labels, classes, rows)
            cells.append(MetricCell(group, facet.attribute, bias_metrics(counts, dist, smoothing), counts, dist))
        except NoFacetMembers as exc:
            cells.append(MetricCell(group, facet.attribute, None, counts, dist, reason=str(exc)))
    return cells
