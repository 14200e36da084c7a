"""Forest serialization as a JSON Lines node table.

Line 1 is a header object (``format``, ``format_version``, classes, feature
schema, fingerprint, training config, metadata, tree count). Every further
line is one node record::

    [tree, node, kind, feature, threshold, left, right, counts]

``kind`` is ``"leaf"``, ``"num"`` (left iff x <= threshold) or ``"cat"``
(left iff x == threshold, a category code). Leaves carry ``null`` for
feature/threshold/children. Records are ordered by tree, then node id.
Floats are written with ``repr`` precision, so a load reproduces the
exact thresholds and therefore identical predictions.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DataError
from .forest import ForestConfig, ForestModel
from .tree import LEAF, Tree

FORMAT = "facetaudit-forest"
FORMAT_VERSION = 1


def _dump(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def save_forest(model: ForestModel, path: str | Path) -> None:
    header = {
        "format": FORMAT,
        "format_version": FORMAT_VERSION,
        "classes": list(model.classes),
        "features": [
            {"name": n, "categorical": c, "median": m}
            for n, c, m in zip(model.features, model.categorical, model.medians)
        ],
        "fingerprint": model.fingerprint,
        "n_train": model.n_train,
        "config": {
            "master_seed": model.config.master_seed,
            "n_estimators": model.config.n_estimators,
            "max_depth": model.config.max_depth,
            "min_samples_split": model.config.min_samples_split,
            "features_per_split": model.config.features_per_split,
        },
        "metadata": model.metadata,
        "n_trees": model.n_estimators,
    }
    lines = [_dump(header)]
    for t, tree in enumerate(model.trees):
        for i in range(tree.n_nodes):
            counts = tree.counts[i].tolist()
            if tree.feature[i] == LEAF:
                rec = [t, i, "leaf", None, None, None, None, counts]
            else:
                rec = [
                    t, i, "cat" if tree.categorical[i] else "num",
                    int(tree.feature[i]), float(tree.threshold[i]),
                    int(tree.left[i]), int(tree.right[i]), counts,
                ]
            lines.append(_dump(rec))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_forest(path: str | Path) -> ForestModel:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        header = json.loads(lines[0])
        records = [json.loads(line) for line in lines[1:] if line]
    except (OSError, IndexError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot load forest from {path}: {exc}") from None
    if header.get("format") != FORMAT or header.get("format_version") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported model format {header.get('format')!r} v{header.get('format_version')}")

    per_tree: list[list] = [[] for _ in range(header["n_trees"])]
    for rec in records:
        per_tree[rec[0]].append(rec)
    trees = []
    for t, recs in enumerate(per_tree):
        if [r[1] for r in recs] != list(range(len(recs))):
            raise DataError(f"{path}: tree {t} node records are not contiguous")
        leaf = [r[2] == "leaf" for r in recs]
        trees.append(Tree(
            feature=np.array([LEAF if lf else r[3] for r, lf in zip(recs, leaf)], dtype=np.int64),
            categorical=np.array([r[2] == "cat" for r in recs], dtype=bool),
            threshold=np.array([0.0 if lf else r[4] for r, lf in zip(recs, leaf)], dtype=np.float64),
            left=np.array([LEAF if lf else r[5] for r, lf in zip(recs, leaf)], dtype=np.int64),
            right=np.array([LEAF if lf else r[6] for r, lf in zip(recs, leaf)], dtype=np.int64),
            counts=np.array([r[7] for r in recs], dtype=np.int64).reshape(len(recs), len(header["classes"])),
        ))
    feats = header["features"]
    return ForestModel(
        trees=trees,
        classes=tuple(header["classes"]),
        features=tuple(f["name"] for f in feats),
        categorical=tuple(f["categorical"] for f in feats),
        medians=tuple(f["median"] for f in feats),
        fingerprint=header["fingerprint"],
        config=ForestConfig(**header["config"]),
        n_train=header["n_train"],
        metadata=header["metadata"],
    )
