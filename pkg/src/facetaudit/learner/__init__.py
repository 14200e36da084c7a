from .forest import (
    ForestConfig,
    ForestModel,
    check_schema,
    feature_columns,
    oob_accuracy,
    predict,
    train_forest,
    votes,
)
from .io import load_forest, save_forest
from .tree import Tree, gini_impurity, grow_tree

__all__ = [
    "ForestConfig",
    "ForestModel",
    "Tree",
    "check_schema",
    "feature_columns",
    "gini_impurity",
    "grow_tree",
    "load_forest",
    "oob_accuracy",
    "predict",
    "save_forest",
    "train_forest",
    "votes",
]
