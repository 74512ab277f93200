from moodid.learn.forest import (
    DegenerateWindowError,
    ExtraTreesParams,
    ForestModel,
    ForestParams,
    extra_trees_importance,
    fit_forest,
    predict,
    select_features,
)
from moodid.learn.tree import Tree, gini, grow_tree

__all__ = [
    "DegenerateWindowError",
    "ExtraTreesParams",
    "ForestModel",
    "ForestParams",
    "Tree",
    "extra_trees_importance",
    "fit_forest",
    "gini",
    "grow_tree",
    "predict",
    "select_features",
]
