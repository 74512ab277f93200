"""Random forest identification model and extra-trees feature selection."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from moodid._seeding import derive_seed
from moodid.learn.tree import Tree, grow_tree

log = logging.getLogger(__name__)


class DegenerateWindowError(ValueError):
    """Training data has fewer than two classes."""


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 250
    max_features: object = "sqrt"
    min_samples_split: int = 2
    max_depth: int | None = None
    bootstrap: bool = True


@dataclass(frozen=True)
class ExtraTreesParams:
    n_estimators: int = 50
    max_features: object = "sqrt"
    min_samples_split: int = 2
    max_depth: int | None = None
    bootstrap: bool = False


@dataclass(eq=False)
class ForestModel:
    trees: list[Tree]
    classes: np.ndarray
    n_features: int
    master_seed: int
    params: ForestParams = field(default_factory=ForestParams)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    def votes(self, X) -> np.ndarray:
        """Per-row vote counts, shape (n_rows, n_classes)."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} columns, got shape {X.shape}")
        votes = np.zeros((len(X), len(self.classes)), dtype=np.int64)
        rows = np.arange(len(X))
        for tree in self.trees:
            np.add.at(votes, (rows, tree.predict_index(X)), 1)
        return votes

    def to_dict(self) -> dict:
        return {
            "classes": self.classes.tolist(),
            "n_features": self.n_features,
            "master_seed": self.master_seed,
            "params": asdict(self.params),
            "trees": [t.to_dict() for t in self.trees],
        }


def _encode_labels(y) -> tuple[np.ndarray, np.ndarray]:
    classes, y_idx = np.unique(np.asarray(y), return_inverse=True)
    if len(classes) < 2:
        raise DegenerateWindowError(f"need at least 2 distinct labels, got {len(classes)}")
    return classes, y_idx


def _map(fn, items, n_jobs: int):
    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def fit_forest(X, y, params: ForestParams | None = None, seed: int = 0, n_jobs: int = 1) -> ForestModel:
    """Fit a bagged forest of CART trees.

    Tree *i* draws its bootstrap sample and feature subsets from its own
    generator seeded by ``derive_seed(seed, i)``, so the model does not
    depend on ``n_jobs``.
    """
    params = params or ForestParams()
    X = np.asfortranarray(X, dtype=np.float64)
    classes, y_idx = _encode_labels(y)
    n = len(X)

    def one(i: int) -> Tree:
        rng = np.random.default_rng(derive_seed(seed, i))
        sample = rng.integers(0, n, size=n) if params.bootstrap else None
        tree, _ = grow_tree(
            X, y_idx, len(classes), int(rng.integers(2**32)),
            max_features=params.max_features,
            splitter="best",
            min_samples_split=params.min_samples_split,
            max_depth=params.max_depth,
            sample_index=sample,
        )
        return tree

    trees = _map(one, range(params.n_trees), n_jobs)
    return ForestModel(trees, classes, X.shape[1], seed, params)


def predict(model: ForestModel, X) -> np.ndarray:
    """Majority vote over trees; ties go to the smallest label."""
    return model.classes[np.argmax(model.votes(X), axis=1)]


def extra_trees_importance(
    X, y, n_estimators: int = 50, seed: int = 0, params: ExtraTreesParams | None = None, n_jobs: int = 1
) -> np.ndarray:
    """Mean impurity decrease per column over an extremely randomized ensemble.

    Normalised to sum to 1; all zeros when no tree made a split.
    """
    params = params or ExtraTreesParams(n_estimators=n_estimators)
    X = np.asfortranarray(X, dtype=np.float64)
    classes, y_idx = _encode_labels(y)
    n = len(X)

    def one(i: int) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(seed, i))
        sample = rng.integers(0, n, size=n) if params.bootstrap else None
        _, imp = grow_tree(
            X, y_idx, len(classes), int(rng.integers(2**32)),
            max_features=params.max_features,
            splitter="random",
            min_samples_split=params.min_samples_split,
            max_depth=params.max_depth,
            sample_index=sample,
        )
        return imp

    per_tree = _map(one, range(params.n_estimators), n_jobs)
    total = np.mean(per_tree, axis=0) if per_tree else np.zeros(X.shape[1])
    s = total.sum()
    return total / s if s > 0 else np.zeros(X.shape[1])


def select_features(importance, threshold: str | float = "mean") -> np.ndarray:
    """Column indices whose importance is strictly above the threshold.

    All columns are returned when every importance is equal (this includes
    the all-zero vector, which means the selector never split).
    """
    imp = np.asarray(importance, dtype=float)
    if imp.size == 0:
        return np.arange(0)
    if np.all(imp == imp[0]):
        if imp[0] == 0:
            log.info("feature selection disabled: importance vector is all zero")
        return np.arange(imp.size)
    cut = imp.mean() if threshold == "mean" else float(threshold)
    return np.flatnonzero(imp > cut)
