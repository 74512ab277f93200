"""CART classification trees on dense numeric matrices.

Two splitters share one tree builder:

* ``"best"``: exhaustive search over midpoints between sorted distinct values
  of each candidate column (classic CART).
* ``"random"``: one uniform threshold per candidate column drawn inside the
  node's value range (extremely randomized trees).

Each node draws ``max_features`` columns at random without replacement.
Constant columns count toward that number but yield no split; drawing only
continues past ``max_features`` while every drawn column was constant.
Columns found constant in a node are remembered for its descendants. The split with the lowest weighted Gini impurity wins, ties going
to the lowest column index and then the lowest threshold.

The builder is compiled with numba; it is the hot loop of every experiment.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

LEAF = -1
_TIE_TOL = 1e-12


def gini(counts) -> float:
    """Gini impurity ``1 - sum p_c^2`` of a class histogram."""
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts / n
    return float(1.0 - np.dot(p, p))


def resolve_max_features(max_features, n_features: int) -> int:
    if max_features is None or max_features == "all":
        return n_features
    if max_features == "sqrt":
        return max(1, math.ceil(math.sqrt(n_features)))
    if isinstance(max_features, float):
        return max(1, min(n_features, math.ceil(max_features * n_features)))
    return max(1, min(n_features, int(max_features)))


@dataclass(eq=False)
class Tree:
    """Array-encoded binary tree; rows go left when ``x[feature] <= threshold``."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray  # per-node class histogram, shape (n_nodes, n_classes)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def n_leaves(self) -> int:
        return int(np.sum(self.feature == LEAF))

    def apply(self, X) -> np.ndarray:
        """Leaf node id reached by each row."""
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _apply(self.feature, self.threshold, self.left, self.right, X)

    def predict_index(self, X) -> np.ndarray:
        """Class index voted by each row's leaf (ties -> lowest index)."""
        return np.argmax(self.value[self.apply(X)], axis=1)

    def to_dict(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": [None if np.isnan(t) else float(t) for t in self.threshold],
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
        }


@numba.njit(cache=True, nogil=True)
def _apply(feature, threshold, left, right, X):
    out = np.empty(X.shape[0], np.int64)
    for i in range(X.shape[0]):
        node = 0
        while feature[node] != -1:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@numba.njit(cache=True)
def _better(score, col, thr, best, best_col, best_thr):
    if score < best - _TIE_TOL:
        return True
    if score <= best + _TIE_TOL:
        return col < best_col or (col == best_col and thr < best_thr)
    return False


@numba.njit(cache=True, nogil=True)
def _grow(X, y, n_classes, rows, k, random_split, min_samples_split, max_depth, seed):
    np.random.seed(seed)
    n_root, d = rows.shape[0], X.shape[1]
    cap = 2 * n_root + 1
    feature = np.full(cap, -1, np.int64)
    threshold = np.full(cap, np.nan)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros((cap, n_classes), np.int64)
    importance = np.zeros(d)

    idx = rows.copy()
    # features[:n_const] holds columns known to be constant in the current
    # node; constant_features keeps their order intact for sibling nodes.
    features = np.arange(d)
    constant_features = np.empty(d, np.int64)
    vals = np.empty(n_root)
    lc = np.empty(n_classes)
    tot = np.empty(n_classes)

    for i in range(n_root):
        value[0, y[idx[i]]] += 1
    n_nodes = 1
    st_start = np.empty(cap, np.int64)
    st_end = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    st_node = np.empty(cap, np.int64)
    st_const = np.empty(cap, np.int64)
    st_start[0], st_end[0], st_depth[0], st_node[0], st_const[0] = 0, n_root, 0, 0, 0
    top = 1

    while top > 0:
        top -= 1
        start, end, depth, node = st_start[top], st_end[top], st_depth[top], st_node[top]
        n_known = st_const[top]
        n = end - start
        cmax = 0
        sq = 0.0
        for c in range(n_classes):
            tot[c] = value[node, c]
            sq += tot[c] * tot[c]
            if value[node, c] > cmax:
                cmax = value[node, c]
        if n < min_samples_split or cmax == n or (max_depth >= 0 and depth >= max_depth):
            continue
        node_imp = 1.0 - sq / (n * n)

        best = np.inf
        best_col = -1
        best_thr = 0.0
        # Draw columns without replacement until k have been drawn and at
        # least one of them was non-constant.
        f_i = d
        n_found = 0
        n_drawn = 0
        n_total = n_known
        n_visited = 0
        while f_i > n_total and (n_visited < k or n_visited <= n_found + n_drawn):
            n_visited += 1
            f_j = n_drawn + np.random.randint(f_i - n_found - n_drawn)
            if f_j < n_known:
                tmp = features[n_drawn]
                features[n_drawn] = features[f_j]
                features[f_j] = tmp
                n_drawn += 1
                continue
            f_j += n_found
            col = features[f_j]
            lo = np.inf
            hi = -np.inf
            n_distinct = 1
            first = X[idx[start], col]
            other = first
            for i in range(start, end):
                v = X[idx[i], col]
                vals[i - start] = v
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
                if n_distinct < 3 and v != first and v != other:
                    n_distinct += 1
                    other = v
            if not hi > lo:
                features[f_j] = features[n_total]
                features[n_total] = col
                n_found += 1
                n_total += 1
                continue
            f_i -= 1
            features[f_j] = features[f_i]
            features[f_i] = col
            if random_split:
                thr = lo + np.random.random() * (hi - lo)
                if thr >= hi:
                    thr = lo
                lc[:] = 0.0
                nl = 0
                for i in range(start, end):
                    if vals[i - start] <= thr:
                        lc[y[idx[i]]] += 1.0
                        nl += 1
                nr = n - nl
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += lc[c] * lc[c]
                    rc = tot[c] - lc[c]
                    sr += rc * rc
                score = ((nl - sl / nl) + (nr - sr / nr)) / n
                if _better(score, col, thr, best, best_col, best_thr):
                    best, best_col, best_thr = score, col, thr
            elif n_distinct == 2:
                # A single boundary: score it without sorting.
                lc[:] = 0.0
                nl = 0
                for i in range(start, end):
                    if vals[i - start] == lo:
                        lc[y[idx[i]]] += 1.0
                        nl += 1
                nr = n - nl
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    sl += lc[c] * lc[c]
                    rc = tot[c] - lc[c]
                    sr += rc * rc
                score = ((nl - sl / nl) + (nr - sr / nr)) / n
                thr = lo + (hi - lo) / 2.0
                if not (lo <= thr and thr < hi):
                    thr = lo
                if _better(score, col, thr, best, best_col, best_thr):
                    best, best_col, best_thr = score, col, thr
            else:
                order = np.argsort(vals[:n])
                lc[:] = 0.0
                # Sums of squared class counts, updated as rows move left.
                # They stay exact integers, so scores match a full recount.
                sl = 0.0
                sr = sq
                for p in range(n - 1):
                    c = y[idx[start + order[p]]]
                    sl += 2.0 * lc[c] + 1.0
                    sr -= 2.0 * (tot[c] - lc[c]) - 1.0
                    lc[c] += 1.0
                    a = vals[order[p]]
                    b = vals[order[p + 1]]
                    if not b > a:
                        continue
                    nl = p + 1
                    nr = n - nl
                    score = ((nl - sl / nl) + (nr - sr / nr)) / n
                    thr = a + (b - a) / 2.0
                    if not (a <= thr and thr < b):
                        thr = a
                    if _better(score, col, thr, best, best_col, best_thr):
                        best, best_col, best_thr = score, col, thr

        # Restore the inherited constants' order and record the new ones.
        features[:n_known] = constant_features[:n_known]
        constant_features[n_known:n_total] = features[n_known:n_total]

        if best_col < 0:
            continue
        # Partition idx[start:end] so rows going left come first.
        i, jj = start, end - 1
        while i <= jj:
            if X[idx[i], best_col] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[jj]
                idx[jj] = tmp
                jj -= 1
        mid = i
        importance[best_col] += n / n_root * (node_imp - best)
        feature[node] = best_col
        threshold[node] = best_thr
        l_id, r_id = n_nodes, n_nodes + 1
        n_nodes += 2
        left[node], right[node] = l_id, r_id
        for q in range(start, mid):
            value[l_id, y[idx[q]]] += 1
        for q in range(mid, end):
            value[r_id, y[idx[q]]] += 1
        # Right pushed first so the left subtree is numbered first.
        st_start[top], st_end[top], st_depth[top], st_node[top], st_const[top] = mid, end, depth + 1, r_id, n_total
        top += 1
        st_start[top], st_end[top], st_depth[top], st_node[top], st_const[top] = start, mid, depth + 1, l_id, n_total
        top += 1

    return (
        feature[:n_nodes], threshold[:n_nodes], left[:n_nodes],
        right[:n_nodes], value[:n_nodes], importance,
    )


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    seed: int,
    *,
    max_features=None,
    splitter: str = "best",
    min_samples_split: int = 2,
    max_depth: int | None = None,
    sample_index: np.ndarray | None = None,
):
    """Grow one tree on rows ``sample_index`` (repeats allowed) of ``X``.

    *y* holds class indices in ``[0, n_classes)``; *seed* (reduced to 32
    bits) drives the column order and random thresholds. Returns the tree
    and the per-column impurity decrease it produced, weighted by node size
    relative to the root.
    """
    if splitter not in ("best", "random"):
        raise ValueError(f"unknown splitter {splitter!r}")
    # Column-major so that scanning one column touches contiguous memory.
    X = np.asfortranarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.int64)
    if sample_index is None:
        rows = np.arange(len(X), dtype=np.int64)
    else:
        rows = np.ascontiguousarray(sample_index, dtype=np.int64)
    if len(rows) == 0:
        raise ValueError("cannot grow a tree on zero rows")
    k = resolve_max_features(max_features, X.shape[1]) if X.shape[1] else 0
    feature, threshold, left, right, value, imp = _grow(
        X, y, n_classes, rows, k, splitter == "random",
        min_samples_split, -1 if max_depth is None else max_depth, seed & 0xFFFFFFFF,
    )
    return Tree(feature, threshold, left, right, value), np.maximum(imp, 0.0)
