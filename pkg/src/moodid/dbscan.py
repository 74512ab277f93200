"""Density-based clustering of GPS fixes.

Labels follow scan order: points are visited by index, each unvisited core
point seeds a new cluster, and a border point joins the first cluster that
reaches it. Neighbourhoods use Euclidean distance on raw coordinates and
include the point itself.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def dbscan(points, eps: float = 0.5, min_pts: int = 5) -> np.ndarray:
    """Cluster *points* (n x k array) and return integer labels.

    Cluster ids are 0, 1, ... in order of their first core point; noise is
    ``NOISE``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be at least 1")
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels
    if pts.ndim == 1:
        pts = pts[:, None]

    tree = cKDTree(pts)
    counts = tree.query_ball_point(pts, r=eps, return_length=True)
    core = counts >= min_pts
    assigned = np.zeros(n, dtype=bool)
    expanded = np.zeros(n, dtype=bool)

    cluster = 0
    for seed in np.flatnonzero(core):
        if assigned[seed]:
            continue
        labels[seed] = cluster
        assigned[seed] = True
        frontier = np.array([seed])
        # Breadth-first over core points; every point reached by this cluster's
        # expansion is claimed before the next cluster starts.
        while frontier.size:
            expanded[frontier] = True
            hoods = tree.query_ball_point(pts[frontier], r=eps)
            reach = np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hoods]))
            fresh = reach[~assigned[reach]]
            labels[fresh] = cluster
            assigned[fresh] = True
            grow = reach[core[reach] & ~expanded[reach]]
            frontier = grow
        cluster += 1
    return labels
