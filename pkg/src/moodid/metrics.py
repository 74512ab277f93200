"""Identification metrics and EMA correlation analysis."""

from __future__ import annotations

import logging
import math

import numpy as np

from moodid.types import EmaTopic

log = logging.getLogger(__name__)


def precision(tp: int, fp: int) -> float:
    return tp / (tp + fp) if tp + fp > 0 else 0.0


def recall(tp: int, fn: int) -> float:
    return tp / (tp + fn) if tp + fn > 0 else 0.0


def f_score(tp: int, fp: int, fn: int) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    p, r = precision(tp, fp), recall(tp, fn)
    if p + r == 0:
        if tp == fp == fn == 0:
            log.debug("f_score on empty confusion counts; returning 0")
        return 0.0
    return 2 * p * r / (p + r)


def confusion_counts(y_true, y_pred, classes) -> dict:
    """Per-class (tp, fp, fn) for the given classes."""
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    out = {}
    for c in classes:
        t, p = y_true == c, y_pred == c
        out[c.item() if hasattr(c, "item") else c] = (
            int(np.sum(t & p)),
            int(np.sum(~t & p)),
            int(np.sum(t & ~p)),
        )
    return out


def macro_f(per_class) -> float:
    """Unweighted mean F over the (tp, fp, fn) triples given."""
    scores = [f_score(*c) for c in per_class]
    return float(np.mean(scores)) if scores else 0.0


def identification_scores(y_true, y_pred) -> dict[str, float]:
    """Macro, micro and support-weighted scores over subjects present in *y_true*."""
    present = np.unique(np.asarray(y_true))
    counts = confusion_counts(y_true, y_pred, present)
    triples = list(counts.values())
    support = np.array([tp + fn for tp, _, fn in triples], dtype=float)
    f = np.array([f_score(*c) for c in triples])
    tp, fp, fn = (sum(c[i] for c in triples) for i in range(3))
    return {
        "f_score": macro_f(triples),
        "precision": float(np.mean([precision(t, p) for t, p, _ in triples])),
        "recall": float(np.mean([recall(t, n) for t, _, n in triples])),
        "micro_f": f_score(tp, fp, fn),
        "weighted_f": float(np.dot(f, support) / support.sum()) if support.sum() else 0.0,
    }


def pearson(x, y) -> float:
    """Pearson r via a single streaming pass; NaN when undefined."""
    n = 0
    mx = my = 0.0
    sxx = syy = sxy = 0.0
    for a, b in zip(x, y):
        n += 1
        dx = a - mx
        mx += dx / n
        my_old = my
        my += (b - my) / n
        sxx += dx * (a - mx)
        syy += (b - my_old) * (b - my)
        sxy += dx * (b - my)
    if n < 2 or sxx <= 0 or syy <= 0:
        return math.nan
    r = sxy / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def correlation_names() -> list[str]:
    topics = [t.value for t in EmaTopic]
    return topics + [f"D_{t}" for t in topics]


def ema_correlations(raw_map, daily_map) -> tuple[list[str], np.ndarray]:
    """Pairwise Pearson r over raw hourly and daily-propagated EMA topics.

    Each entry uses the hours where both series are present. Entries that
    cannot be computed are NaN.
    """
    series = []
    for source in (raw_map, daily_map):
        for topic in EmaTopic:
            series.append({k: v[topic] for k, v in source.items() if topic in v})
    names = correlation_names()
    m = len(series)
    out = np.full((m, m), np.nan)
    for i in range(m):
        for j in range(i, m):
            common = sorted(series[i].keys() & series[j].keys())
            r = pearson([series[i][k] for k in common], [series[j][k] for k in common])
            if i == j and not math.isnan(r):
                r = 1.0
            out[i, j] = out[j, i] = r
    return names, out
