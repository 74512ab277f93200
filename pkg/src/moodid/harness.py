"""Sliding-window identification experiments.

For each start hour ``h`` the forest trains on hours ``[h, h+delta]`` and
tests on ``[h+delta+1, h+2*delta+1]`` for every subject. Mood regimes drop
(``exclude``) or keep only (``only``) samples flagged with a mood, on both
sides of the split.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import NamedTuple

import numpy as np

from moodid._seeding import config_hash, derive_seed
from moodid.featurize import FeatureMatrix
from moodid.learn import (
    ExtraTreesParams,
    ForestParams,
    extra_trees_importance,
    fit_forest,
    predict,
    select_features,
)
from moodid.metrics import identification_scores
from moodid.mood import DatasetVariant
from moodid.types import Mood

log = logging.getLogger(__name__)

DELTA_RANGE = (4, 24)


class Regime(str, enum.Enum):
    ALL = "all"
    EXCLUDE = "exclude"
    ONLY = "only"


class NoEvaluableWindows(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    delta: int
    regime: Regime = Regime.ALL
    mood: Mood | None = None
    variant: DatasetVariant | None = None
    master_seed: int = 0
    stride: int = 1
    forest: ForestParams = field(default_factory=ForestParams)
    selector: ExtraTreesParams = field(default_factory=ExtraTreesParams)
    selection_threshold: str | float = "mean"

    def __post_init__(self) -> None:
        object.__setattr__(self, "regime", Regime(self.regime))
        if self.mood is not None:
            object.__setattr__(self, "mood", Mood(self.mood))
        if self.variant is not None:
            object.__setattr__(self, "variant", DatasetVariant(self.variant))
        lo, hi = DELTA_RANGE
        if not lo <= self.delta <= hi:
            raise ValueError(f"delta {self.delta} outside [{lo}, {hi}]")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.regime is not Regime.ALL:
            if self.mood is None:
                raise ValueError(f"regime {self.regime.value} needs a mood")
            if self.variant not in (DatasetVariant.H, DatasetVariant.D):
                raise ValueError(f"regime {self.regime.value} needs variant H or D")

    @property
    def name(self) -> str:
        if self.regime is Regime.ALL:
            return f"all_d{self.delta}"
        return f"{self.regime.value}_{self.mood.value}_{self.variant.value}_d{self.delta}"

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "regime": self.regime.value,
            "mood": self.mood.value if self.mood else None,
            "variant": self.variant.value if self.variant else None,
            "master_seed": self.master_seed,
            "stride": self.stride,
            "forest": asdict(self.forest),
            "selector": asdict(self.selector),
            "selection_threshold": self.selection_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> ExperimentConfig:
        d = dict(d)
        d["forest"] = ForestParams(**d.get("forest", {}))
        d["selector"] = ExtraTreesParams(**d.get("selector", {}))
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


class Window(NamedTuple):
    index: int
    train: tuple[int, int]  # inclusive hour range
    test: tuple[int, int]


def make_windows(grid_length: int, delta: int, stride: int = 1) -> list[Window]:
    if grid_length <= 2 * delta + 1:
        raise ValueError(f"grid of {grid_length} hours too short for delta={delta}")
    starts = range(0, grid_length - 2 * delta - 1, stride)
    return [
        Window(i, (h, h + delta), (h + delta + 1, h + 2 * delta + 1))
        for i, h in enumerate(starts)
    ]


def filter_regime(rows: np.ndarray, flags: np.ndarray | None, regime) -> np.ndarray:
    """Row indices kept by *regime*; *flags* is the mood flag per matrix row."""
    regime = Regime(regime)
    if regime is Regime.ALL:
        return rows
    keep = flags[rows]
    return rows[~keep] if regime is Regime.EXCLUDE else rows[keep]


@dataclass
class WindowRecord:
    window_index: int
    window_start_hour: int
    train_size: int
    test_size: int
    f_score: float
    precision: float
    recall: float
    micro_f: float
    weighted_f: float
    selected_columns: tuple[int, ...]


@dataclass
class SkippedWindow:
    window_index: int
    window_start_hour: int
    reason: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list[WindowRecord]
    skipped: list[SkippedWindow]
    columns: tuple[str, ...]
    inputs: dict = field(default_factory=dict)

    @property
    def f_scores(self) -> np.ndarray:
        return np.array([r.f_score for r in self.records])

    def aggregates(self) -> dict:
        f = self.f_scores
        return {
            "mean_f": float(f.mean()),
            "min_f": float(f.min()),
            "max_f": float(f.max()),
            "mean_precision": float(np.mean([r.precision for r in self.records])),
            "mean_recall": float(np.mean([r.recall for r in self.records])),
            "mean_micro_f": float(np.mean([r.micro_f for r in self.records])),
            "mean_weighted_f": float(np.mean([r.weighted_f for r in self.records])),
            "n_windows": len(self.records),
            "n_skipped": len(self.skipped),
        }

    @property
    def hash(self) -> str:
        return config_hash({"config": self.config.to_dict(), "inputs": self.inputs})


def mood_flags(matrix: FeatureMatrix, labels, mood: Mood | None) -> np.ndarray | None:
    """Per-row boolean flag for *mood*; unlabelled keys count as False."""
    if mood is None:
        return None
    mood = Mood(mood)
    return np.array([bool(labels[k].flag(mood)) if k in labels else False for k in matrix.rows])


def evaluate_window(X, subjects, hours, flags, config: ExperimentConfig, window: Window):
    """Run selection, fitting and scoring for one window.

    Returns a ``WindowRecord`` or a ``SkippedWindow``.
    """
    def rows_in(lo, hi):
        a, b = np.searchsorted(hours, [lo, hi + 1])
        return np.arange(a, b)

    train = filter_regime(rows_in(*window.train), flags, config.regime)
    test = filter_regime(rows_in(*window.test), flags, config.regime)
    start = window.train[0]
    n_train_subj = len(np.unique(subjects[train]))
    n_test_subj = len(np.unique(subjects[test]))
    if n_train_subj < 2 or n_test_subj < 2:
        return SkippedWindow(
            window.index, start,
            f"fewer than 2 subjects (train={n_train_subj}, test={n_test_subj})",
        )

    seed = derive_seed(config.master_seed, window.index)
    Xtr, ytr = X[train], subjects[train]
    imp = extra_trees_importance(
        Xtr, ytr, seed=derive_seed(seed, 0), params=config.selector
    )
    selected = select_features(imp, config.selection_threshold)
    model = fit_forest(Xtr[:, selected], ytr, config.forest, seed=derive_seed(seed, 1))
    pred = predict(model, X[test][:, selected])
    scores = identification_scores(subjects[test], pred)
    return WindowRecord(
        window_index=window.index,
        window_start_hour=start,
        train_size=len(train),
        test_size=len(test),
        selected_columns=tuple(int(c) for c in selected),
        **scores,
    )


_WORKER: dict = {}


def _init_worker(X, subjects, hours, flags, config):
    _WORKER.update(X=X, subjects=subjects, hours=hours, flags=flags, config=config)


def _run_window(window: Window):
    w = _WORKER
    return evaluate_window(w["X"], w["subjects"], w["hours"], w["flags"], w["config"], window)


def run_experiment(config: ExperimentConfig, matrix: FeatureMatrix, labels=None, jobs: int = 1) -> ExperimentResult:
    """Evaluate every sliding window of *config* over *matrix*.

    *labels* maps ``HourKey -> MoodLabels`` for the config's variant and is
    only consulted by the exclude/only regimes. Windows are independent and
    seeded from their index, so the result does not depend on *jobs*.
    """
    hours = matrix.hours
    if np.any(np.diff(hours) < 0):
        raise ValueError("matrix rows must be ordered by hour")
    if config.regime is not Regime.ALL and labels is None:
        raise ValueError("mood regimes need labels")
    flags = mood_flags(matrix, labels, config.mood) if config.regime is not Regime.ALL else None
    grid = int(hours.max()) + 1 if len(hours) else 0
    windows = make_windows(grid, config.delta, config.stride)
    X, subjects = matrix.values, matrix.subjects

    if jobs > 1:
        with ProcessPoolExecutor(
            max_workers=jobs, initializer=_init_worker,
            initargs=(X, subjects, hours, flags, config),
        ) as pool:
            outcomes = list(pool.map(_run_window, windows, chunksize=max(1, len(windows) // (4 * jobs))))
    else:
        outcomes = [evaluate_window(X, subjects, hours, flags, config, w) for w in windows]

    records = [o for o in outcomes if isinstance(o, WindowRecord)]
    skipped = [o for o in outcomes if isinstance(o, SkippedWindow)]
    for s in skipped:
        log.info("%s: skipped window %d: %s", config.name, s.window_index, s.reason)
    if not records:
        raise NoEvaluableWindows(f"{config.name}: no evaluable windows ({len(skipped)} skipped)")
    return ExperimentResult(config, records, skipped, matrix.columns)


def saliency_frequencies(results, top_k: int | None = None) -> list[tuple[str, float]]:
    """Normalised selection frequency of each feature across all windows.

    Sorted by descending frequency, then name.
    """
    counts: Counter[str] = Counter()
    for res in results:
        for rec in res.records:
            counts.update(res.columns[c] for c in rec.selected_columns)
    total = sum(counts.values())
    if total == 0:
        raise ValueError("no selection events to count")
    ranked = sorted(((name, n / total) for name, n in counts.items()), key=lambda t: (-t[1], t[0]))
    return ranked[:top_k] if top_k is not None else ranked


# -- persistence --------------------------------------------------------------

WINDOW_COLUMNS = (
    "window_index", "window_start_hour", "train_size", "test_size",
    "f_score", "precision", "recall", "micro_f", "weighted_f", "n_selected",
)


def save_result(result: ExperimentResult, out_dir) -> dict[str, Path]:
    """Write the per-window CSV, selection log and aggregate JSON."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    tag = f"{result.config.name}_{result.hash}"
    paths = {
        "windows": out / f"windows_{tag}.csv",
        "selected": out / f"selected_{tag}.csv",
        "aggregate": out / f"aggregate_{tag}.json",
    }
    with open(paths["windows"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(WINDOW_COLUMNS)
        for r in result.records:
            w.writerow([
                r.window_index, r.window_start_hour, r.train_size, r.test_size,
                repr(r.f_score), repr(r.precision), repr(r.recall),
                repr(r.micro_f), repr(r.weighted_f), len(r.selected_columns),
            ])
    with open(paths["selected"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("window_index", "column_index", "feature"))
        for r in result.records:
            w.writerows((r.window_index, c, result.columns[c]) for c in r.selected_columns)
    doc = {
        "config_hash": result.hash,
        "name": result.config.name,
        "config": result.config.to_dict(),
        "inputs": result.inputs,
        "aggregates": result.aggregates(),
        "skipped": [asdict(s) for s in result.skipped],
        "files": {k: p.name for k, p in paths.items() if k != "aggregate"},
    }
    paths["aggregate"].write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def load_result(aggregate_path) -> ExperimentResult:
    path = Path(aggregate_path)
    doc = json.loads(path.read_text(encoding="utf-8"))
    config = ExperimentConfig.from_dict(doc["config"])
    selected: dict[int, list[int]] = {}
    names: dict[int, str] = {}
    with open(path.parent / doc["files"]["selected"], newline="", encoding="utf-8") as fh:
        r = csv.DictReader(fh)
        for row in r:
            c = int(row["column_index"])
            selected.setdefault(int(row["window_index"]), []).append(c)
            names[c] = row["feature"]
    records = []
    with open(path.parent / doc["files"]["windows"], newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            idx = int(row["window_index"])
            records.append(WindowRecord(
                window_index=idx,
                window_start_hour=int(row["window_start_hour"]),
                train_size=int(row["train_size"]),
                test_size=int(row["test_size"]),
                f_score=float(row["f_score"]),
                precision=float(row["precision"]),
                recall=float(row["recall"]),
                micro_f=float(row["micro_f"]),
                weighted_f=float(row["weighted_f"]),
                selected_columns=tuple(selected.get(idx, ())),
            ))
    # Only selected columns are recoverable; others are left unnamed.
    width = max(names) + 1 if names else 0
    columns = tuple(names.get(i, "") for i in range(width))
    skipped = [SkippedWindow(**s) for s in doc["skipped"]]
    result = ExperimentResult(config, records, skipped, columns, doc.get("inputs", {}))
    if result.hash != doc["config_hash"]:
        raise ValueError(f"{path}: config hash mismatch (file edited or stale)")
    return result
