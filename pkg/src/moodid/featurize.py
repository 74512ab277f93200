"""Hourly feature extraction and one-hot encoding into a FeatureMatrix."""

from __future__ import annotations

import csv
import hashlib
import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from moodid.dbscan import NOISE, dbscan
from moodid.types import (
    MULTI_MODE_CODE,
    NO_DATA_CODE,
    ActivityInf,
    AppTask,
    AudioInf,
    Call,
    EmaResponse,
    GpsFix,
    HourKey,
    HourSample,
    LockEvent,
    StudyWindow,
)

GPS_EPS = 0.5
GPS_MIN_PTS = 5
NOISE_SYMBOL = "n"
SCALAR_COLUMNS = ("call", "audio", "activity", "lock")


class EncodingError(ValueError):
    """A token was not in the vocabulary it is being encoded against."""


def bucket_hours(events, window: StudyWindow, subjects) -> dict[HourKey, list]:
    """Assign each event to its (subject, hour) bucket on a dense grid.

    Every subject gets ``window.grid_length`` buckets, empty or not. Calls
    are bucketed by start time only.
    """
    grid = window.grid_length
    buckets: dict[HourKey, list] = {
        HourKey(s, h): [] for s in sorted(subjects) for h in range(grid)
    }
    for e in events:
        key = HourKey(e.subject, window.hour_of(e.time))
        try:
            buckets[key].append(e)
        except KeyError:
            raise ValueError(f"event outside the subject/hour grid: {e!r}") from None
    return buckets


def call_feature(durations) -> float:
    return float(sum(durations, 0.0))


def mode_code(inferences) -> int:
    """Mode of inferred classes; -1 when empty, 4 when several classes tie."""
    if not inferences:
        return NO_DATA_CODE
    counts = Counter(inferences).most_common()
    if len(counts) > 1 and counts[0][1] == counts[1][1]:
        return MULTI_MODE_CODE
    return int(counts[0][0])


def _id_key(s: str):
    return (0, int(s), "") if s.isdigit() else (1, 0, s)


def set_token(ids) -> str:
    """Space-joined sorted distinct ids; numeric ids sort numerically."""
    return " ".join(sorted({str(i) for i in ids}, key=_id_key))


def app_token(app_events) -> str:
    return set_token(e.task_id for e in app_events)


def gps_token(cluster_labels) -> str:
    """Token of the hour's cluster-label set; noise is written ``n``."""
    return set_token(NOISE_SYMBOL if lab == NOISE else str(int(lab)) for lab in cluster_labels)


def fit_gps_clusters(events, eps: float = GPS_EPS, min_pts: int = GPS_MIN_PTS) -> dict[int, int]:
    """Cluster all fixes jointly; returns ``id(event) -> label``."""
    fixes = [e for e in events if isinstance(e, GpsFix)]
    if not fixes:
        return {}
    labels = dbscan([(f.lat, f.lon) for f in fixes], eps=eps, min_pts=min_pts)
    return {id(f): int(lab) for f, lab in zip(fixes, labels)}


def hour_samples(events, window: StudyWindow, subjects, *, eps=GPS_EPS, min_pts=GPS_MIN_PTS) -> list[HourSample]:
    """Reduce the event collection to one HourSample per subject-hour.

    ``ema`` holds the per-topic mean of the hour's responses.
    """
    cluster_of = fit_gps_clusters(events, eps, min_pts)
    samples = []
    for key, evs in bucket_hours(events, window, subjects).items():
        calls, apps, fixes, audio, activity, ema = [], [], [], [], [], {}
        locks = 0
        for e in evs:
            if isinstance(e, Call):
                calls.append(e.duration)
            elif isinstance(e, AppTask):
                apps.append(e)
            elif isinstance(e, GpsFix):
                fixes.append(cluster_of[id(e)])
            elif isinstance(e, AudioInf):
                audio.append(e.cls)
            elif isinstance(e, ActivityInf):
                activity.append(e.cls)
            elif isinstance(e, LockEvent):
                locks += 1
            elif isinstance(e, EmaResponse):
                ema.setdefault(e.topic, []).append(e.value)
        samples.append(
            HourSample(
                key=key,
                call_minutes=call_feature(calls),
                app_token=app_token(apps),
                gps_token=gps_token(fixes),
                audio_code=mode_code(audio),
                activity_code=mode_code(activity),
                lock_count=locks,
                ema={t: sum(v) / len(v) for t, v in ema.items()},
            )
        )
    return samples


def build_vocabulary(tokens) -> dict[str, int]:
    """Ordered token -> column-offset map over every token observed."""
    return {tok: i for i, tok in enumerate(sorted(set(tokens)))}


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    rows: tuple[HourKey, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.shape != (len(self.rows), len(self.columns)):
            raise ValueError(
                f"matrix shape {self.values.shape} != ({len(self.rows)}, {len(self.columns)})"
            )

    @property
    def subjects(self) -> np.ndarray:
        return np.fromiter((k.subject for k in self.rows), dtype=np.int64, count=len(self.rows))

    @property
    def hours(self) -> np.ndarray:
        return np.fromiter((k.hour_index for k in self.rows), dtype=np.int64, count=len(self.rows))

    def column_index(self, name: str) -> int:
        return self.columns.index(name)

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(json.dumps([list(self.columns), [list(k) for k in self.rows]]).encode())
        h.update(np.ascontiguousarray(self.values, dtype="<f8").tobytes())
        return h.hexdigest()

    def __eq__(self, other) -> bool:
        if not isinstance(other, FeatureMatrix):
            return NotImplemented
        return (
            self.rows == other.rows
            and self.columns == other.columns
            and np.array_equal(self.values, other.values)
        )


def build_matrix(samples, app_vocab=None, gps_vocab=None) -> FeatureMatrix:
    """One-hot encode hour samples.

    Column layout is ``[apps_* | gps_* | call | audio | activity | lock]`` and
    rows are ordered by (hour_index, subject). Vocabularies default to the
    tokens present in *samples*; passing explicit ones raises
    ``EncodingError`` on any unseen token.
    """
    samples = sorted(samples, key=lambda s: (s.key.hour_index, s.key.subject))
    if app_vocab is None:
        app_vocab = build_vocabulary(s.app_token for s in samples)
    if gps_vocab is None:
        gps_vocab = build_vocabulary(s.gps_token for s in samples)
    na, ng = len(app_vocab), len(gps_vocab)
    columns = (
        [f"apps_{t}" for t in app_vocab]
        + [f"gps_{t}" for t in gps_vocab]
        + list(SCALAR_COLUMNS)
    )
    values = np.zeros((len(samples), na + ng + len(SCALAR_COLUMNS)), dtype=np.float64)
    for i, s in enumerate(samples):
        try:
            values[i, app_vocab[s.app_token]] = 1.0
        except KeyError:
            raise EncodingError(f"app token {s.app_token!r} not in vocabulary") from None
        try:
            values[i, na + gps_vocab[s.gps_token]] = 1.0
        except KeyError:
            raise EncodingError(f"gps token {s.gps_token!r} not in vocabulary") from None
        values[i, na + ng:] = (s.call_minutes, s.audio_code, s.activity_code, s.lock_count)
    return FeatureMatrix(tuple(s.key for s in samples), tuple(columns), values)


def featurize(events, window: StudyWindow, subjects, **dbscan_params) -> FeatureMatrix:
    return build_matrix(hour_samples(events, window, subjects, **dbscan_params))


# -- persistence --------------------------------------------------------------

MATRIX_FILES = {"columns": "columns.csv", "rows": "rows.csv", "values": "values.npy"}


def save_matrix(fm: FeatureMatrix, directory) -> dict[str, str]:
    """Write column names, row keys and a binary value matrix."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / MATRIX_FILES["columns"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "name"])
        w.writerows(enumerate(fm.columns))
    with open(d / MATRIX_FILES["rows"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "hour_index"])
        w.writerows(fm.rows)
    np.save(d / MATRIX_FILES["values"], np.ascontiguousarray(fm.values, dtype="<f8"), allow_pickle=False)
    return dict(MATRIX_FILES, format="npy")


def load_matrix(directory) -> FeatureMatrix:
    d = Path(directory)
    with open(d / MATRIX_FILES["columns"], newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        columns = tuple(name for _, name in r)
    with open(d / MATRIX_FILES["rows"], newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        next(r)
        rows = tuple(HourKey(int(s), int(h)) for s, h in r)
    values = np.load(d / MATRIX_FILES["values"], allow_pickle=False)
    return FeatureMatrix(rows, columns, values)
