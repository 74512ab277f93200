"""EMA aggregation and propagation, plus rule-based mood labelling."""

from __future__ import annotations

import csv
import enum
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

from moodid.types import EmaResponse, EmaTopic, HourKey, Mood, MoodLabels, StudyWindow

EmaHourly = dict  # HourKey -> {EmaTopic: float}


class DatasetVariant(str, enum.Enum):
    RAW = "raw"
    H = "H"
    D = "D"


def average_hourly(ema_events, window: StudyWindow) -> EmaHourly:
    """Mean response per (subject, hour, topic); silent hours are absent."""
    acc: dict[HourKey, dict[EmaTopic, list[float]]] = defaultdict(lambda: defaultdict(list))
    for e in ema_events:
        if isinstance(e, EmaResponse):
            acc[HourKey(e.subject, window.hour_of(e.time))][e.topic].append(e.value)
    return {
        key: {topic: sum(v) / len(v) for topic, v in topics.items()}
        for key, topics in sorted(acc.items())
    }


def propagate_hourly(hourly: EmaHourly, grid_length: int) -> EmaHourly:
    """Copy each original value into the adjacent hours where that topic is missing.

    Filling reads only the input map, so filled hours never propagate further.
    When an empty hour sits between two reporting hours, the earlier hour's
    value is used.
    """
    out = {key: dict(topics) for key, topics in hourly.items()}
    for key in sorted(hourly):
        s, h = key
        for topic, value in hourly[key].items():
            for nb in (h + 1, h - 1):
                if not 0 <= nb < grid_length:
                    continue
                nkey = HourKey(s, nb)
                if topic in hourly.get(nkey, {}):
                    continue
                filled = out.setdefault(nkey, {})
                if topic not in filled:
                    filled[topic] = value
    return {key: out[key] for key in sorted(out)}


def day_of_hour(window: StudyWindow, hour_index: int) -> int:
    """UTC calendar day (days since the epoch) containing the hour's start."""
    return (window.start + hour_index * 3600) // 86400


def propagate_daily(hourly: EmaHourly, window: StudyWindow) -> EmaHourly:
    """Broadcast each (subject, topic, UTC day) mean to every hour of that day."""
    grid = window.grid_length
    acc: dict[tuple[int, int], dict[EmaTopic, list[float]]] = defaultdict(lambda: defaultdict(list))
    for (s, h), topics in hourly.items():
        for topic, value in topics.items():
            acc[(s, day_of_hour(window, h))][topic].append(value)

    out: EmaHourly = {}
    for (s, day), topics in acc.items():
        first = max(0, -(-(day * 86400 - window.start) // 3600))
        last = min(grid, -(-((day + 1) * 86400 - window.start) // 3600))
        means = {topic: sum(v) / len(v) for topic, v in topics.items()}
        for h in range(first, last):
            out.setdefault(HourKey(s, h), {}).update(means)
    return {key: out[key] for key in sorted(out)}


def build_variant(hourly: EmaHourly, variant, window: StudyWindow) -> EmaHourly:
    variant = DatasetVariant(variant)
    if variant is DatasetVariant.H:
        return propagate_hourly(hourly, window.grid_length)
    if variant is DatasetVariant.D:
        return propagate_daily(hourly, window)
    return {key: dict(topics) for key, topics in hourly.items()}


def classify_mood(ema) -> MoodLabels:
    """Mood flags from one sample's EMA values.

    Each flag is a disjunction of conditions; a condition on an absent topic
    is false, and equality conditions require the exact value.
    """
    stress = ema.get(EmaTopic.STRESS)
    mood = ema.get(EmaTopic.MOOD)
    sleep = ema.get(EmaTopic.SLEEP)
    happiness = ema.get(EmaTopic.HAPPY)
    sadness = ema.get(EmaTopic.SAD)

    happy = (
        (sleep is not None and sleep == 1)
        or (stress is not None and stress >= 4)
        or (happiness is not None and happiness >= 2)
        or (mood is not None and mood == 1)
    )
    upset = (
        (stress is not None and stress == 3)
        or (mood is not None and sleep is not None and mood == 3 and sleep >= 3)
        or (sadness is not None and sadness >= 2)
    )
    stressed = (
        (sleep is not None and sleep >= 3)
        or (stress is not None and 1 <= stress <= 3)
        or (mood is not None and mood == 2)
    )
    return MoodLabels(happy=bool(happy), upset=bool(upset), stressed=bool(stressed))


def label_samples(ema_map: EmaHourly, keys) -> dict[HourKey, MoodLabels]:
    """Mood flags for every key; keys without EMA get all-false flags."""
    none = MoodLabels()
    return {k: classify_mood(ema_map[k]) if k in ema_map else none for k in keys}


@dataclass
class CoverageReport:
    variant: str
    total: int
    labeled_count: int
    per_subject_counts: dict[int, dict[str, int]]

    @property
    def fraction(self) -> float:
        return self.labeled_count / self.total if self.total else 0.0

    def mood_totals(self) -> dict[str, int]:
        return {
            m.value: sum(c[m.value] for c in self.per_subject_counts.values()) for m in Mood
        }


def coverage_report(variant, ema_map: EmaHourly, keys) -> CoverageReport:
    """Count samples with any EMA topic present and per-subject mood totals."""
    keys = list(keys)
    labels = label_samples(ema_map, keys)
    per_subject: dict[int, dict[str, int]] = {}
    labeled = 0
    for k in keys:
        counts = per_subject.setdefault(k.subject, {m.value: 0 for m in Mood})
        if ema_map.get(k):
            labeled += 1
        for m in Mood:
            counts[m.value] += labels[k].flag(m)
    return CoverageReport(str(DatasetVariant(variant).value), len(keys), labeled, per_subject)


# -- persistence --------------------------------------------------------------

LABEL_COLUMNS = (
    "subject", "hour_index", "variant", "happy", "upset", "stressed",
    *(f"ema_{t.value}" for t in EmaTopic),
)


def save_labels(path, variant, ema_map: EmaHourly, keys) -> None:
    variant = DatasetVariant(variant)
    keys = sorted(keys, key=lambda k: (k.hour_index, k.subject))
    labels = label_samples(ema_map, keys)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LABEL_COLUMNS)
        for k in keys:
            ema = ema_map.get(k, {})
            lab = labels[k]
            w.writerow([
                k.subject, k.hour_index, variant.value,
                int(lab.happy), int(lab.upset), int(lab.stressed),
                *(repr(float(ema[t])) if t in ema else "" for t in EmaTopic),
            ])


def load_labels(path) -> tuple[str, dict[HourKey, MoodLabels], EmaHourly]:
    """Read a label file back as (variant, flags per key, EMA map)."""
    labels: dict[HourKey, MoodLabels] = {}
    ema_map: EmaHourly = {}
    variant = None
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != LABEL_COLUMNS:
            raise ValueError(f"{path}: unexpected label header {header}")
        for row in r:
            key = HourKey(int(row[0]), int(row[1]))
            variant = row[2]
            labels[key] = MoodLabels(row[3] == "1", row[4] == "1", row[5] == "1")
            ema = {t: float(v) for t, v in zip(EmaTopic, row[6:]) if v != ""}
            if ema:
                ema_map[key] = ema
    return variant, labels, ema_map
