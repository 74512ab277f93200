"""Domain types shared by every stage of the pipeline.

All types are frozen value objects. Timestamps are integer UTC epoch
seconds; hour buckets are counted from the start of the study window.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Union

SubjectId = int

AUDIO_CLASSES = (0, 1, 2, 3)  # silence, voice, noise, unknown
ACTIVITY_CLASSES = (0, 1, 2, 3)  # stationary, walking, running, unknown
NO_DATA_CODE = -1
MULTI_MODE_CODE = 4


class EmaTopic(str, enum.Enum):
    """EMA questions used for mood labelling; values are the file keywords."""

    STRESS = "stress"
    MOOD = "mood"
    SLEEP = "sleep"
    HAPPY = "happy"
    SAD = "sad"

    @property
    def value_range(self) -> tuple[float, float]:
        return EMA_RANGES[self]

    @property
    def levels(self) -> tuple[int, ...]:
        lo, hi = EMA_RANGES[self]
        return tuple(range(int(lo), int(hi) + 1))


EMA_RANGES: dict[EmaTopic, tuple[float, float]] = {
    EmaTopic.STRESS: (1, 5),
    EmaTopic.MOOD: (1, 3),
    EmaTopic.SLEEP: (1, 4),
    EmaTopic.HAPPY: (1, 4),
    EmaTopic.SAD: (1, 4),
}


class Mood(str, enum.Enum):
    HAPPY = "happy"
    UPSET = "upset"
    STRESSED = "stressed"


class HourKey(NamedTuple):
    subject: SubjectId
    hour_index: int


@dataclass(frozen=True)
class StudyWindow:
    """Half-open ``[start, end)`` interval in epoch seconds."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError(f"study window end {self.end} must be after start {self.start}")

    @property
    def grid_length(self) -> int:
        return math.ceil((self.end - self.start) / 3600)

    def contains(self, t: float) -> bool:
        return self.start <= t < self.end

    def hour_of(self, t: float) -> int:
        return int((t - self.start) // 3600)


# -- telemetry events ---------------------------------------------------------


@dataclass(frozen=True)
class Call:
    subject: SubjectId
    time: int
    duration: float  # minutes


@dataclass(frozen=True)
class AppTask:
    subject: SubjectId
    time: int
    task_id: str


@dataclass(frozen=True)
class GpsFix:
    subject: SubjectId
    time: int
    lat: float
    lon: float


@dataclass(frozen=True)
class AudioInf:
    subject: SubjectId
    time: int
    cls: int


@dataclass(frozen=True)
class ActivityInf:
    subject: SubjectId
    time: int
    cls: int


@dataclass(frozen=True)
class LockEvent:
    subject: SubjectId
    time: int


@dataclass(frozen=True)
class EmaResponse:
    subject: SubjectId
    time: int
    topic: EmaTopic
    value: float


TelemetryEvent = Union[Call, AppTask, GpsFix, AudioInf, ActivityInf, LockEvent, EmaResponse]

# Canonical kind order; also the tie-break when events share (subject, time).
EVENT_KINDS: dict[str, type] = {
    "calls": Call,
    "apps": AppTask,
    "gps": GpsFix,
    "audio": AudioInf,
    "activity": ActivityInf,
    "locks": LockEvent,
    "ema": EmaResponse,
}
KIND_OF: dict[type, str] = {cls: kind for kind, cls in EVENT_KINDS.items()}
_KIND_RANK = {cls: i for i, cls in enumerate(EVENT_KINDS.values())}


def canonical_order(events) -> list:
    """Stable sort by (subject, time, kind); equal keys keep input order."""
    return sorted(events, key=lambda e: (e.subject, e.time, _KIND_RANK[type(e)]))


def validate_event(e: TelemetryEvent, window: StudyWindow | None = None) -> list[str]:
    """Return every invariant *e* violates; an empty list means valid."""
    problems: list[str] = []
    if type(e) not in _KIND_RANK:
        return [f"unknown event type {type(e).__name__}"]
    if not isinstance(e.subject, int) or isinstance(e.subject, bool) or e.subject < 0:
        problems.append(f"subject id {e.subject!r} is not a non-negative integer")
    if not _finite(e.time):
        problems.append(f"timestamp {e.time!r} is not finite")
    elif window is not None and not window.contains(e.time):
        problems.append(f"timestamp {e.time} outside study window [{window.start}, {window.end})")

    if isinstance(e, Call):
        if not _finite(e.duration) or e.duration < 0:
            problems.append(f"negative or non-finite call duration {e.duration!r}")
    elif isinstance(e, AppTask):
        if not e.task_id or any(c.isspace() for c in e.task_id):
            problems.append(f"task id {e.task_id!r} is empty or contains whitespace")
    elif isinstance(e, GpsFix):
        if not _finite(e.lat) or not -90 <= e.lat <= 90:
            problems.append(f"latitude {e.lat!r} out of range [-90, 90]")
        if not _finite(e.lon) or not -180 <= e.lon <= 180:
            problems.append(f"longitude {e.lon!r} out of range [-180, 180]")
    elif isinstance(e, (AudioInf, ActivityInf)):
        if e.cls not in AUDIO_CLASSES or isinstance(e.cls, bool):
            problems.append(f"class {e.cls!r} out of range {{0..3}}")
    elif isinstance(e, EmaResponse):
        if not isinstance(e.topic, EmaTopic):
            problems.append(f"unknown EMA topic {e.topic!r}")
        else:
            lo, hi = e.topic.value_range
            if not _finite(e.value) or not lo <= e.value <= hi:
                problems.append(f"{e.topic.value} value {e.value!r} outside [{lo:g}, {hi:g}]")
    return problems


def _finite(x) -> bool:
    try:
        return math.isfinite(x)
    except TypeError:
        return False


@dataclass(frozen=True)
class MoodLabels:
    happy: bool = False
    upset: bool = False
    stressed: bool = False

    def flag(self, mood: Mood) -> bool:
        return getattr(self, mood.value)

    def as_tuple(self) -> tuple[bool, bool, bool]:
        return (self.happy, self.upset, self.stressed)


@dataclass(frozen=True)
class HourSample:
    """Raw feature components of one subject-hour, before one-hot encoding."""

    key: HourKey
    call_minutes: float = 0.0
    app_token: str = ""
    gps_token: str = ""
    audio_code: int = NO_DATA_CODE
    activity_code: int = NO_DATA_CODE
    lock_count: int = 0
    ema: dict = field(default_factory=dict, hash=False, compare=True)
