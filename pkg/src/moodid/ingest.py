"""Flat-file persistence for telemetry and EMA data.

One UTF-8 CSV per event kind, each with a header row. Column orders are
normative:

========  ======================================
file key  columns
========  ======================================
calls     subject,start_epoch_s,duration_min
apps      subject,epoch_s,task_id
gps       subject,epoch_s,lat,lon
audio     subject,epoch_s,class
activity  subject,epoch_s,class
locks     subject,epoch_s
ema       subject,epoch_s,topic,value
========  ======================================

The manifest is a JSON document::

    {"study_start": "2013-03-25T00:00:00Z", "study_end": "...",
     "subjects": [0, 1], "files": {"calls": "calls.csv", ...}}

File paths are relative to the manifest's directory.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from moodid.types import (
    EVENT_KINDS,
    KIND_OF,
    ActivityInf,
    AppTask,
    AudioInf,
    Call,
    EmaResponse,
    EmaTopic,
    GpsFix,
    LockEvent,
    StudyWindow,
    canonical_order,
    validate_event,
)

COLUMNS: dict[str, tuple[str, ...]] = {
    "calls": ("subject", "start_epoch_s", "duration_min"),
    "apps": ("subject", "epoch_s", "task_id"),
    "gps": ("subject", "epoch_s", "lat", "lon"),
    "audio": ("subject", "epoch_s", "class"),
    "activity": ("subject", "epoch_s", "class"),
    "locks": ("subject", "epoch_s"),
    "ema": ("subject", "epoch_s", "topic", "value"),
}

DEFAULT_FILES = {kind: f"{kind}.csv" for kind in COLUMNS}


class DatasetError(Exception):
    """Input data is malformed or inconsistent."""


class ParseError(DatasetError):
    def __init__(self, path, row: int, message: str):
        self.path = str(path)
        self.row = row
        super().__init__(f"{path}: row {row}: {message}")


class ValidationError(DatasetError):
    """Aggregated event violations; ``violations`` holds (file, row, message)."""

    def __init__(self, violations: list[tuple[str, int, str]]):
        self.violations = violations
        head = "; ".join(f"{p}: row {r}: {m}" for p, r, m in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"{len(violations)} invalid event(s): {head}{more}")


def parse_iso(text: str) -> int:
    dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def format_iso(epoch_s: int) -> str:
    return datetime.fromtimestamp(epoch_s, tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass
class DatasetManifest:
    study_start: int
    study_end: int
    subjects: list[int]
    files: dict[str, str] = field(default_factory=lambda: dict(DEFAULT_FILES))
    root: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        if self.study_end <= self.study_start:
            raise DatasetError("study_end must be after study_start")
        unknown = set(self.files) - set(COLUMNS)
        if unknown:
            raise DatasetError(f"unknown file kinds in manifest: {sorted(unknown)}")

    @property
    def window(self) -> StudyWindow:
        return StudyWindow(self.study_start, self.study_end)

    def path(self, kind: str) -> Path:
        return self.root / self.files[kind]

    def to_json(self) -> dict:
        return {
            "study_start": format_iso(self.study_start),
            "study_end": format_iso(self.study_end),
            "subjects": list(self.subjects),
            "files": dict(self.files),
        }

    @classmethod
    def load(cls, path) -> DatasetManifest:
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            return cls(
                study_start=parse_iso(doc["study_start"]),
                study_end=parse_iso(doc["study_end"]),
                subjects=[int(s) for s in doc["subjects"]],
                files=dict(doc.get("files", DEFAULT_FILES)),
                root=path.parent,
            )
        except (OSError, ValueError, KeyError, TypeError) as exc:
            raise DatasetError(f"cannot read manifest {path}: {exc}") from exc

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_json(), indent=2) + "\n", encoding="utf-8")


# -- row codecs ---------------------------------------------------------------


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _to_row(e) -> list[str]:
    if isinstance(e, Call):
        vals = (e.subject, e.time, e.duration)
    elif isinstance(e, AppTask):
        vals = (e.subject, e.time, e.task_id)
    elif isinstance(e, GpsFix):
        vals = (e.subject, e.time, e.lat, e.lon)
    elif isinstance(e, (AudioInf, ActivityInf)):
        vals = (e.subject, e.time, e.cls)
    elif isinstance(e, LockEvent):
        vals = (e.subject, e.time)
    elif isinstance(e, EmaResponse):
        vals = (e.subject, e.time, e.topic.value, e.value)
    else:
        raise TypeError(f"not a telemetry event: {e!r}")
    return [_fmt(v) for v in vals]


def _from_row(kind: str, row: list[str]):
    subject, t = int(row[0]), int(row[1])
    if kind == "calls":
        return Call(subject, t, float(row[2]))
    if kind == "apps":
        return AppTask(subject, t, row[2])
    if kind == "gps":
        return GpsFix(subject, t, float(row[2]), float(row[3]))
    if kind == "audio":
        return AudioInf(subject, t, int(row[2]))
    if kind == "activity":
        return ActivityInf(subject, t, int(row[2]))
    if kind == "locks":
        return LockEvent(subject, t)
    return EmaResponse(subject, t, EmaTopic(row[2]), float(row[3]))


def read_events(path, kind: str) -> list[tuple[int, object]]:
    """Parse one event CSV into ``(row_number, event)`` pairs.

    Row numbers count data rows from 1 (the header is row 0).
    """
    columns = COLUMNS[kind]
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return out
        if tuple(header) != columns:
            raise ParseError(path, 0, f"header {header} != expected {list(columns)}")
        for i, row in enumerate(reader, start=1):
            if len(row) != len(columns):
                raise ParseError(path, i, f"expected {len(columns)} columns, got {len(row)}")
            try:
                out.append((i, _from_row(kind, row)))
            except ValueError as exc:
                raise ParseError(path, i, str(exc)) from exc
    return out


def load_dataset(manifest: DatasetManifest) -> list:
    """Read, validate and canonically order every event the manifest names."""
    window = manifest.window
    subjects = set(manifest.subjects)
    events = []
    violations: list[tuple[str, int, str]] = []
    for kind in EVENT_KINDS:
        if kind not in manifest.files:
            continue
        path = manifest.path(kind)
        if not path.exists():
            raise DatasetError(f"missing {kind} file: {path}")
        for row, e in read_events(path, kind):
            problems = validate_event(e, window)
            if e.subject not in subjects:
                problems.append(f"subject {e.subject} not listed in manifest")
            violations.extend((str(path), row, p) for p in problems)
            events.append(e)
    if violations:
        raise ValidationError(violations)
    return canonical_order(events)


def write_dataset(events, manifest: DatasetManifest, manifest_path=None) -> None:
    """Write *events* as per-kind CSVs under ``manifest.root``.

    Within a kind, rows keep the canonical order so that loading the files
    back reproduces ``canonical_order(events)``.
    """
    root = Path(manifest.root)
    root.mkdir(parents=True, exist_ok=True)
    by_kind: dict[str, list] = {kind: [] for kind in COLUMNS}
    for e in canonical_order(events):
        by_kind[KIND_OF[type(e)]].append(e)
    for kind, rows in by_kind.items():
        manifest.files.setdefault(kind, DEFAULT_FILES[kind])
        with open(manifest.path(kind), "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(COLUMNS[kind])
            writer.writerows(_to_row(e) for e in rows)
    if manifest_path is not None:
        manifest.save(manifest_path)
