"""Normalized monitor-event ingest: record parsing, timestamp merge, dataset shaping.

Input streams are line-delimited JSON, one record per line:

    vitals:     {"t": <int ms>, "hr": .., "rr": .., "sbp": .., "dbp": .., "map": .., "spo2": ..}
    annotation: {"t": <int ms>, "severity": "emergent"|"urgent"|"indeterminate"|"non_urgent"}
    alarm:      {"t": <int ms>, "code": "<device code>"}

Alarm records are carried as metadata only; labels come from annotations.
Timestamps must strictly increase within each stream.
"""

from __future__ import annotations

import csv
import io
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence

import numpy as np

from .fileio import atomic_write_text


class ParseError(ValueError):
    """A record line that does not conform to the ingest schema."""


class OrderingError(ValueError):
    """Timestamps within one stream must strictly increase."""


class UnmatchedAnnotationError(ValueError):
    """An annotation with no vitals sample inside the match tolerance."""


class SeverityClass(IntEnum):
    """Event severity, ordered so max() picks the clinically dominant class."""

    NO_EVENT = 0
    NON_URGENT = 1
    INDETERMINATE = 2
    URGENT = 3
    EMERGENT = 4

    @property
    def wire(self) -> str:
        return self.name.lower()

    @classmethod
    def from_wire(cls, text: str) -> "SeverityClass":
        try:
            return cls[str(text).upper()]
        except KeyError:
            raise ParseError(f"unknown severity {text!r}") from None


# severities that may appear on an annotation line (no_event is implicit)
ANNOTATION_SEVERITIES = (
    SeverityClass.EMERGENT,
    SeverityClass.URGENT,
    SeverityClass.INDETERMINATE,
    SeverityClass.NON_URGENT,
)


class BinaryLabel(IntEnum):
    NON_ALARM = 0
    ALARM = 1


def label_for_severity(severity: SeverityClass) -> BinaryLabel:
    """Emergent and urgent events are alarms; everything else is not."""
    if severity >= SeverityClass.URGENT:
        return BinaryLabel.ALARM
    return BinaryLabel.NON_ALARM


VITALS_FIELDS = ("hr", "rr", "sbp", "dbp", "map", "spo2")


@dataclass(frozen=True)
class VitalsSample:
    """One reading of the six monitored vital signs."""

    hr: float
    rr: float
    sbp: float
    dbp: float
    map: float
    spo2: float

    def __post_init__(self):
        for name in VITALS_FIELDS:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ValueError(f"vitals field {name!r} must be a number, got {value!r}")
            if not math.isfinite(value):
                raise ValueError(f"vitals field {name!r} must be finite, got {value!r}")
            if value < 0:
                raise ValueError(f"vitals field {name!r} must be nonnegative, got {value!r}")
        if self.spo2 > 100:
            raise ValueError(f"spo2 must lie in [0, 100], got {self.spo2!r}")

    def as_array(self) -> np.ndarray:
        return np.array([self.hr, self.rr, self.sbp, self.dbp, self.map, self.spo2], dtype=float)


@dataclass(frozen=True)
class VitalsRecord:
    t: int
    vitals: VitalsSample


@dataclass(frozen=True)
class AnnotationRecord:
    t: int
    severity: SeverityClass


@dataclass(frozen=True)
class AlarmRecord:
    t: int
    code: str


@dataclass(frozen=True)
class AnnotatedEvent:
    t: int
    vitals: VitalsSample
    severity: SeverityClass
    label: BinaryLabel


def events_matrix(events: Sequence[AnnotatedEvent]) -> np.ndarray:
    return np.array([e.vitals.as_array() for e in events], dtype=float).reshape(len(events), 6)


def events_labels(events: Sequence[AnnotatedEvent]) -> np.ndarray:
    return np.fromiter((int(e.label) for e in events), dtype=int, count=len(events))


@dataclass
class Dataset:
    """Ordered event sequence tagged with variant, split, and time resolution."""

    events: list[AnnotatedEvent]
    variant: str = "DS1"
    split: str = "train"
    resolution: str = "ms"

    def __post_init__(self):
        if self.variant not in ("DS1", "DS2"):
            raise ValueError(f"variant must be DS1 or DS2, got {self.variant!r}")
        if self.split not in ("train", "test"):
            raise ValueError(f"split must be train or test, got {self.split!r}")
        if self.resolution not in ("ms", "s"):
            raise ValueError(f"resolution must be ms or s, got {self.resolution!r}")
        if self.variant == "DS2":
            # DS2 is indeterminate-free at one-second resolution by construction
            if self.resolution != "s":
                raise ValueError("DS2 datasets must carry second resolution")
            if any(e.severity == SeverityClass.INDETERMINATE for e in self.events):
                raise ValueError("DS2 datasets must not contain indeterminate events")
        previous = None
        for e in self.events:
            if previous is not None and e.t <= previous:
                raise ValueError(f"event timestamps must strictly increase, got {e.t} after {previous}")
            previous = e.t

    def __len__(self) -> int:
        return len(self.events)

    def labels(self) -> np.ndarray:
        return events_labels(self.events)

    def vitals_matrix(self) -> np.ndarray:
        return events_matrix(self.events)

    def counts(self) -> tuple[int, int]:
        """(alarms, non-alarms)."""
        alarms = sum(1 for e in self.events if e.label == BinaryLabel.ALARM)
        return alarms, len(self.events) - alarms


@dataclass
class ParsedRecords:
    vitals: list[VitalsRecord] = field(default_factory=list)
    alarms: list[AlarmRecord] = field(default_factory=list)
    annotations: list[AnnotationRecord] = field(default_factory=list)


def _json_object(raw: str, lineno: int, kind: str) -> dict:
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{kind} line {lineno}: invalid JSON ({exc.msg})") from None
    if not isinstance(obj, dict):
        raise ParseError(f"{kind} line {lineno}: expected a JSON object")
    return obj


def _take(obj: dict, name: str, lineno: int, kind: str):
    if name not in obj:
        raise ParseError(f"{kind} line {lineno}: missing field {name!r}")
    return obj[name]


def _timestamp(obj: dict, lineno: int, kind: str) -> int:
    value = _take(obj, "t", lineno, kind)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ParseError(f"{kind} line {lineno}: field 't' must be an integer, got {value!r}")
    return value


def _check_order(previous: int | None, t: int, lineno: int, kind: str) -> None:
    if previous is None:
        return
    if t == previous:
        raise OrderingError(f"{kind} line {lineno}: duplicate timestamp {t}")
    if t < previous:
        raise OrderingError(f"{kind} line {lineno}: timestamp {t} precedes {previous}")


def _parse_vitals(lines: Iterable[str]) -> list[VitalsRecord]:
    out: list[VitalsRecord] = []
    previous = None
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        obj = _json_object(raw, lineno, "vitals")
        t = _timestamp(obj, lineno, "vitals")
        _check_order(previous, t, lineno, "vitals")
        previous = t
        values = {name: _take(obj, name, lineno, "vitals") for name in VITALS_FIELDS}
        try:
            sample = VitalsSample(**values)
        except ValueError as exc:
            raise ParseError(f"vitals line {lineno}: {exc}") from None
        out.append(VitalsRecord(t, sample))
    return out


def _parse_annotations(lines: Iterable[str]) -> list[AnnotationRecord]:
    out: list[AnnotationRecord] = []
    previous = None
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        obj = _json_object(raw, lineno, "annotation")
        t = _timestamp(obj, lineno, "annotation")
        _check_order(previous, t, lineno, "annotation")
        previous = t
        text = _take(obj, "severity", lineno, "annotation")
        try:
            severity = SeverityClass.from_wire(text)
        except ParseError as exc:
            raise ParseError(f"annotation line {lineno}: {exc}") from None
        if severity not in ANNOTATION_SEVERITIES:
            raise ParseError(f"annotation line {lineno}: severity {text!r} not allowed on the wire")
        out.append(AnnotationRecord(t, severity))
    return out


def _parse_alarms(lines: Iterable[str]) -> list[AlarmRecord]:
    out: list[AlarmRecord] = []
    previous = None
    for lineno, raw in enumerate(lines, start=1):
        raw = raw.strip()
        if not raw:
            continue
        obj = _json_object(raw, lineno, "alarm")
        t = _timestamp(obj, lineno, "alarm")
        _check_order(previous, t, lineno, "alarm")
        previous = t
        code = _take(obj, "code", lineno, "alarm")
        if not isinstance(code, str):
            raise ParseError(f"alarm line {lineno}: field 'code' must be a string, got {code!r}")
        out.append(AlarmRecord(t, code))
    return out


def parse_records(
    vitals_stream: Iterable[str],
    alarms_stream: Iterable[str],
    annotations_stream: Iterable[str],
) -> ParsedRecords:
    """Parse the three normalized streams into sorted, validated record series."""
    return ParsedRecords(
        vitals=_parse_vitals(vitals_stream),
        alarms=_parse_alarms(alarms_stream),
        annotations=_parse_annotations(annotations_stream),
    )


def _nearest_index(times: list[int], t: int) -> int | None:
    if not times:
        return None
    i = bisect_left(times, t)
    if i == 0:
        return 0
    if i == len(times):
        return len(times) - 1
    # tie between the neighbours goes to the earlier sample
    if abs(times[i] - t) < abs(times[i - 1] - t):
        return i
    return i - 1


def merge_by_timestamp(
    vitals: Sequence[VitalsRecord],
    annotations: Sequence[AnnotationRecord],
    tolerance_ms: int = 500,
    split: str = "train",
) -> Dataset:
    """Attach each annotation to the nearest vitals sample within tolerance_ms.

    Every vitals sample becomes one event; unannotated samples get NO_EVENT.
    When several annotations land on the same sample the most severe wins.
    Raises UnmatchedAnnotationError listing every annotation left unattached.
    """
    times = [v.t for v in vitals]
    severity_at: dict[int, SeverityClass] = {}
    unmatched: list[int] = []
    for ann in annotations:
        idx = _nearest_index(times, ann.t)
        if idx is None or abs(times[idx] - ann.t) > tolerance_ms:
            unmatched.append(ann.t)
            continue
        current = severity_at.get(idx, SeverityClass.NO_EVENT)
        severity_at[idx] = max(current, ann.severity)
    if unmatched:
        raise UnmatchedAnnotationError(
            f"annotations without a vitals sample within {tolerance_ms} ms at t={unmatched}"
        )
    events = []
    for i, record in enumerate(vitals):
        severity = severity_at.get(i, SeverityClass.NO_EVENT)
        events.append(AnnotatedEvent(record.t, record.vitals, severity, label_for_severity(severity)))
    return Dataset(events, variant="DS1", split=split, resolution="ms")


def drop_indeterminate(dataset: Dataset) -> Dataset:
    events = [e for e in dataset.events if e.severity != SeverityClass.INDETERMINATE]
    return Dataset(events, dataset.variant, dataset.split, dataset.resolution)


def downsample_to_seconds(dataset: Dataset) -> Dataset:
    """Bucket events by whole second: fields are averaged, the most severe class wins.

    Seconds with no samples are simply absent; no gap filling.
    """
    if dataset.resolution != "ms":
        raise ValueError("downsample_to_seconds expects millisecond-resolution input")
    events = dataset.events
    out: list[AnnotatedEvent] = []
    i = 0
    n = len(events)
    while i < n:
        second = events[i].t // 1000
        j = i
        sums = np.zeros(6)
        severity = SeverityClass.NO_EVENT
        while j < n and events[j].t // 1000 == second:
            sums += events[j].vitals.as_array()
            severity = max(severity, events[j].severity)
            j += 1
        means = sums / (j - i)
        sample = VitalsSample(*[float(v) for v in means])
        out.append(AnnotatedEvent(second * 1000, sample, severity, label_for_severity(severity)))
        i = j
    return Dataset(out, dataset.variant, dataset.split, "s")


def build_ds2(dataset: Dataset) -> Dataset:
    """DS2 = drop indeterminate events, then mean-downsample to seconds."""
    if dataset.variant != "DS1" or dataset.resolution != "ms":
        raise ValueError("build_ds2 expects a millisecond-resolution DS1 dataset")
    filtered = drop_indeterminate(dataset)
    seconds = downsample_to_seconds(filtered)
    return Dataset(seconds.events, "DS2", dataset.split, "s")


CSV_HEADER = ("t", "hr", "rr", "sbp", "dbp", "map", "spo2", "severity", "label")


def dataset_to_csv(dataset: Dataset) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for e in dataset.events:
        v = e.vitals
        writer.writerow([e.t, v.hr, v.rr, v.sbp, v.dbp, v.map, v.spo2, e.severity.wire, int(e.label)])
    return buf.getvalue()


def save_dataset_csv(dataset: Dataset, path: str) -> None:
    atomic_write_text(path, dataset_to_csv(dataset))


def load_dataset_csv(
    path: str,
    variant: str = "DS1",
    split: str = "train",
    resolution: str = "ms",
) -> Dataset:
    with open(path, newline="", encoding="utf-8") as handle:
        rows = list(csv.reader(handle))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise ParseError(f"{path}: expected header {','.join(CSV_HEADER)}")
    events: list[AnnotatedEvent] = []
    previous = None
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(CSV_HEADER):
            raise ParseError(f"{path} line {lineno}: expected {len(CSV_HEADER)} columns, got {len(row)}")
        try:
            t = int(row[0])
            values = [float(x) for x in row[1:7]]
            severity = SeverityClass.from_wire(row[7])
            label = int(row[8])
        except (ValueError, ParseError) as exc:
            raise ParseError(f"{path} line {lineno}: {exc}") from None
        if previous is not None and t <= previous:
            raise OrderingError(f"{path} line {lineno}: timestamp {t} does not increase")
        previous = t
        if label != int(label_for_severity(severity)):
            raise ParseError(f"{path} line {lineno}: label {label} inconsistent with severity {row[7]!r}")
        try:
            sample = VitalsSample(*values)
        except ValueError as exc:
            raise ParseError(f"{path} line {lineno}: {exc}") from None
        events.append(AnnotatedEvent(t, sample, severity, label_for_severity(severity)))
    return Dataset(events, variant=variant, split=split, resolution=resolution)
