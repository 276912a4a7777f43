"""
Event log model and serialisation for timerefine.

This module holds the records the rest of the package works on and the
functions that move them in and out of files:

    - ``parse_csv`` / ``write_csv``: flat event sets as RFC 4180 CSV.
    - ``parse_xes`` / ``write_xes``: traces in the XES interchange format
      (the ``concept:name`` and ``time:timestamp`` subset).
    - ``partition``: group a flat event set into time-ordered traces, one
      per key-attribute value and calendar day.
    - ``apply_refinement`` / ``check_refinement_order``: relabel the events
      of one label by cluster and verify that one labeling refines another.

Example usage:

    events = parse_csv(open("home.csv", "rb").read(),
                       ColumnConfig(timestamp="timestamp", label="sensor"))
    log = partition(events, PartitionSpec(key_attributes=("address",)))

Logs are immutable values; every transformation returns a new log.
"""

from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from datetime import datetime, time, timedelta
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import pandas as pd

from .errors import LogFormatError, PartitionError, RelabelingError

logger = logging.getLogger(__name__)

DAY = "day"
NO_CALENDAR = "none"


@dataclass(frozen=True)
class Event:
    id: str
    timestamp: datetime
    label: str
    attributes: Dict[str, Any] = field(default_factory=dict)

    @property
    def hour(self) -> float:
        return hour_of_day(self.timestamp)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: Tuple[Event, ...]

    def __len__(self) -> int:
        return len(self.events)

    def labels(self) -> List[str]:
        return [e.label for e in self.events]


@dataclass(frozen=True)
class EventLog:
    traces: Tuple[Trace, ...] = ()

    def __len__(self) -> int:
        return sum(len(t) for t in self.traces)

    def events(self) -> Iterator[Event]:
        for trace in self.traces:
            yield from trace.events

    @property
    def label_alphabet(self) -> frozenset:
        return frozenset(e.label for e in self.events())

    def label_events(self, label: str) -> List[Event]:
        """Events carrying ``label``, in trace order."""
        return [e for e in self.events() if e.label == label]

    def labels_by_id(self) -> Dict[str, str]:
        return {e.id: e.label for e in self.events()}

    def relabel(self, labels: Mapping[str, str]) -> "EventLog":
        """Return a copy where events whose id is in ``labels`` get the new label."""
        traces = []
        for trace in self.traces:
            events = tuple(
                Event(e.id, e.timestamp, labels[e.id], e.attributes) if e.id in labels else e
                for e in trace.events
            )
            traces.append(Trace(trace.case_id, events))
        return EventLog(tuple(traces))


@dataclass(frozen=True)
class ColumnConfig:
    """Which CSV columns hold the event fields.

    ``extra_attributes`` of ``None`` keeps every remaining column as an
    attribute; an empty tuple keeps none.
    """

    timestamp: str = "timestamp"
    label: str = "label"
    id: Optional[str] = None
    extra_attributes: Optional[Tuple[str, ...]] = None


@dataclass(frozen=True)
class PartitionSpec:
    key_attributes: Tuple[str, ...] = ()
    calendar_granularity: str = DAY
    day_boundary: time = time(0, 0, 0)

    def __post_init__(self) -> None:
        if self.calendar_granularity not in (DAY, NO_CALENDAR):
            raise PartitionError(f"unknown calendar granularity {self.calendar_granularity!r}")
        if not self.key_attributes and self.calendar_granularity != DAY:
            raise PartitionError("partition spec needs key attributes or day granularity")


@dataclass(frozen=True)
class RelabelingMap:
    """Refined label text per cluster index of ``covered_label``."""

    covered_label: str
    entries: Dict[int, str]

    def __post_init__(self) -> None:
        texts = list(self.entries.values())
        if len(set(texts)) != len(texts):
            raise RelabelingError(f"refined labels of {self.covered_label!r} are not distinct: {texts}")

    @classmethod
    def default(cls, label: str, clusters: Sequence[int]) -> "RelabelingMap":
        return cls(label, {int(k): f"{label} {int(k) + 1}" for k in sorted(set(clusters))})

    @property
    def refined_labels(self) -> List[str]:
        return [self.entries[k] for k in sorted(self.entries)]


def hour_of_day(ts: datetime) -> float:
    """Wall-clock time of ``ts`` as a real number in [0, 24)."""
    seconds = ts.hour * 3600 + ts.minute * 60 + ts.second + ts.microsecond / 1e6
    return seconds / 3600.0


def parse_time_string(t: str) -> time:
    """Parse an HH:MM or HH:MM:SS string into a ``datetime.time``."""
    parts = [int(p) for p in t.strip().split(":")]
    if len(parts) not in (2, 3):
        raise ValueError(f"expected HH:MM[:SS], got {t!r}")
    return time(*parts)


def parse_csv(
    data: bytes,
    columns: ColumnConfig = ColumnConfig(),
    timestamp_format: Optional[str] = None,
) -> List[Event]:
    """Parse a CSV document into a flat list of events.

    Args:
        data: UTF-8 encoded CSV with a header row.
        columns: Mapping from event fields to column names.
        timestamp_format: ``strptime`` format of the timestamp column;
            ``None`` means ISO-8601.

    Returns:
        One event per data row, in row order. Without an id column the
        ids are the 1-based row ordinals.
    """
    try:
        frame = pd.read_csv(io.BytesIO(data), dtype=str, keep_default_na=False, encoding="utf-8")
    except pd.errors.EmptyDataError as exc:
        raise LogFormatError("CSV input has no header row") from exc
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise LogFormatError(f"malformed CSV: {exc}") from exc

    required = [columns.timestamp, columns.label] + ([columns.id] if columns.id else [])
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise LogFormatError(f"CSV header lacks column(s) {missing}; found {list(frame.columns)}")
    if columns.extra_attributes is None:
        extras = [c for c in frame.columns if c not in required]
    else:
        extras = list(columns.extra_attributes)
        unknown = [c for c in extras if c not in frame.columns]
        if unknown:
            raise LogFormatError(f"CSV header lacks attribute column(s) {unknown}")

    raw_ts = frame[columns.timestamp]
    try:
        parsed = pd.to_datetime(raw_ts, format=timestamp_format or "ISO8601", errors="coerce")
    except (ValueError, TypeError) as exc:
        raise LogFormatError(f"column '{columns.timestamp}': {exc}") from exc

    events: List[Event] = []
    seen: Dict[str, int] = {}
    for i in range(len(frame)):
        row = i + 1
        record = frame.iloc[i]
        for col in required:
            if not isinstance(record[col], str) or record[col] == "":
                raise LogFormatError(f"row {row}: column '{col}' is empty")
        if pd.isna(parsed.iloc[i]):
            raise LogFormatError(
                f"row {row}: column '{columns.timestamp}': cannot parse {record[columns.timestamp]!r}"
            )
        event_id = record[columns.id] if columns.id else str(row)
        if event_id in seen:
            raise LogFormatError(f"row {row}: duplicate id {event_id!r} (first seen at row {seen[event_id]})")
        seen[event_id] = row
        attributes = {c: record[c] for c in extras if isinstance(record[c], str)}
        events.append(Event(event_id, parsed.iloc[i].to_pydatetime(), record[columns.label], attributes))
    logger.debug("parsed %d CSV rows", len(events))
    return events


def write_csv(log: EventLog | Sequence[Event]) -> bytes:
    """Serialise events as CSV with ``id,timestamp,label`` and one column per attribute."""
    events = list(log.events()) if isinstance(log, EventLog) else list(log)
    attribute_names: List[str] = []
    for e in events:
        for name in e.attributes:
            if name not in attribute_names:
                attribute_names.append(name)
    rows = [
        {"id": e.id, "timestamp": e.timestamp.isoformat(), "label": e.label, **e.attributes}
        for e in events
    ]
    frame = pd.DataFrame(rows, columns=["id", "timestamp", "label"] + attribute_names)
    return frame.to_csv(index=False, lineterminator="\n").encode("utf-8")


def partition(events: Sequence[Event], spec: PartitionSpec) -> EventLog:
    """Group events into traces by key attributes and calendar day.

    Traces appear in order of their first event in the input; inside a
    trace events are stably sorted by timestamp, so equal timestamps keep
    input order.
    """
    groups: Dict[Tuple[str, ...], List[Event]] = {}
    boundary = timedelta(hours=spec.day_boundary.hour, minutes=spec.day_boundary.minute,
                         seconds=spec.day_boundary.second)
    for e in events:
        key: List[str] = []
        for name in spec.key_attributes:
            if name not in e.attributes:
                raise PartitionError(f"event {e.id!r} has no attribute {name!r}")
            key.append(str(e.attributes[name]))
        if spec.calendar_granularity == DAY:
            key.append((e.timestamp - boundary).date().isoformat())
        groups.setdefault(tuple(key), []).append(e)
    traces = tuple(
        Trace("|".join(key), tuple(sorted(members, key=lambda e: e.timestamp)))
        for key, members in groups.items()
    )
    return EventLog(traces)


def apply_refinement(log: EventLog, mapping: RelabelingMap, assignment: Mapping[str, int]) -> EventLog:
    """Relabel the events of ``mapping.covered_label`` by their cluster index.

    Args:
        log: The log to refine.
        mapping: Refined label text per cluster index.
        assignment: Cluster index per event id, for exactly the covered events.

    Returns:
        A log with identical ids, timestamps and trace structure.
    """
    covered = [e.id for e in log.events() if e.label == mapping.covered_label]
    if not covered:
        return log
    covered_ids = set(covered)
    stray = [i for i in assignment if i not in covered_ids]
    if stray:
        raise RelabelingError(f"assignment names events not labeled {mapping.covered_label!r}: {stray[:5]}")
    others = log.label_alphabet - {mapping.covered_label}
    clash = others.intersection(mapping.entries.values())
    if clash:
        raise RelabelingError(f"refined labels {sorted(clash)} already occur in the log")
    labels: Dict[str, str] = {}
    for event_id in covered:
        if event_id not in assignment:
            raise RelabelingError(f"no cluster assigned to event {event_id!r}")
        cluster = int(assignment[event_id])
        if cluster not in mapping.entries:
            raise RelabelingError(f"cluster {cluster} of event {event_id!r} has no refined label")
        labels[event_id] = mapping.entries[cluster]
    return log.relabel(labels)


def check_refinement_order(fine_log: EventLog, coarse_log: EventLog) -> bool:
    """True iff equal labels in ``fine_log`` imply equal labels in ``coarse_log``."""
    fine = fine_log.labels_by_id()
    coarse = coarse_log.labels_by_id()
    if fine.keys() != coarse.keys():
        raise RelabelingError("logs do not contain the same event ids")
    image: Dict[str, str] = {}
    for event_id, label in fine.items():
        if image.setdefault(label, coarse[event_id]) != coarse[event_id]:
            return False
    return True


def parse_xes(data: bytes) -> EventLog:
    """Parse an XES document (``concept:name`` and ``time:timestamp`` subset)."""
    # pm4py is slow to import; only XES users pay for it
    from pm4py.objects.log.importer.xes import importer as xes_importer

    try:
        raw = xes_importer.deserialize(data, parameters={"show_progress_bar": False})
    except Exception as exc:
        raise LogFormatError(f"malformed XES document: {exc}") from exc

    traces = []
    for t_idx, raw_trace in enumerate(raw):
        events = []
        for e_idx, raw_event in enumerate(raw_trace):
            if "concept:name" not in raw_event:
                raise LogFormatError(f"trace {t_idx}, event {e_idx}: missing concept:name")
            if "time:timestamp" not in raw_event or not isinstance(raw_event["time:timestamp"], datetime):
                raise LogFormatError(f"trace {t_idx}, event {e_idx}: missing time:timestamp")
            event_id = str(raw_event.get("identity:id", f"{t_idx}:{e_idx}"))
            attributes = {
                k: v for k, v in raw_event.items()
                if k not in ("concept:name", "time:timestamp", "identity:id")
            }
            events.append(Event(event_id, raw_event["time:timestamp"], str(raw_event["concept:name"]), attributes))
        case_id = str(raw_trace.attributes.get("concept:name", t_idx))
        traces.append(Trace(case_id, tuple(sorted(events, key=lambda e: e.timestamp))))
    return EventLog(tuple(traces))


def write_xes(log: EventLog) -> bytes:
    """Serialise a log as XES, one ``<trace>`` per trace."""
    from pm4py.objects.log.exporter.xes import exporter as xes_exporter
    from pm4py.objects.log.obj import Event as XesEvent
    from pm4py.objects.log.obj import EventLog as XesLog
    from pm4py.objects.log.obj import Trace as XesTrace

    out = XesLog()
    for trace in log.traces:
        xes_trace = XesTrace()
        xes_trace.attributes["concept:name"] = trace.case_id
        for e in trace.events:
            xes_trace.append(XesEvent({
                **e.attributes,
                "identity:id": e.id,
                "concept:name": e.label,
                "time:timestamp": e.timestamp,
            }))
        out.append(xes_trace)
    serialised = xes_exporter.serialize(out, parameters={"show_progress_bar": False})
    return serialised if isinstance(serialised, bytes) else serialised.encode("utf-8")
