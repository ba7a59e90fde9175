"""Structural annotation files, frame targets, and corpus statistics.

The native format has one boundary per line::

    12.353015873	[t], b, A, main theme

i.e. a timestamp, then bracketed boundary-category codes, then optional
fine, coarse and function labels.
"""
from __future__ import annotations

import math
import re
import statistics
from collections import Counter
from dataclasses import dataclass, field, replace
from typing import FrozenSet, Iterable, Optional

import numpy as np

from .errors import MalformedLine, MissingBeginEnd, NonMonotonicTime

# canonical serialization order
CATEGORY_CODES = ("r", "d", "t", "p", "h", "rg", "rp", "b", "e")
BOUNDARY_CODES = CATEGORY_CODES[:7]

_LINE = re.compile(r"^(\S+)\s+\[([^\]]*)\]\s*(?:,\s*(.*?))?\s*$")


@dataclass(frozen=True)
class BoundaryEvent:
    time: float
    categories: FrozenSet[str] = frozenset()
    fine_label: Optional[str] = None
    coarse_label: Optional[str] = None
    function_label: Optional[str] = None

    @property
    def is_begin(self) -> bool:
        return "b" in self.categories

    @property
    def is_end(self) -> bool:
        return "e" in self.categories

    @property
    def is_interior(self) -> bool:
        return not (self.is_begin or self.is_end)


@dataclass(frozen=True)
class AnnotationTrack:
    events: tuple = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(self.events))
        validate_track(self)

    @property
    def duration(self) -> float:
        return self.events[-1].time

    def interior_times(self) -> np.ndarray:
        return np.array([ev.time for ev in self.events if ev.is_interior], dtype=np.float64)


@dataclass
class FrameTargets:
    values: np.ndarray
    frame_rate: float
    smear: int = 0


def validate_track(track: AnnotationTrack) -> None:
    events = track.events
    if len(events) < 2:
        raise MissingBeginEnd("a track needs at least a begin and an end event")
    if not events[0].is_begin:
        raise MissingBeginEnd("first event must carry the b marker")
    if not events[-1].is_end:
        raise MissingBeginEnd("last event must carry the e marker")
    for i, ev in enumerate(events):
        unknown = set(ev.categories) - set(CATEGORY_CODES)
        if unknown:
            raise ValueError(f"unknown category codes {sorted(unknown)}")
        if ev.is_begin and ev.is_end:
            raise MissingBeginEnd("an event cannot be both begin and end")
        if ev.is_begin and i != 0:
            raise MissingBeginEnd(f"b marker on event {i}, only allowed first")
        if ev.is_end and i != len(events) - 1:
            raise MissingBeginEnd(f"e marker on event {i}, only allowed last")
        if ev.time < 0 or not math.isfinite(ev.time):
            raise ValueError(f"invalid time {ev.time}")
    for a, b in zip(events, events[1:]):
        if not b.time > a.time:
            raise NonMonotonicTime(f"time {b.time} does not follow {a.time}")


def _sorted_codes(codes: Iterable[str]) -> list:
    order = {c: i for i, c in enumerate(CATEGORY_CODES)}
    return sorted(codes, key=lambda c: order.get(c, len(order)))


def parse_annotation_line(line: str, line_no: int = 0) -> BoundaryEvent:
    m = _LINE.match(line.strip())
    if not m:
        raise MalformedLine(line_no, line)
    time_text, codes_text, rest = m.groups()
    try:
        time = float(time_text)
    except ValueError:
        raise MalformedLine(line_no, line) from None
    codes = [c.strip() for c in codes_text.split(",") if c.strip()]
    if any(c not in CATEGORY_CODES for c in codes):
        raise MalformedLine(line_no, line)
    labels = [None, None, None]
    if rest:
        parts = [p.strip() for p in rest.split(",", 2)]
        for i, p in enumerate(parts):
            labels[i] = p or None
    return BoundaryEvent(time, frozenset(codes), *labels)


def parse_annotation_text(text: str) -> AnnotationTrack:
    events = []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        events.append(parse_annotation_line(line, no))
    for a, b in zip(events, events[1:]):
        if not b.time > a.time:
            raise NonMonotonicTime(f"time {b.time} does not follow {a.time}")
    return AnnotationTrack(events)


def parse_annotation_file(path) -> AnnotationTrack:
    with open(path, encoding="utf-8") as fh:
        return parse_annotation_text(fh.read())


def format_event(ev: BoundaryEvent) -> str:
    line = f"{ev.time:.9f}\t[{', '.join(_sorted_codes(ev.categories))}]"
    labels = [ev.fine_label, ev.coarse_label, ev.function_label]
    while labels and labels[-1] is None:
        labels.pop()
    for label in labels:
        line += ", " + (label or "")
    return line


def serialize_annotation_file(track: AnnotationTrack) -> str:
    return "\n".join(format_event(ev) for ev in track.events) + "\n"


def write_annotation_file(track: AnnotationTrack, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_annotation_file(track))


def parse_two_column_text(text: str) -> AnnotationTrack:
    """Two-column ``time<TAB>label`` files (SALAMI style); only times matter.

    The first row becomes the begin event and the last the end event; each
    label is kept as the event's function label.
    """
    rows = []
    for no, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.strip().split(None, 1)
        try:
            t = float(parts[0])
        except ValueError:
            raise MalformedLine(no, line) from None
        rows.append((t, parts[1].strip() if len(parts) > 1 else None))
    if len(rows) < 2:
        raise MissingBeginEnd("two-column file needs at least two rows")
    for (a, _), (b, _) in zip(rows, rows[1:]):
        if not b > a:
            raise NonMonotonicTime(f"time {b} does not follow {a}")
    events = []
    for i, (t, label) in enumerate(rows):
        codes = frozenset("b") if i == 0 else frozenset("e") if i == len(rows) - 1 else frozenset()
        events.append(BoundaryEvent(t, codes, function_label=label))
    return AnnotationTrack(events)


def parse_two_column_file(path) -> AnnotationTrack:
    with open(path, encoding="utf-8") as fh:
        return parse_two_column_text(fh.read())


def serialize_two_column(track: AnnotationTrack) -> str:
    lines = []
    for ev in track.events:
        label = ev.function_label or ev.coarse_label or ev.fine_label
        if label is None:
            label = "begin" if ev.is_begin else "end" if ev.is_end else "boundary"
        lines.append(f"{ev.time:.9f}\t{label}")
    return "\n".join(lines) + "\n"


def load_annotation(path, fmt: str = "savgm") -> AnnotationTrack:
    if fmt == "savgm":
        return parse_annotation_file(path)
    if fmt == "two_column":
        return parse_two_column_file(path)
    raise ValueError(f"unknown annotation format {fmt!r}")


def time_to_frame(time: float, frame_rate: float) -> int:
    return int(math.floor(time * frame_rate + 0.5))


def boundaries_to_frame_targets(track: AnnotationTrack, frame_rate: float, T: int,
                                smear: int = 0) -> FrameTargets:
    if T < 1 or frame_rate <= 0:
        raise ValueError("T must be >= 1 and frame_rate > 0")
    values = np.zeros(T, dtype=np.float32)
    for t in track.interior_times():
        idx = min(max(time_to_frame(t, frame_rate), 0), T - 1)
        values[max(0, idx - smear):idx + smear + 1] = 1.0
    return FrameTargets(values, frame_rate, smear)


def scale_annotation_times(track: AnnotationTrack, rate: float) -> AnnotationTrack:
    """Rescale for audio played ``rate`` times faster."""
    if rate <= 0:
        raise ValueError("rate must be positive")
    if rate == 1.0:
        return track
    return AnnotationTrack([replace(ev, time=ev.time / rate) for ev in track.events])


def corpus_stats(tracks) -> dict:
    tracks = list(tracks)
    if not tracks:
        raise ValueError("corpus_stats needs at least one track")
    counts = Counter()
    durations = []
    for track in tracks:
        for ev in track.events:
            if ev.is_interior:
                counts.update(ev.categories)
        times = [ev.time for ev in track.events]
        durations.extend(b - a for a, b in zip(times, times[1:]))
    total = sum(counts.values())
    histogram = {c: counts[c] for c in BOUNDARY_CODES if counts[c]}
    return {
        "tracks": len(tracks),
        "interior_boundaries": sum(int(sum(ev.is_interior for ev in t.events)) for t in tracks),
        "histogram": histogram,
        "fractions": {c: n / total for c, n in histogram.items()},
        "segment_duration": {
            "mean": statistics.fmean(durations),
            "median": statistics.median(durations),
            "count": len(durations),
        },
    }


def format_stats_report(stats: dict) -> str:
    """Text bar chart of category fractions, most frequent first."""
    lines = [f"{stats['tracks']} tracks, {stats['interior_boundaries']} interior boundaries"]
    for code, frac in sorted(stats["fractions"].items(), key=lambda kv: (-kv[1], kv[0])):
        lines.append(f"{code:>3} {stats['histogram'][code]:6d} {frac:6.1%} {'#' * round(40 * frac)}")
    sd = stats["segment_duration"]
    lines.append(f"segment duration: mean {sd['mean']:.2f} s, median {sd['median']:.2f} s")
    return "\n".join(lines)
