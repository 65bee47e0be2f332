"""Ingestion and indexing of raw learning-activity logs.

Raw logs are delimited text with one activity record per line:
``course_id, learner_id, activity_type, unix_timestamp``.  Parsing
produces an :class:`EventLog` (a canonically sorted, column-oriented
event store) plus a :class:`ValidationReport` accounting for every
input row.  :func:`build_enrollment_table` derives the per
(learner, course) first-activity table that all co-enrollment and
sequence analysis runs on.
"""

from __future__ import annotations

import datetime as dt
import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np
import pandas as pd

__all__ = [
    "ActivityType",
    "ActivityEvent",
    "CourseMeta",
    "EventLog",
    "EnrollmentTable",
    "ValidationReport",
    "CsvSchema",
    "parse_activity_csv",
    "read_course_catalog",
    "write_activity_csv",
    "build_enrollment_table",
    "filter_window",
]


class ActivityType(IntEnum):
    """Closed set of recognised learning-activity kinds."""

    video_watch = 0
    video_stop = 1
    video_jump = 2
    page_check = 3
    page_close = 4
    assignment_submit = 5
    assignment_reset = 6
    forum_ask = 7
    forum_reply = 8


ACTIVITY_NAMES: tuple[str, ...] = tuple(t.name for t in ActivityType)
_ACTIVITY_CODE: dict[str, int] = {t.name: t.value for t in ActivityType}

# Rejection reason codes used by ValidationReport.
REASON_MALFORMED = "malformed_row"
REASON_EMPTY_FIELD = "empty_field"
REASON_BAD_TIMESTAMP = "bad_timestamp"
REASON_UNKNOWN_ACTIVITY = "unknown_activity_type"
REJECT_REASONS = (
    REASON_MALFORMED,
    REASON_EMPTY_FIELD,
    REASON_BAD_TIMESTAMP,
    REASON_UNKNOWN_ACTIVITY,
)


@dataclass(frozen=True)
class ActivityEvent:
    """One learning-log record."""

    course_id: str
    learner_id: str
    activity_type: ActivityType
    timestamp: int

    def __post_init__(self) -> None:
        if not self.course_id or not self.learner_id:
            raise ValueError("course_id and learner_id must be non-empty")
        if self.timestamp < 0:
            raise ValueError("timestamp must be >= 0")


@dataclass(frozen=True)
class CourseMeta:
    """Catalog entry for one course; category is optional."""

    course_id: str
    title: str = ""
    start_date: dt.date | None = None
    end_date: dt.date | None = None
    category: str | None = None

    def __post_init__(self) -> None:
        if (
            self.start_date is not None
            and self.end_date is not None
            and self.start_date > self.end_date
        ):
            raise ValueError("start_date must not be after end_date")


@dataclass(frozen=True, eq=False)
class EventLog:
    """Column-oriented store of validated activity events.

    Events are kept sorted by (learner_id, timestamp, course_id,
    activity_type).  String identifiers are interned into sorted code
    tables so the arrays stay compact and the representation is
    independent of input order and of how ingestion was sharded.
    The structure is immutable after construction and safe to share
    across threads.
    """

    learner_codes: np.ndarray
    course_codes: np.ndarray
    activity_codes: np.ndarray
    timestamps: np.ndarray
    learners: tuple[str, ...]
    courses: tuple[str, ...]
    catalog: Mapping[str, CourseMeta] = field(default_factory=dict)
    unknown_courses: frozenset[str] = frozenset()

    @classmethod
    def from_arrays(
        cls,
        learner_codes: np.ndarray,
        course_codes: np.ndarray,
        activity_codes: np.ndarray,
        timestamps: np.ndarray,
        learners: Sequence[str],
        courses: Sequence[str],
        catalog: Mapping[str, CourseMeta] | None = None,
        *,
        presorted: bool = False,
    ) -> "EventLog":
        """Build a log from code arrays, canonicalising the sort order."""
        learner_codes = np.asarray(learner_codes, dtype=np.int64)
        course_codes = np.asarray(course_codes, dtype=np.int64)
        activity_codes = np.asarray(activity_codes, dtype=np.uint8)
        timestamps = np.asarray(timestamps, dtype=np.int64)
        if list(learners) != sorted(learners) or list(courses) != sorted(courses):
            raise ValueError("string tables must be sorted so code order matches id order")
        if not presorted and len(timestamps) > 0:
            order = np.lexsort(
                (activity_codes, course_codes, timestamps, learner_codes)
            )
            learner_codes = learner_codes[order]
            course_codes = course_codes[order]
            activity_codes = activity_codes[order]
            timestamps = timestamps[order]
        catalog = dict(catalog) if catalog else {}
        unknown = frozenset(c for c in courses if c not in catalog)
        return cls(
            learner_codes=learner_codes,
            course_codes=course_codes,
            activity_codes=activity_codes,
            timestamps=timestamps,
            learners=tuple(learners),
            courses=tuple(courses),
            catalog=catalog,
            unknown_courses=unknown,
        )

    @classmethod
    def from_events(
        cls,
        events: Iterable[ActivityEvent],
        catalog: Mapping[str, CourseMeta] | None = None,
    ) -> "EventLog":
        """Build a log from row-level events (convenience for small inputs)."""
        events = list(events)
        if not events:
            return cls.from_arrays(
                np.empty(0, np.int64),
                np.empty(0, np.int64),
                np.empty(0, np.uint8),
                np.empty(0, np.int64),
                (),
                (),
                catalog,
            )
        learners, l_codes = np.unique([e.learner_id for e in events], return_inverse=True)
        courses, c_codes = np.unique([e.course_id for e in events], return_inverse=True)
        acts = np.fromiter((int(e.activity_type) for e in events), np.uint8, len(events))
        ts = np.fromiter((e.timestamp for e in events), np.int64, len(events))
        return cls.from_arrays(
            l_codes, c_codes, acts, ts, [str(s) for s in learners],
            [str(s) for s in courses], catalog,
        )

    def __len__(self) -> int:
        return len(self.timestamps)

    def event(self, i: int) -> ActivityEvent:
        return ActivityEvent(
            course_id=self.courses[self.course_codes[i]],
            learner_id=self.learners[self.learner_codes[i]],
            activity_type=ActivityType(int(self.activity_codes[i])),
            timestamp=int(self.timestamps[i]),
        )

    def __iter__(self) -> Iterator[ActivityEvent]:
        for i in range(len(self)):
            yield self.event(i)

    def time_range(self) -> tuple[int, int] | None:
        """(min, max) event timestamp, or None for an empty log."""
        if len(self) == 0:
            return None
        return int(self.timestamps.min()), int(self.timestamps.max())

    def equals(self, other: "EventLog") -> bool:
        """Exact event-level equality (catalog identity not required)."""
        return (
            self.learners == other.learners
            and self.courses == other.courses
            and np.array_equal(self.learner_codes, other.learner_codes)
            and np.array_equal(self.course_codes, other.course_codes)
            and np.array_equal(self.activity_codes, other.activity_codes)
            and np.array_equal(self.timestamps, other.timestamps)
        )


@dataclass(frozen=True)
class ValidationReport:
    """Row accounting for one ingestion run: parsed + rejected = total."""

    total_rows: int
    parsed_rows: int
    rejected_rows: int
    rejected_by_reason: Mapping[str, int]
    distinct_learners: int
    distinct_courses: int
    time_range: tuple[int, int] | None

    def to_text(self) -> str:
        lines = [
            f"total_rows={self.total_rows}",
            f"parsed_rows={self.parsed_rows}",
            f"rejected_rows={self.rejected_rows}",
        ]
        for reason in REJECT_REASONS:
            lines.append(f"rejected.{reason}={self.rejected_by_reason.get(reason, 0)}")
        lines.append(f"distinct_learners={self.distinct_learners}")
        lines.append(f"distinct_courses={self.distinct_courses}")
        if self.time_range is None:
            lines.append("time_range=")
        else:
            lines.append(f"time_range={self.time_range[0]}..{self.time_range[1]}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CsvSchema:
    """Column layout of a delimited activity file.

    ``columns`` maps the four canonical fields to 0-based column
    indexes, or to header names when ``has_header`` is set.
    """

    delimiter: str = ","
    has_header: bool = False
    columns: Mapping[str, int | str] = field(
        default_factory=lambda: {
            "course_id": 0,
            "learner_id": 1,
            "activity_type": 2,
            "timestamp": 3,
        }
    )

    FIELDS = ("course_id", "learner_id", "activity_type", "timestamp")

    def __post_init__(self) -> None:
        missing = [f for f in self.FIELDS if f not in self.columns]
        if missing:
            raise ValueError(f"schema missing columns: {missing}")

    @classmethod
    def from_dict(cls, d: Mapping[str, object]) -> "CsvSchema":
        kwargs: dict = {}
        if "delimiter" in d:
            kwargs["delimiter"] = str(d["delimiter"])
        if "has_header" in d:
            kwargs["has_header"] = bool(d["has_header"])
        if "columns" in d:
            kwargs["columns"] = dict(d["columns"])  # type: ignore[arg-type]
        return cls(**kwargs)


def _read_bytes(source) -> bytes:
    """Accept a path, bytes, or binary file-like; I/O errors propagate."""
    if isinstance(source, bytes):
        return source
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    data = source.read()
    if isinstance(data, str):
        return data.encode("utf-8")
    return data


def _count_lines(buf: bytes) -> int:
    if not buf:
        return 0
    n = buf.count(b"\n")
    if not buf.endswith(b"\n"):
        n += 1
    return n


def _split_line_aligned(buf: bytes, parts: int) -> list[bytes]:
    """Split a byte buffer into at most ``parts`` chunks on line boundaries."""
    if parts <= 1 or len(buf) < 2:
        return [buf]
    step = max(1, len(buf) // parts)
    chunks = []
    start = 0
    for _ in range(parts - 1):
        cut = buf.find(b"\n", start + step)
        if cut < 0:
            break
        chunks.append(buf[start : cut + 1])
        start = cut + 1
    if start < len(buf):
        chunks.append(buf[start:])
    return [c for c in chunks if c]


def _resolve_columns(schema: CsvSchema, header_line: bytes | None) -> dict[str, int]:
    """Map schema fields to column indexes, resolving names via the header."""
    resolved: dict[str, int] = {}
    names: list[str] | None = None
    if header_line is not None:
        names = [
            h.strip()
            for h in header_line.decode("utf-8").rstrip("\r\n").split(schema.delimiter)
        ]
    for fld in CsvSchema.FIELDS:
        col = schema.columns[fld]
        if isinstance(col, int):
            resolved[fld] = col
        else:
            if names is None:
                raise ValueError(
                    f"column {fld!r} mapped by name {col!r} but the file has no header"
                )
            try:
                resolved[fld] = names.index(col)
            except ValueError:
                raise ValueError(f"header has no column named {col!r}") from None
    return resolved


def _sniff_width(body: bytes, delimiter: str, min_width: int) -> int:
    nl = body.find(b"\n")
    first = body[: nl if nl >= 0 else len(body)].decode("utf-8", errors="replace")
    width = first.count(delimiter) + 1 if first.strip("\r") else min_width
    return max(width, min_width)


def _parse_shard(chunk: bytes, delimiter: str, width: int, cols: dict[str, int]):
    """Parse one byte shard; returns column data plus reject tallies."""
    rejects = {r: 0 for r in REJECT_REASONS}
    n_lines = _count_lines(chunk)
    empty = (
        pd.Series([], dtype=object),
        pd.Series([], dtype=object),
        np.empty(0, np.uint8),
        np.empty(0, np.int64),
    )
    if n_lines == 0:
        return empty, rejects, 0
    try:
        # No usecols here: with column projection the C tokenizer quietly
        # truncates over-long rows instead of flagging them as bad lines.
        df = pd.read_csv(
            io.BytesIO(chunk),
            sep=delimiter,
            header=None,
            names=list(range(width)),
            dtype={
                cols["course_id"]: "category",
                cols["learner_id"]: "category",
                cols["activity_type"]: "category",
                cols["timestamp"]: str,
            },
            na_filter=False,
            engine="c",
            on_bad_lines="skip",
        )
    except pd.errors.EmptyDataError:
        rejects[REASON_MALFORMED] += n_lines
        return empty, rejects, n_lines
    rejects[REASON_MALFORMED] += n_lines - len(df)

    course = df[cols["course_id"]]
    learner = df[cols["learner_id"]]
    activity = df[cols["activity_type"]]
    ts_raw = df[cols["timestamp"]]

    bad_empty = (
        (course == "").to_numpy()
        | (learner == "").to_numpy()
        | (activity == "").to_numpy()
        | (ts_raw == "").to_numpy()
    )
    ts_num = pd.to_numeric(ts_raw, errors="coerce")
    ts_vals = ts_num.to_numpy(dtype=np.float64, na_value=np.nan)
    bad_ts = ~bad_empty & (
        np.isnan(ts_vals) | (ts_vals != np.floor(ts_vals)) | (ts_vals < 0)
    )
    act_code_map = activity.cat.categories.map(lambda s: _ACTIVITY_CODE.get(s, -1))
    act_codes_all = np.asarray(act_code_map, dtype=np.int64)[activity.cat.codes]
    bad_act = ~bad_empty & ~bad_ts & (act_codes_all < 0)

    rejects[REASON_EMPTY_FIELD] += int(bad_empty.sum())
    rejects[REASON_BAD_TIMESTAMP] += int(bad_ts.sum())
    rejects[REASON_UNKNOWN_ACTIVITY] += int(bad_act.sum())

    keep = ~(bad_empty | bad_ts | bad_act)
    data = (
        course[keep],
        learner[keep],
        act_codes_all[keep].astype(np.uint8),
        ts_vals[keep].astype(np.int64),
    )
    return data, rejects, n_lines


def _merge_categorical(shards: list[pd.Series]) -> tuple[np.ndarray, tuple[str, ...]]:
    """Merge per-shard categorical columns into global sorted codes."""
    all_cats = sorted(set().union(*(set(s.cat.categories) for s in shards)) if shards else set())
    lookup = {c: i for i, c in enumerate(all_cats)}
    parts = []
    for s in shards:
        remap = np.fromiter(
            (lookup[c] for c in s.cat.categories), np.int64, len(s.cat.categories)
        )
        codes = s.cat.codes.to_numpy()
        parts.append(remap[codes] if len(remap) else np.empty(0, np.int64))
    merged = np.concatenate(parts) if parts else np.empty(0, np.int64)
    return merged, tuple(str(c) for c in all_cats)


def parse_activity_csv(
    source,
    schema: CsvSchema | None = None,
    catalog: Mapping[str, CourseMeta] | None = None,
    workers: int = 1,
) -> tuple[EventLog, ValidationReport]:
    """Parse delimited activity text into an (EventLog, ValidationReport).

    Every non-header line counts as exactly one input row.  Rows that
    cannot be tokenised (ragged width, blank line) are rejected as
    ``malformed_row``; rows with an empty required cell, a non-integer
    or negative timestamp, or an unrecognised activity type are
    rejected with the corresponding reason.  Rejections are never
    fatal.  An unreadable source raises the underlying ``OSError``.

    Sharded parsing (``workers > 1``) yields bit-identical output to a
    single-worker run: shards are merged into globally sorted string
    tables and the event order is re-canonicalised at the end.
    """
    schema = schema or CsvSchema()
    buf = _read_bytes(source)

    header_line: bytes | None = None
    body = buf
    if schema.has_header and buf:
        nl = buf.find(b"\n")
        if nl < 0:
            header_line, body = buf, b""
        else:
            header_line, body = buf[:nl], buf[nl + 1 :]
    cols = _resolve_columns(schema, header_line)
    width = _sniff_width(body, schema.delimiter, max(cols.values()) + 1)

    total_rows = _count_lines(body)
    workers = max(1, int(workers))
    # Bound per-shard transient memory on very large inputs.
    n_shards = max(workers, len(body) // (64 << 20) + 1) if body else 1
    shards = _split_line_aligned(body, n_shards) if body else []

    if len(shards) <= 1 or workers == 1:
        results = [_parse_shard(c, schema.delimiter, width, cols) for c in shards]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(lambda c: _parse_shard(c, schema.delimiter, width, cols), shards)
            )

    rejects = {r: 0 for r in REJECT_REASONS}
    course_parts, learner_parts, act_parts, ts_parts = [], [], [], []
    for (course, learner, act, ts), shard_rej, _ in results:
        for r, v in shard_rej.items():
            rejects[r] += v
        course_parts.append(course)
        learner_parts.append(learner)
        act_parts.append(act)
        ts_parts.append(ts)

    course_codes, courses = _merge_categorical(course_parts)
    learner_codes, learners = _merge_categorical(learner_parts)
    act_codes = np.concatenate(act_parts) if act_parts else np.empty(0, np.uint8)
    ts = np.concatenate(ts_parts) if ts_parts else np.empty(0, np.int64)

    log = EventLog.from_arrays(
        learner_codes, course_codes, act_codes, ts, learners, courses, catalog
    )
    parsed = len(log)
    rejected = sum(rejects.values())
    report = ValidationReport(
        total_rows=total_rows,
        parsed_rows=parsed,
        rejected_rows=rejected,
        rejected_by_reason=rejects,
        distinct_learners=len(np.unique(learner_codes)) if parsed else 0,
        distinct_courses=len(np.unique(course_codes)) if parsed else 0,
        time_range=log.time_range(),
    )
    return log, report


def write_activity_csv(log: EventLog, path, schema: CsvSchema | None = None) -> None:
    """Write a log back out in the canonical four-column layout."""
    schema = schema or CsvSchema()
    df = pd.DataFrame(
        {
            "course_id": pd.Categorical.from_codes(log.course_codes, categories=list(log.courses)),
            "learner_id": pd.Categorical.from_codes(log.learner_codes, categories=list(log.learners)),
            "activity_type": pd.Categorical.from_codes(
                log.activity_codes.astype(np.int64), categories=list(ACTIVITY_NAMES)
            ),
            "timestamp": log.timestamps,
        }
    )
    df.to_csv(path, sep=schema.delimiter, header=schema.has_header, index=False)


def read_course_catalog(
    source, delimiter: str = ",", has_header: bool = True
) -> dict[str, CourseMeta]:
    """Read a course catalog file.

    Columns: course_id, title, start_date, end_date, category.  Dates
    are ISO-8601 and may be empty, as may category.
    """
    buf = _read_bytes(source)
    if not buf.strip():
        return {}
    df = pd.read_csv(
        io.BytesIO(buf),
        sep=delimiter,
        header=0 if has_header else None,
        names=["course_id", "title", "start_date", "end_date", "category"],
        dtype=str,
        na_filter=False,
        engine="c",
        on_bad_lines="error",
    )
    catalog: dict[str, CourseMeta] = {}
    for row in df.itertuples(index=False):
        start = dt.date.fromisoformat(row.start_date) if row.start_date else None
        end = dt.date.fromisoformat(row.end_date) if row.end_date else None
        meta = CourseMeta(
            course_id=row.course_id,
            title=row.title,
            start_date=start,
            end_date=end,
            category=row.category or None,
        )
        catalog[meta.course_id] = meta
    return catalog


@dataclass(frozen=True, eq=False)
class EnrollmentTable:
    """Per (learner, course) first-activity times, sorted by (learner, course).

    ``total_learners`` is the number of distinct learners with at least
    one enrollment; per-course learner counts are the number of
    distinct learners with at least one event in that course.
    """

    learner_codes: np.ndarray
    course_codes: np.ndarray
    first_times: np.ndarray
    learners: tuple[str, ...]
    courses: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.first_times)

    @property
    def total_learners(self) -> int:
        return len(np.unique(self.learner_codes))

    def course_counts(self) -> np.ndarray:
        """Distinct-learner count per course code."""
        return np.bincount(self.course_codes, minlength=len(self.courses))

    def course_learner_count(self, course_id: str) -> int:
        code = self._course_code(course_id)
        return int(np.count_nonzero(self.course_codes == code))

    def _course_code(self, course_id: str) -> int:
        try:
            i = self.courses.index(course_id)
        except ValueError:
            raise KeyError(course_id) from None
        return i

    def first_activity_time(self, learner_id: str, course_id: str) -> int:
        lc = self.learners.index(learner_id) if learner_id in self.learners else -1
        if lc < 0:
            raise KeyError(learner_id)
        cc = self._course_code(course_id)
        mask = (self.learner_codes == lc) & (self.course_codes == cc)
        idx = np.nonzero(mask)[0]
        if len(idx) == 0:
            raise KeyError((learner_id, course_id))
        return int(self.first_times[idx[0]])

    def learners_of(self, course_id: str) -> frozenset[str]:
        code = self._course_code(course_id)
        codes = self.learner_codes[self.course_codes == code]
        return frozenset(self.learners[c] for c in codes)

    def rows(self) -> Iterator[tuple[str, str, int]]:
        for lc, cc, t in zip(self.learner_codes, self.course_codes, self.first_times):
            yield self.learners[lc], self.courses[cc], int(t)

    def iter_learner_groups(self) -> Iterator[tuple[int, np.ndarray, np.ndarray]]:
        """Yield (learner_code, course_codes, first_times) per learner."""
        if len(self) == 0:
            return
        bounds = np.nonzero(np.diff(self.learner_codes))[0] + 1
        starts = np.concatenate(([0], bounds))
        ends = np.concatenate((bounds, [len(self)]))
        for s, e in zip(starts, ends):
            yield int(self.learner_codes[s]), self.course_codes[s:e], self.first_times[s:e]


def build_enrollment_table(log: EventLog) -> EnrollmentTable:
    """Derive the enrollment table: first activity per (learner, course).

    Idempotent and independent of input event order; an empty log
    yields an empty table.
    """
    if len(log) == 0:
        return EnrollmentTable(
            np.empty(0, np.int64),
            np.empty(0, np.int64),
            np.empty(0, np.int64),
            log.learners,
            log.courses,
        )
    order = np.lexsort((log.timestamps, log.course_codes, log.learner_codes))
    l = log.learner_codes[order]
    c = log.course_codes[order]
    t = log.timestamps[order]
    first = np.empty(len(l), dtype=bool)
    first[0] = True
    first[1:] = (l[1:] != l[:-1]) | (c[1:] != c[:-1])
    return EnrollmentTable(
        learner_codes=l[first],
        course_codes=c[first],
        first_times=t[first],
        learners=log.learners,
        courses=log.courses,
    )


def filter_window(log: EventLog, start: int, end: int) -> EventLog:
    """Restrict a log to the half-open time window [start, end)."""
    if start >= end:
        raise ValueError("window start must be < end")
    mask = (log.timestamps >= start) & (log.timestamps < end)
    return EventLog(
        learner_codes=log.learner_codes[mask],
        course_codes=log.course_codes[mask],
        activity_codes=log.activity_codes[mask],
        timestamps=log.timestamps[mask],
        learners=log.learners,
        courses=log.courses,
        catalog=log.catalog,
        unknown_courses=log.unknown_courses,
    )
