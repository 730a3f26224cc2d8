"""Parse infobox-timeline JSON files and clean raw field values.

The cleaning functions (`normalize_null`, `safe_int`, `safe_real`,
`normalize_date`) are total: they never raise and map every failure to a
null CleanValue, so a bad value can never crash a database load.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from datetime import datetime
from typing import Iterator, Mapping

#: Spellings of "no value" seen in infobox dumps, compared case-folded after
#: trimming.  Callers may pass their own set; unknown sentinels ("N.A.",
#: "TBD") are deliberately not nulls by default.
DEFAULT_NULL_VARIANTS = frozenset({"n/a", "na", "--", "-", "vacant", "&ndash;", "–", ""})


class IngestError(Exception):
    """Base class for timeline ingestion failures."""


class TimelineParseError(IngestError):
    """Input is not syntactically valid JSON."""

    def __init__(self, message: str, offset: int | None = None):
        super().__init__(message)
        self.offset = offset


class TimelineStructureError(IngestError):
    """JSON parsed but does not satisfy the timeline file contract."""


class CompositeShapeError(IngestError):
    """Composite value does not contain exactly one separator."""

    def __init__(self, raw: str, separator: str, count: int):
        super().__init__(
            f"expected exactly one {separator!r} in composite value {raw!r}, found {count}"
        )
        self.raw = raw


class FieldPatternError(IngestError):
    """Dynamic-field pattern is malformed."""


@dataclass(frozen=True)
class CleanValue:
    """A cleaned field value plus the original text for auditing.

    kind is one of: integer, real, text, date, null, composite-pair.
    ``raw`` always equals the input string byte-for-byte.  For dates,
    ``precision`` is "day" or "year" (year-only inputs anchor to Jan 1).
    """

    kind: str
    value: object
    raw: str
    precision: str | None = None

    @property
    def is_null(self) -> bool:
        return self.kind == "null"


@dataclass(frozen=True, eq=True)
class RawSnapshot:
    """One timestamped infobox sampling with its raw fields preserved verbatim."""

    timestamp: str
    fields: dict

    def sort_key(self) -> datetime:
        return parse_timestamp(self.timestamp)[1]


@dataclass(frozen=True, eq=True)
class Timeline:
    """An entity's snapshots, strictly ordered by timestamp."""

    entity_name: str
    domain: str
    snapshots: tuple[RawSnapshot, ...]


_TS_DATE_RE = re.compile(r"^\d{4}(-\d{2}(-\d{2})?)?$")


def parse_timestamp(text: str) -> tuple[str, datetime]:
    """Validate a snapshot timestamp and return (canonical ISO text, sort key).

    Accepts ISO-8601 prefixes (YYYY, YYYY-MM, YYYY-MM-DD) kept verbatim, and
    full ISO date-times (space or T separator, optional trailing Z).
    """
    s = text.strip()
    if _TS_DATE_RE.match(s):
        parts = [int(p) for p in s.split("-")]
        while len(parts) < 3:
            parts.append(1)
        try:
            return s, datetime(parts[0], parts[1], parts[2])
        except ValueError as exc:
            raise TimelineStructureError(f"invalid timestamp {text!r}: {exc}") from exc
    candidate = s.replace(" ", "T", 1)
    if candidate.endswith("Z"):
        candidate = candidate[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(candidate)
    except ValueError as exc:
        raise TimelineStructureError(f"invalid timestamp {text!r}: {exc}") from exc
    return dt.isoformat(), dt.replace(tzinfo=None)


def parse_timeline(data: bytes | str) -> Timeline:
    """Parse one timeline JSON document into a Timeline.

    Snapshots are returned sorted ascending by timestamp; duplicate
    timestamps and missing structure raise TimelineStructureError, malformed
    JSON raises TimelineParseError with the byte offset.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise TimelineParseError(f"malformed JSON at offset {exc.pos}: {exc.msg}", exc.pos) from exc

    if not isinstance(doc, dict):
        raise TimelineStructureError("timeline document must be a JSON object")
    entity = doc.get("entity")
    if not isinstance(entity, str) or not entity.strip():
        raise TimelineStructureError("missing or empty 'entity'")
    domain = doc.get("domain")
    if not isinstance(domain, str) or not domain.strip():
        raise TimelineStructureError("missing or empty 'domain'")
    raw_snaps = doc.get("snapshots")
    if not isinstance(raw_snaps, list) or not raw_snaps:
        raise TimelineStructureError("'snapshots' must be a non-empty list")

    snapshots = []
    for i, item in enumerate(raw_snaps):
        if not isinstance(item, dict):
            raise TimelineStructureError(f"snapshot {i} is not an object")
        if "timestamp" not in item:
            raise TimelineStructureError(f"snapshot {i} is missing 'timestamp'")
        canonical, _ = parse_timestamp(str(item["timestamp"]))
        fields = item.get("fields")
        if not isinstance(fields, Mapping):
            raise TimelineStructureError(f"snapshot {i} is missing a 'fields' object")
        for name in fields:
            if not str(name).strip():
                raise TimelineStructureError(f"snapshot {i} has an empty field name")
        snapshots.append(RawSnapshot(timestamp=canonical, fields=dict(fields)))

    seen: dict[str, int] = {}
    for i, snap in enumerate(snapshots):
        if snap.timestamp in seen:
            raise TimelineStructureError(
                f"duplicate timestamp {snap.timestamp!r} (snapshots {seen[snap.timestamp]} and {i})"
            )
        seen[snap.timestamp] = i
    snapshots.sort(key=RawSnapshot.sort_key)
    return Timeline(entity_name=entity.strip(), domain=domain.strip(), snapshots=tuple(snapshots))


def serialize_timeline(timeline: Timeline) -> bytes:
    """Inverse of parse_timeline for already-normalized timelines."""
    doc = {
        "entity": timeline.entity_name,
        "domain": timeline.domain,
        "snapshots": [{"timestamp": s.timestamp, "fields": s.fields} for s in timeline.snapshots],
    }
    return (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")


def normalize_null(raw: str, variants: frozenset[str] = DEFAULT_NULL_VARIANTS) -> CleanValue:
    """Map null spellings to kind=null, everything else to trimmed text."""
    trimmed = raw.strip()
    if trimmed.casefold() in variants:
        return CleanValue(kind="null", value=None, raw=raw)
    return CleanValue(kind="text", value=trimmed, raw=raw)


def safe_int(raw: str) -> CleanValue:
    """Parse a decorated integer; failures become null, never exceptions.

    Strips commas and whitespace, parses as a real number first so "1.0"
    becomes 1, then truncates.
    """
    cleaned = re.sub(r"[,\s]", "", raw)
    try:
        return CleanValue(kind="integer", value=int(float(cleaned)), raw=raw)
    except (ValueError, OverflowError):
        return CleanValue(kind="null", value=None, raw=raw)


def safe_real(raw: str) -> CleanValue:
    """Like safe_int but preserves the fractional part (kind=real)."""
    cleaned = re.sub(r"[,\s]", "", raw)
    try:
        value = float(cleaned)
    except ValueError:
        return CleanValue(kind="null", value=None, raw=raw)
    if value != value or value in (float("inf"), float("-inf")):
        return CleanValue(kind="null", value=None, raw=raw)
    return CleanValue(kind="real", value=value, raw=raw)


def parse_composite(raw: str, separator: str = "/") -> CleanValue:
    """Split a two-part statistic like "2/22" into optional integers.

    Each side passes through normalize_null then safe_int, so "31/&ndash;"
    yields (31, None).
    """
    if not separator:
        raise ValueError("separator must be non-empty")
    count = raw.count(separator)
    if count != 1:
        raise CompositeShapeError(raw, separator, count)
    left, right = raw.split(separator)

    def side(text: str) -> int | None:
        nn = normalize_null(text)
        if nn.is_null:
            return None
        parsed = safe_int(nn.value)
        return parsed.value if parsed.kind == "integer" else None

    return CleanValue(kind="composite-pair", value=(side(left), side(right)), raw=raw)


def match_dynamic_fields(snapshot: RawSnapshot, pattern: str) -> list[tuple[int, object]]:
    """Collect indexed fields like proyears1, proyears2 for pattern "proyears{N}".

    Returns (index, raw value) pairs sorted by index; indices need not be
    contiguous.  The pattern must contain exactly one "{N}" placeholder.
    """
    if pattern.count("{N}") != 1:
        raise FieldPatternError(f"pattern {pattern!r} must contain exactly one {{N}} placeholder")
    prefix, suffix = pattern.split("{N}")
    rx = re.compile(re.escape(prefix) + r"(\d+)" + re.escape(suffix) + r"$")
    matches = []
    for name, value in snapshot.fields.items():
        m = rx.match(str(name))
        if m:
            matches.append((int(m.group(1)), value))
    matches.sort(key=lambda pair: pair[0])
    return matches


_MONTH_FORMATS = ("%d %B %Y", "%d %b %Y", "%B %d, %Y", "%b %d, %Y")


def normalize_date(raw: str, variants: frozenset[str] = DEFAULT_NULL_VARIANTS) -> CleanValue:
    """Canonicalize a date to ISO-8601; unrecognized inputs become null.

    Recognized formats: ISO dates and date-times, "1 June 2019",
    "June 1, 2019", and bare years (anchored to Jan 1, precision="year").
    """
    nn = normalize_null(raw, variants)
    if nn.is_null:
        return CleanValue(kind="null", value=None, raw=raw)
    s = nn.value
    if re.match(r"^\d{4}$", s):
        return CleanValue(kind="date", value=f"{s}-01-01", raw=raw, precision="year")
    if re.match(r"^\d{4}-\d{2}-\d{2}$", s):
        try:
            datetime.strptime(s, "%Y-%m-%d")
        except ValueError:
            return CleanValue(kind="null", value=None, raw=raw)
        return CleanValue(kind="date", value=s, raw=raw, precision="day")
    candidate = s.replace(" ", "T", 1)
    if candidate.endswith("Z"):
        candidate = candidate[:-1] + "+00:00"
    try:
        dt = datetime.fromisoformat(candidate)
        return CleanValue(kind="date", value=dt.date().isoformat(), raw=raw, precision="day")
    except ValueError:
        pass
    for fmt in _MONTH_FORMATS:
        try:
            dt = datetime.strptime(s, fmt)
            return CleanValue(kind="date", value=dt.date().isoformat(), raw=raw, precision="day")
        except ValueError:
            continue
    return CleanValue(kind="null", value=None, raw=raw)


def raw_text(value: object) -> str:
    """Render a raw JSON field value as the text the cleaners operate on."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def flatten_fields(fields: Mapping) -> dict[str, object]:
    """Flatten nested maps (dot-joined keys) and lists (dot-joined indices).

    {"medal": {"year": 2012}} -> {"medal.year": 2012};
    {"teams": ["a", "b"]} -> {"teams.0": "a", "teams.1": "b"}.
    """

    def walk(prefix: str, value: object) -> Iterator[tuple[str, object]]:
        if isinstance(value, Mapping):
            for key, sub in value.items():
                yield from walk(f"{prefix}.{key}" if prefix else str(key), sub)
        elif isinstance(value, (list, tuple)):
            for i, sub in enumerate(value):
                yield from walk(f"{prefix}.{i}" if prefix else str(i), sub)
        else:
            yield prefix, value

    flat: dict[str, object] = {}
    for name, value in fields.items():
        for key, leaf in walk(str(name), value):
            flat[key] = leaf
    return flat
