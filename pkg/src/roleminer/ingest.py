"""Check-in log parsing, root-category mapping, home inference, bucketing.

Input rows are tab-separated with columns
``user_id, venue_id, category_id, category_name, latitude, longitude,
[tz_offset_minutes,] utc_time`` where the time string looks like
``Sat Apr 07 17:42:24 +0000 2012``. When the offset column is present the
stored timestamp is the UTC time shifted by that many minutes, so
``timestamp.hour`` is the local hour; without it the time is taken as
already local.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from typing import IO, Iterable, Iterator, Mapping, Sequence

EARTH_RADIUS_KM = 6371.0

# Modal-cell home inference operates on this grid (degrees).
HOME_GRID_DEG = 0.01
NIGHT_WINDOW = (20, 8)  # local hours [20:00, 08:00)

# Root labels of the category tree, flattened to its 9 top-level entries.
DEFAULT_ROOT_LABELS = (
    "Arts & Entertainment",
    "College & University",
    "Food",
    "Outdoors & Recreation",
    "Professional & Other Places",
    "Residence",
    "Shop & Service",
    "Travel & Transport",
    "Event",
)

_MONTHS = {
    "Jan": 1, "Feb": 2, "Mar": 3, "Apr": 4, "May": 5, "Jun": 6,
    "Jul": 7, "Aug": 8, "Sep": 9, "Oct": 10, "Nov": 11, "Dec": 12,
}
_MONTH_NAMES = {v: k for k, v in _MONTHS.items()}
_WEEKDAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")


class IngestError(ValueError):
    """Malformed input that the caller asked us not to tolerate."""


@dataclass(frozen=True)
class GeoPoint:
    latitude: float
    longitude: float


@dataclass(frozen=True)
class CheckIn:
    """One user event at a POI. ``timestamp`` is local wall-clock time."""

    user_id: str
    poi_id: str
    category_id: str
    category_name: str
    latitude: float
    longitude: float
    timestamp: datetime
    tz_offset_minutes: int = 0

    @property
    def point(self) -> GeoPoint:
        return GeoPoint(self.latitude, self.longitude)

    @property
    def hour(self) -> int:
        return self.timestamp.hour


@dataclass
class ParseStats:
    total_rows: int = 0
    accepted: int = 0
    rejected: int = 0
    user_count: int = 0


@dataclass
class ParseResult:
    checkins: list[CheckIn] = field(default_factory=list)
    stats: ParseStats = field(default_factory=ParseStats)


def _parse_time(value: str) -> datetime:
    # "Sat Apr 07 17:42:24 +0000 2012"; parsed by hand so the weekday and
    # month tokens never depend on the process locale.
    parts = value.split()
    if len(parts) != 6:
        raise ValueError(f"bad time string: {value!r}")
    _weekday, month, day, clock, offset, year = parts
    if month not in _MONTHS:
        raise ValueError(f"bad month in time string: {value!r}")
    hh, mm, ss = (int(p) for p in clock.split(":"))
    ts = datetime(int(year), _MONTHS[month], int(day), hh, mm, ss)
    if offset not in ("+0000", "-0000"):
        sign = -1 if offset.startswith("-") else 1
        ts += sign * timedelta(hours=int(offset[1:3]), minutes=int(offset[3:5]))
    return ts


def _format_time(ts: datetime) -> str:
    weekday = _WEEKDAYS[ts.weekday()]
    month = _MONTH_NAMES[ts.month]
    return f"{weekday} {month} {ts.day:02d} {ts:%H:%M:%S} +0000 {ts.year}"


def _parse_row(line: str) -> CheckIn:
    fields = line.rstrip("\n").rstrip("\r").split("\t")
    if len(fields) == 8:
        user, venue, cat_id, cat_name, lat_s, lon_s, off_s, time_s = fields
        offset = int(off_s)
    elif len(fields) == 7:
        user, venue, cat_id, cat_name, lat_s, lon_s, time_s = fields
        offset = 0
    else:
        raise ValueError(f"expected 7 or 8 columns, got {len(fields)}")
    lat = float(lat_s)
    lon = float(lon_s)
    if not (-90.0 <= lat <= 90.0):
        raise ValueError(f"latitude out of range: {lat}")
    if not (-180.0 <= lon <= 180.0):
        raise ValueError(f"longitude out of range: {lon}")
    ts = _parse_time(time_s) + timedelta(minutes=offset)
    return CheckIn(user, venue, cat_id, cat_name, lat, lon, ts, offset)


def _iter_lines(source: IO | Iterable[str] | str | bytes) -> Iterator[str]:
    if isinstance(source, bytes):
        source = source.decode("utf-8")
    if isinstance(source, str):
        source = source.splitlines()
    for line in source:
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        yield line


def parse_checkins(source, strict: bool = False) -> ParseResult:
    """Parse a TSV check-in stream into ``CheckIn`` records, in input order.

    Malformed rows are skipped and counted unless ``strict`` is set, in which
    case the first bad row raises :class:`IngestError`.
    """
    result = ParseResult()
    for line in _iter_lines(source):
        if not line.strip():
            continue
        result.stats.total_rows += 1
        try:
            checkin = _parse_row(line)
        except (ValueError, IndexError) as exc:
            if strict:
                raise IngestError(
                    f"row {result.stats.total_rows}: {exc}"
                ) from exc
            result.stats.rejected += 1
            continue
        result.checkins.append(checkin)
        result.stats.accepted += 1
    result.stats.user_count = len({c.user_id for c in result.checkins})
    return result


def serialize_checkins_tsv(checkins: Sequence[CheckIn]) -> str:
    """Canonical TSV; ``parse_checkins`` round-trips its output bit-exactly."""
    lines = []
    for c in checkins:
        utc = c.timestamp - timedelta(minutes=c.tz_offset_minutes)
        lines.append(
            "\t".join(
                (
                    c.user_id,
                    c.poi_id,
                    c.category_id,
                    c.category_name,
                    repr(c.latitude),
                    repr(c.longitude),
                    str(c.tz_offset_minutes),
                    _format_time(utc),
                )
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def checkin_to_json(c: CheckIn) -> dict:
    return {
        "user_id": c.user_id,
        "poi_id": c.poi_id,
        "category_id": c.category_id,
        "category_name": c.category_name,
        "latitude": c.latitude,
        "longitude": c.longitude,
        "timestamp": c.timestamp.isoformat(),
        "tz_offset_minutes": c.tz_offset_minutes,
    }


def checkin_from_json(obj: Mapping) -> CheckIn:
    return CheckIn(
        user_id=obj["user_id"],
        poi_id=obj["poi_id"],
        category_id=obj["category_id"],
        category_name=obj["category_name"],
        latitude=float(obj["latitude"]),
        longitude=float(obj["longitude"]),
        timestamp=datetime.fromisoformat(obj["timestamp"]),
        tz_offset_minutes=int(obj["tz_offset_minutes"]),
    )


@dataclass(frozen=True)
class RootCategoryMap:
    """Maps category ids or names onto a fixed set of root labels."""

    entries: Mapping[str, str]
    roots: tuple[str, ...] = DEFAULT_ROOT_LABELS

    def resolve(self, checkin: CheckIn) -> str | None:
        root = self.entries.get(checkin.category_id)
        if root is None:
            root = self.entries.get(checkin.category_name)
        return root


def load_root_category_map(
    source, roots: Sequence[str] = DEFAULT_ROOT_LABELS
) -> RootCategoryMap:
    """Load a ``{category_key: root_label}`` JSON document and validate it."""
    if isinstance(source, bytes):
        raw = json.loads(source.decode("utf-8"))
    elif isinstance(source, str):
        raw = json.loads(source)
    else:
        raw = json.load(source)
    if not isinstance(raw, dict):
        raise IngestError("root map must be a JSON object")
    root_set = set(roots)
    entries: dict[str, str] = {}
    for key, label in raw.items():
        if label not in root_set:
            raise IngestError(f"root map entry {key!r}: {label!r} is not a root label")
        if key in entries:
            raise IngestError(f"duplicate root map key {key!r}")
        entries[key] = label
    return RootCategoryMap(entries=entries, roots=tuple(roots))


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in kilometres (Earth radius 6371.0 km)."""
    lat1, lon1 = math.radians(a.latitude), math.radians(a.longitude)
    lat2, lon2 = math.radians(b.latitude), math.radians(b.longitude)
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def distance_bucket(d: float) -> int:
    """Four home-distance levels: <1 km, [1,10), [10,30), >=30 km."""
    if d < 0:
        raise ValueError(f"negative distance: {d}")
    if d < 1.0:
        return 0
    if d < 10.0:
        return 1
    if d < 30.0:
        return 2
    return 3


def hour_bucket(t: datetime, tz_offset_minutes: int = 0) -> int:
    """Local hour of day after applying the offset."""
    return (t + timedelta(minutes=tz_offset_minutes)).hour


def _in_night_window(hour: int, window: tuple[int, int]) -> bool:
    start, end = window
    if start <= end:
        return start <= hour < end
    return hour >= start or hour < end


def infer_home(
    checkins: Sequence[CheckIn],
    night_window: tuple[int, int] = NIGHT_WINDOW,
    grid_deg: float = HOME_GRID_DEG,
) -> GeoPoint:
    """Home = centroid of the modal grid cell among night-window check-ins.

    Falls back to the modal cell over all check-ins when the night window is
    empty. Cell ties break to the smallest (lat, lon) cell index.
    """
    if not checkins:
        raise ValueError("cannot infer home from zero check-ins")
    users = {c.user_id for c in checkins}
    if len(users) != 1:
        raise ValueError(f"check-ins span multiple users: {sorted(users)}")

    pool = [c for c in checkins if _in_night_window(c.hour, night_window)]
    if not pool:
        pool = list(checkins)

    def cell(c: CheckIn) -> tuple[int, int]:
        return (
            math.floor(c.latitude / grid_deg),
            math.floor(c.longitude / grid_deg),
        )

    counts = Counter(cell(c) for c in pool)
    best = max(counts.items(), key=lambda kv: (kv[1], (-kv[0][0], -kv[0][1])))[0]
    members = [c for c in pool if cell(c) == best]
    lat = sum(c.latitude for c in members) / len(members)
    lon = sum(c.longitude for c in members) / len(members)
    return GeoPoint(lat, lon)


def infer_homes(checkins: Sequence[CheckIn], **kwargs) -> dict[str, GeoPoint]:
    """Per-user home inference over a mixed-user sequence."""
    by_user: dict[str, list[CheckIn]] = {}
    for c in checkins:
        by_user.setdefault(c.user_id, []).append(c)
    return {u: infer_home(cs, **kwargs) for u, cs in sorted(by_user.items())}
