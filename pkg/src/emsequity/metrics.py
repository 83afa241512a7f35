"""Per-incident response metrics, summary statistics and binary outcomes."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, fields
from datetime import datetime
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigurationError, DomainError
from .geodesy import EARTH_RADIUS_MILES, GeoPoint, great_circle_radians, great_circle_radians_array
from .ingest import Facility, FacilityKind, IncomeBracket, Incident, ZipProfile

CHUNK_ROWS = 32768


class Metric(enum.Enum):
    RESPONSE_TIME = "response_time"
    STATION_DISTANCE = "station_distance"
    ER_DISTANCE = "er_distance"

    @classmethod
    def parse(cls, name) -> Metric:
        if isinstance(name, Metric):
            return name
        try:
            return cls(str(name).strip())
        except ValueError:
            raise ConfigurationError(
                f"unknown metric {name!r}; expected one of {', '.join(m.value for m in cls)}") from None

    @property
    def threshold_field(self) -> str:
        return _THRESHOLD_FIELD[self]


_THRESHOLD_FIELD = {
    Metric.RESPONSE_TIME: "response_seconds",
    Metric.STATION_DISTANCE: "station_miles",
    Metric.ER_DISTANCE: "er_miles",
}


@dataclass(frozen=True, slots=True)
class ResponseRecord:
    incident_id: str
    response_seconds: int | None
    nearest_station_id: str
    station_miles: float
    nearest_er_id: str
    er_miles: float
    zip: str
    bracket: IncomeBracket | None
    year: int

    def value(self, metric: Metric):
        if metric is Metric.RESPONSE_TIME:
            return self.response_seconds
        if metric is Metric.STATION_DISTANCE:
            return self.station_miles
        return self.er_miles


@dataclass(frozen=True)
class SummaryStats:
    n: int
    mean: float
    std_error: float
    min: float
    max: float


@dataclass(frozen=True)
class Thresholds:
    response_seconds: float = 300.0
    station_miles: float = 0.4
    er_miles: float = 1.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise DomainError(f"threshold {f.name} must be strictly positive, got {v!r}")

    def for_metric(self, metric: Metric) -> float:
        return getattr(self, metric.threshold_field)


REFERENCE_THRESHOLDS = Thresholds(300.0, 0.4, 1.0)


def response_time(alarm_ts: datetime, arrival_ts: datetime) -> int:
    """Whole seconds from alarm (first unit dispatched) to first arrival."""
    delta = arrival_ts - alarm_ts
    if delta.total_seconds() < 0:
        raise DomainError(f"arrival {arrival_ts} precedes alarm {alarm_ts}")
    return delta.days * 86400 + delta.seconds


def nearest_facility(call: GeoPoint, facilities: Sequence[Facility],
                     radius: float = EARTH_RADIUS_MILES) -> tuple[str, float]:
    """Closest facility by great-circle distance; ties go to the smallest id."""
    if not facilities:
        raise ConfigurationError("nearest_facility needs at least one facility")
    kinds = {f.kind for f in facilities}
    if len(kinds) > 1:
        raise ConfigurationError("facilities must all be of one kind")
    best_id, best = None, math.inf
    for f in sorted(facilities, key=lambda f: f.id):
        d = great_circle_radians(call, f.location) * radius
        if d < best:
            best_id, best = f.id, d
    return best_id, best


def assign_nearest(lat_deg, lon_deg, facilities: Sequence[Facility],
                   radius: float = EARTH_RADIUS_MILES) -> tuple[list[str], np.ndarray]:
    """Batch version of :func:`nearest_facility` over coordinate arrays.

    Exhaustive scan, chunked so the distance matrix stays small.  Facilities
    are sorted by id first, so ``argmin`` (first minimum) reproduces the
    smallest-id tie rule.
    """
    if not facilities:
        raise ConfigurationError("nearest-facility assignment needs at least one facility")
    ordered = sorted(facilities, key=lambda f: f.id)
    f_lat = np.array([f.location.lat_deg for f in ordered])[None, :]
    f_lon = np.array([f.location.lon_deg for f in ordered])[None, :]
    lat = np.asarray(lat_deg, dtype=float)
    lon = np.asarray(lon_deg, dtype=float)
    n = lat.shape[0]
    best = np.empty(n, dtype=np.intp)
    miles = np.empty(n)
    for start in range(0, n, CHUNK_ROWS):
        stop = min(start + CHUNK_ROWS, n)
        d = great_circle_radians_array(lat[start:stop, None], lon[start:stop, None], f_lat, f_lon)
        idx = d.argmin(axis=1)
        best[start:stop] = idx
        miles[start:stop] = d[np.arange(stop - start), idx] * radius
    ids = [ordered[i].id for i in best]
    return ids, miles


def compute_records(incidents: Sequence[Incident], stations: Sequence[Facility],
                    ers: Sequence[Facility], profiles: Mapping[str, ZipProfile] | None = None,
                    radius: float = EARTH_RADIUS_MILES) -> list[ResponseRecord]:
    """Build one :class:`ResponseRecord` per incident, in input order.

    Incidents with no arrival time get ``response_seconds=None`` and drop
    out of response-time analysis only.
    """
    if any(f.kind is not FacilityKind.FIRE_STATION for f in stations):
        raise ConfigurationError("station list contains a non-station facility")
    if any(f.kind is not FacilityKind.EMERGENCY_ROOM for f in ers):
        raise ConfigurationError("emergency-room list contains a non-ER facility")
    profiles = profiles or {}
    lat = np.fromiter((i.location.lat_deg for i in incidents), float, len(incidents))
    lon = np.fromiter((i.location.lon_deg for i in incidents), float, len(incidents))
    st_ids, st_miles = assign_nearest(lat, lon, stations, radius)
    er_ids, er_miles = assign_nearest(lat, lon, ers, radius)
    st_list, er_list = st_miles.tolist(), er_miles.tolist()
    records = []
    for k, inc in enumerate(incidents):
        prof = profiles.get(inc.zip)
        records.append(ResponseRecord(
            incident_id=inc.id,
            response_seconds=None if inc.arrival_ts is None else response_time(inc.alarm_ts, inc.arrival_ts),
            nearest_station_id=st_ids[k],
            station_miles=st_list[k],
            nearest_er_id=er_ids[k],
            er_miles=er_list[k],
            zip=inc.zip,
            bracket=prof.median_bracket if prof else None,
            year=inc.year,
        ))
    return records


def summarize(values: Iterable[float]) -> SummaryStats:
    """Mean, standard error (sample sd / sqrt(n)) and range."""
    arr = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
    n = arr.size
    if n == 0:
        raise DomainError("summarize needs at least one value")
    lo, hi = float(arr.min()), float(arr.max())
    mean = min(hi, max(lo, math.fsum(arr.tolist()) / n))
    if n == 1:
        se = 0.0
    else:
        dev = arr - mean
        se = math.sqrt(math.fsum((dev * dev).tolist()) / (n - 1)) / math.sqrt(n)
    return SummaryStats(n, mean, se, lo, hi)


def metric_values(records: Iterable[ResponseRecord], metric: Metric) -> list[float]:
    return [v for v in (r.value(metric) for r in records) if v is not None]


def derive_thresholds(time_stats: SummaryStats, station_stats: SummaryStats, er_stats: SummaryStats,
                      overrides: Mapping[str, float] | None = None) -> Thresholds:
    """Round the metric means: time to the nearest whole minute, distances
    to the nearest 0.1 mile.  ``overrides`` replaces individual fields."""
    values = {
        "response_seconds": 60.0 * math.floor(time_stats.mean / 60.0 + 0.5),
        "station_miles": math.floor(station_stats.mean * 10.0 + 0.5) / 10.0,
        "er_miles": math.floor(er_stats.mean * 10.0 + 0.5) / 10.0,
    }
    for key, value in (overrides or {}).items():
        if key not in values:
            raise ConfigurationError(f"unknown threshold {key!r}")
        values[key] = float(value)
    return Thresholds(**values)


def binarize(records: Iterable[ResponseRecord], thresholds: Thresholds,
             metric) -> list[tuple[IncomeBracket, int]]:
    """``(bracket, 1)`` when the metric is at or under its threshold, else 0.

    Records without a bracket are skipped, as are records lacking a response
    time when binarizing response time.
    """
    metric = Metric.parse(metric)
    limit = thresholds.for_metric(metric)
    out = []
    for r in records:
        if r.bracket is None:
            continue
        v = r.value(metric)
        if v is None:
            continue
        out.append((r.bracket, 1 if v <= limit else 0))
    return out


RECORD_COLUMNS = tuple(f.name for f in fields(ResponseRecord))


def write_records_csv(records: Iterable[ResponseRecord], fh) -> None:
    """Audit export; floats are written with ``repr`` so they round-trip."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(RECORD_COLUMNS)
    for r in records:
        w.writerow([
            r.incident_id,
            "" if r.response_seconds is None else r.response_seconds,
            r.nearest_station_id, repr(r.station_miles),
            r.nearest_er_id, repr(r.er_miles),
            r.zip, "" if r.bracket is None else r.bracket.name, r.year,
        ])


def read_records_csv(fh) -> list[ResponseRecord]:
    reader = csv.DictReader(fh)
    out = []
    for row in reader:
        out.append(ResponseRecord(
            incident_id=row["incident_id"],
            response_seconds=int(row["response_seconds"]) if row["response_seconds"] else None,
            nearest_station_id=row["nearest_station_id"],
            station_miles=float(row["station_miles"]),
            nearest_er_id=row["nearest_er_id"],
            er_miles=float(row["er_miles"]),
            zip=row["zip"],
            bracket=IncomeBracket.parse(row["bracket"]) if row["bracket"] else None,
            year=int(row["year"]),
        ))
    return out
