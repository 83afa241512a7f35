"""Readers for incidents, facilities, IRS income brackets and population.

Incident rows are parsed in a single streaming pass.  Rows that cannot be
turned into a valid :class:`Incident` are quarantined with a reason and
counted; they never abort the run.  Facility, income and population files
are small and authoritative, so any problem in them is fatal.

Every reader accepts a path, raw ``bytes`` or a binary stream, plain or
gzip-compressed (detected from the magic bytes).
"""
from __future__ import annotations

import csv
import enum
import gzip
import io
import math
import os
import re
from collections import Counter
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Iterator, Mapping

from .errors import ConfigurationError, DomainError, InputValidationError
from .geodesy import GeoPoint

GZIP_MAGIC = b"\x1f\x8b"
MAX_QUARANTINE_SAMPLES = 20


class IncomeBracket(enum.IntEnum):
    """The six IRS adjusted-gross-income brackets, ordered low to high."""

    B1 = 1
    B2 = 2
    B3 = 3
    B4 = 4
    B5 = 5
    B6 = 6

    @property
    def label(self) -> str:
        return _BRACKET_LABELS[self]

    @property
    def short_label(self) -> str:
        return _BRACKET_SHORT[self]

    @classmethod
    def parse(cls, text) -> IncomeBracket:
        """Accept ``3``, ``"3"``, ``"B3"`` or a bracket's label."""
        if isinstance(text, IncomeBracket):
            return text
        s = str(text).strip()
        if s.upper().startswith("B") and s[1:].isdigit():
            s = s[1:]
        if s.isdigit() and 1 <= int(s) <= 6:
            return cls(int(s))
        for b in cls:
            if s in (b.label, b.short_label):
                return b
        raise ConfigurationError(f"unknown income bracket {text!r}")


_BRACKET_LABELS = {
    IncomeBracket.B1: "under $25,000",
    IncomeBracket.B2: "$25,000 - $50,000",
    IncomeBracket.B3: "$50,000 - $75,000",
    IncomeBracket.B4: "$75,000 - $100,000",
    IncomeBracket.B5: "$100,000 - $200,000",
    IncomeBracket.B6: "$200,000 or more",
}
_BRACKET_SHORT = {
    IncomeBracket.B1: "<$25k",
    IncomeBracket.B2: "$25-50k",
    IncomeBracket.B3: "$50-75k",
    IncomeBracket.B4: "$75-100k",
    IncomeBracket.B5: "$100-200k",
    IncomeBracket.B6: "$200k+",
}


class Category(enum.Enum):
    """Incident categories, one per NFIRS incident-type series (1xx..9xx)."""

    FIRE = ("Fire", "fire", 1)
    RUPTURE = ("Rupture", "rupture", 2)
    RESCUE_EMS = ("Rescue/EMS", "rescue_ems", 3)
    HAZARDOUS_CONDITION = ("Hazardous Condition", "hazardous_condition", 4)
    SERVICE_CALLS = ("Service Calls", "service_call", 5)
    GOOD_INTENT = ("Good Intent Calls", "good_intent", 6)
    FALSE_ALARMS = ("False Alarms", "false_alarm", 7)
    SEVERE_WEATHER = ("Severe Weather/Natural Disaster", "severe_weather", 8)
    SPECIAL_INCIDENT = ("Special Incident", "special_incident", 9)

    def __init__(self, label, key, series):
        self.label = label
        self.key = key
        self.series = series


def _norm(text: str) -> str:
    return " ".join(text.split()).casefold()


_CATEGORY_ALIASES: dict[str, Category] = {}
for _c in Category:
    _CATEGORY_ALIASES[_norm(_c.label)] = _c
    _CATEGORY_ALIASES[_c.key] = _c
    _CATEGORY_ALIASES[_c.name.casefold()] = _c
_CATEGORY_ALIASES.update({
    "false alarm": Category.FALSE_ALARMS,
    "false alarms & false calls": Category.FALSE_ALARMS,
    "ems": Category.RESCUE_EMS,
    "rescue & emergency medical service incident": Category.RESCUE_EMS,
    "rescue & ems": Category.RESCUE_EMS,
    "overpressure rupture": Category.RUPTURE,
    "overpressure rupture, explosion, overheat (no fire)": Category.RUPTURE,
    "service call": Category.SERVICE_CALLS,
    "good intent call": Category.GOOD_INTENT,
    "hazardous condition (no fire)": Category.HAZARDOUS_CONDITION,
    "severe weather & natural disaster": Category.SEVERE_WEATHER,
    "special incident type": Category.SPECIAL_INCIDENT,
})
_NFIRS_CODE = re.compile(r"^(\d)\d\d(?:\D|$)")


def parse_category(text: str) -> Category | None:
    """Match a category name (case/whitespace-insensitive) or an NFIRS code.

    ``"311 - Medical assist"`` maps to Rescue/EMS through its leading digit.
    Returns ``None`` for anything unrecognised.
    """
    s = _norm(text)
    if s in _CATEGORY_ALIASES:
        return _CATEGORY_ALIASES[s]
    m = _NFIRS_CODE.match(s)
    if m and m.group(1) != "0":
        return next(c for c in Category if c.series == int(m.group(1)))
    return None


def category_from_name(name: str) -> Category:
    cat = parse_category(name)
    if cat is None:
        raise ConfigurationError(f"unknown category {name!r}")
    return cat


class FacilityKind(enum.Enum):
    FIRE_STATION = "fire_station"
    EMERGENCY_ROOM = "emergency_room"


@dataclass(frozen=True, slots=True)
class Incident:
    id: str
    alarm_ts: datetime
    arrival_ts: datetime | None
    zip: str
    location: GeoPoint
    category: Category
    action_codes: tuple[str, ...] = ()
    property_loss: float = 0.0

    @property
    def year(self) -> int:
        return self.alarm_ts.year


@dataclass(frozen=True, slots=True)
class Facility:
    id: str
    kind: FacilityKind
    location: GeoPoint
    name: str = ""


@dataclass(frozen=True)
class ZipProfile:
    zip: str
    filer_counts: Mapping[IncomeBracket, int]
    median_bracket: IncomeBracket | None
    population: int


@dataclass
class FilterReport:
    """Accounting for one parse or filter stage.

    ``input_count == retained_count + sum(removed_by_rule) + quarantined``
    holds for every report this module produces.
    """

    input_count: int = 0
    retained_count: int = 0
    removed_by_rule: dict[str, int] = field(default_factory=dict)
    quarantined: int = 0
    quarantine_reasons: dict[str, int] = field(default_factory=dict)
    quarantine_samples: list[tuple[int, str]] = field(default_factory=list)

    @property
    def removed_count(self) -> int:
        return sum(self.removed_by_rule.values())

    @property
    def conserved(self) -> bool:
        return self.input_count == self.retained_count + self.removed_count + self.quarantined

    def quarantine(self, row: int, reason: str) -> None:
        self.quarantined += 1
        self.quarantine_reasons[reason] = self.quarantine_reasons.get(reason, 0) + 1
        if len(self.quarantine_samples) < MAX_QUARANTINE_SAMPLES:
            self.quarantine_samples.append((row, reason))

    def to_dict(self) -> dict:
        return {
            "input_count": self.input_count,
            "retained_count": self.retained_count,
            "removed_by_rule": dict(sorted(self.removed_by_rule.items())),
            "quarantined": self.quarantined,
            "quarantine_reasons": dict(sorted(self.quarantine_reasons.items())),
            "quarantine_samples": [list(s) for s in self.quarantine_samples],
        }


# ---------------------------------------------------------------------------
# sources


@contextmanager
def open_text(source) -> Iterator[io.TextIOBase]:
    """Yield a UTF-8 text stream over a path, bytes or binary stream."""
    owned = None
    if isinstance(source, (str, os.PathLike)):
        raw = owned = open(source, "rb")
    elif isinstance(source, (bytes, bytearray)):
        raw = io.BytesIO(bytes(source))
    elif isinstance(source, io.TextIOBase):
        yield source
        return
    else:
        raw = source
    try:
        if not hasattr(raw, "peek"):
            raw = io.BufferedReader(raw)
        if raw.peek(2)[:2] == GZIP_MAGIC:
            raw = gzip.GzipFile(fileobj=raw, mode="rb")
        text = io.TextIOWrapper(raw, encoding="utf-8-sig", newline="")
        try:
            yield text
        finally:
            text.detach()
    finally:
        if owned is not None:
            owned.close()


def _header_index(header: list[str], wanted: Iterable[str], what: str) -> dict[str, int]:
    cleaned = [h.strip() for h in header]
    missing = [w for w in wanted if w not in cleaned]
    if missing:
        raise ConfigurationError(f"{what}: missing column(s) {', '.join(missing)} in header {cleaned}")
    return {w: cleaned.index(w) for w in wanted}


# ---------------------------------------------------------------------------
# incidents

INCIDENT_FIELDS = ("id", "alarm_ts", "arrival_ts", "zip", "lat", "lon",
                   "category", "action_codes", "property_loss")
OPTIONAL_INCIDENT_FIELDS = ("arrival_ts", "action_codes", "property_loss", "point")
ISO_FORMAT = "iso"


@dataclass(frozen=True)
class ColumnMapping:
    """Which source column feeds each :class:`Incident` field.

    ``columns`` maps field name to header name; optional fields may be
    mapped to ``None``.  A ``point`` column (``POINT (lon lat)``) may stand
    in for separate lat/lon columns.
    """

    columns: Mapping[str, str | None] = field(default_factory=lambda: {f: f for f in INCIDENT_FIELDS})
    delimiter: str = ","
    timestamp_format: str = ISO_FORMAT
    action_separator: str = ";"

    @classmethod
    def from_config(cls, cfg: Mapping[str, str]) -> ColumnMapping:
        columns: dict[str, str | None] = {f: f for f in INCIDENT_FIELDS}
        for key, value in cfg.items():
            if not key.startswith("incidents.col."):
                continue
            name = key[len("incidents.col."):]
            if name not in INCIDENT_FIELDS and name != "point":
                raise ConfigurationError(f"unknown incident field {name!r} in {key}")
            columns[name] = value or None
        if columns.get("point"):
            columns["lat"] = columns["lon"] = None
        delimiter = cfg.get("incidents.delimiter", ",")
        if delimiter in ("\\t", "tab"):
            delimiter = "\t"
        return cls(
            columns=columns,
            delimiter=delimiter,
            timestamp_format=cfg.get("incidents.timestamp_format", ISO_FORMAT),
            action_separator=cfg.get("incidents.action_separator", ";"),
        )

    def required_columns(self) -> list[str]:
        return [c for f, c in self.columns.items() if c is not None]

    def validate(self) -> None:
        for f in INCIDENT_FIELDS:
            if f in ("lat", "lon") and self.columns.get("point"):
                continue
            if self.columns.get(f) is None and f not in OPTIONAL_INCIDENT_FIELDS:
                raise ConfigurationError(f"incident field {f!r} has no source column")


_ZIP_RE = re.compile(r"^(\d{5})(?:-\d{4}|\.0+)?$")
_POINT_RE = re.compile(r"^\s*POINT\s*\(\s*(\S+)\s+(\S+)\s*\)\s*$", re.IGNORECASE)


class _Quarantine(Exception):
    pass


def _timestamp_parser(fmt: str):
    if fmt == ISO_FORMAT:
        return datetime.fromisoformat
    return lambda s: datetime.strptime(s, fmt)


def iter_incidents(source, mapping: ColumnMapping | None = None,
                   report: FilterReport | None = None) -> Iterator[Incident]:
    """Stream :class:`Incident` objects from a delimited file.

    Counts go into ``report``; rows that fail validation are quarantined
    there and skipped.  Duplicate ids after the first are quarantined too.
    """
    mapping = mapping or ColumnMapping()
    mapping.validate()
    report = report if report is not None else FilterReport()
    parse_ts = _timestamp_parser(mapping.timestamp_format)
    cols = mapping.columns
    sep = mapping.action_separator
    seen: set[str] = set()

    with open_text(source) as fh:
        reader = csv.reader(fh, delimiter=mapping.delimiter)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError("incident file is empty (no header row)")
        idx = _header_index(header, mapping.required_columns(), "incident file")
        get = {f: idx.get(c) for f, c in cols.items() if c is not None}

        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            report.input_count += 1
            try:
                incident = _parse_row(row, get, parse_ts, sep)
            except _Quarantine as q:
                report.quarantine(rowno, str(q))
                continue
            if incident.id in seen:
                report.quarantine(rowno, "duplicate id")
                continue
            seen.add(incident.id)
            report.retained_count += 1
            yield incident


def _cell(row, get, name) -> str:
    i = get.get(name)
    if i is None or i >= len(row):
        return ""
    return row[i].strip()


def _parse_row(row, get, parse_ts, sep) -> Incident:
    ident = _cell(row, get, "id")
    if not ident:
        raise _Quarantine("missing id")
    try:
        alarm = parse_ts(_cell(row, get, "alarm_ts"))
        arrival_text = _cell(row, get, "arrival_ts")
        arrival = parse_ts(arrival_text) if arrival_text else None
    except ValueError:
        raise _Quarantine("unparseable timestamp") from None
    if arrival is not None and arrival < alarm:
        raise _Quarantine("arrival precedes alarm")

    m = _ZIP_RE.match(_cell(row, get, "zip"))
    if not m:
        raise _Quarantine("invalid zip")

    if "point" in get:
        pm = _POINT_RE.match(_cell(row, get, "point"))
        if not pm:
            raise _Quarantine("missing coordinates")
        lon_text, lat_text = pm.groups()
    else:
        lat_text, lon_text = _cell(row, get, "lat"), _cell(row, get, "lon")
    if not lat_text or not lon_text:
        raise _Quarantine("missing coordinates")
    try:
        lat, lon = float(lat_text), float(lon_text)
    except ValueError:
        raise _Quarantine("missing coordinates") from None
    if not (math.isfinite(lat) and math.isfinite(lon) and -90 <= lat <= 90 and -180 <= lon <= 180):
        raise _Quarantine("out-of-range coordinates")

    category = parse_category(_cell(row, get, "category"))
    if category is None:
        raise _Quarantine("unknown category")

    actions_text = _cell(row, get, "action_codes")
    actions = tuple(a.strip() for a in actions_text.split(sep) if a.strip()) if actions_text else ()

    loss_text = _cell(row, get, "property_loss")
    try:
        loss = float(loss_text) if loss_text else 0.0
    except ValueError:
        raise _Quarantine("invalid property loss") from None
    if not math.isfinite(loss) or loss < 0:
        raise _Quarantine("invalid property loss")

    return Incident(ident, alarm, arrival, m.group(1), GeoPoint(lat, lon), category, actions, loss)


def parse_incidents(source, mapping: ColumnMapping | None = None) -> tuple[list[Incident], FilterReport]:
    report = FilterReport()
    incidents = list(iter_incidents(source, mapping, report))
    return incidents, report


# ---------------------------------------------------------------------------
# filtering

_ACTION_CODE = re.compile(r"^\s*(\d+)\b")
DEFAULT_EXCLUDED_ACTIONS = frozenset({
    # NFIRS action-taken codes, plus plain-text spellings
    "83", "86", "92", "93",
    "investigate", "inform", "provide information to public or media",
    "standby", "cancelled en route", "canceled en route", "canceled enroute",
})


def normalize_action(code: str) -> str:
    """``"86 - Investigate"`` -> ``"86"``; text codes are casefolded."""
    m = _ACTION_CODE.match(code)
    return m.group(1) if m else _norm(code)


@dataclass(frozen=True)
class FilterRules:
    """Active incident filters; every rule is optional.

    An incident is removed by ``excluded_actions`` only when it has at least
    one action and *all* of its actions are excluded ("only investigated").
    """

    excluded_actions: frozenset[str] = frozenset()
    excluded_categories: frozenset[Category] = frozenset()
    allowed_categories: frozenset[Category] | None = None
    years: frozenset[int] | None = None

    @classmethod
    def default(cls) -> FilterRules:
        return cls(excluded_actions=DEFAULT_EXCLUDED_ACTIONS,
                   excluded_categories=frozenset({Category.FALSE_ALARMS}))

    @classmethod
    def from_names(cls, excluded_actions=None, excluded_categories=(), allowed_categories=None,
                   years=None) -> FilterRules:
        return cls(
            excluded_actions=frozenset(normalize_action(a) for a in (excluded_actions or ())),
            excluded_categories=frozenset(category_from_name(c) for c in excluded_categories),
            allowed_categories=(None if allowed_categories is None
                                else frozenset(category_from_name(c) for c in allowed_categories)),
            years=None if years is None else frozenset(int(y) for y in years),
        )

    def with_ems_only(self) -> FilterRules:
        return FilterRules(self.excluded_actions, self.excluded_categories,
                           frozenset({Category.RESCUE_EMS}), self.years)

    def with_years(self, years) -> FilterRules:
        return FilterRules(self.excluded_actions, self.excluded_categories,
                           self.allowed_categories, None if years is None else frozenset(years))

    def rejection(self, incident: Incident) -> str | None:
        """Name of the first rule the incident fails, or ``None``."""
        if incident.category in self.excluded_categories:
            return incident.category.key
        if self.excluded_actions and incident.action_codes and all(
                normalize_action(a) in self.excluded_actions for a in incident.action_codes):
            return "excluded_action"
        if self.allowed_categories is not None and incident.category not in self.allowed_categories:
            return "category_not_allowed"
        if self.years is not None and incident.year not in self.years:
            return "year"
        return None


def filter_incidents(incidents: Iterable[Incident], rules: FilterRules) -> tuple[list[Incident], FilterReport]:
    report = FilterReport()
    removed: Counter[str] = Counter()
    kept = []
    for inc in incidents:
        report.input_count += 1
        reason = rules.rejection(inc)
        if reason is None:
            kept.append(inc)
        else:
            removed[reason] += 1
    report.retained_count = len(kept)
    report.removed_by_rule = dict(sorted(removed.items()))
    return kept, report


# ---------------------------------------------------------------------------
# facilities, income, population


def load_facilities(source, kind: FacilityKind) -> list[Facility]:
    """Read ``id,name,lat,lon`` rows.  Any bad row or duplicate id is fatal."""
    out: list[Facility] = []
    seen: set[str] = set()
    with open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError("facility file is empty (no header row)")
        idx = _header_index(header, ("id", "name", "lat", "lon"), "facility file")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            fid = row[idx["id"]].strip()
            if not fid:
                raise InputValidationError(f"facility row {rowno}: empty id", field="id")
            if fid in seen:
                raise InputValidationError(f"duplicate facility id {fid!r} (row {rowno})", field="id")
            seen.add(fid)
            coords = {}
            for name in ("lat", "lon"):
                try:
                    coords[name] = float(row[idx[name]])
                except (ValueError, IndexError):
                    raise InputValidationError(
                        f"facility row {rowno}: field {name!r} is not a number", field=name) from None
            try:
                point = GeoPoint(coords["lat"], coords["lon"])
            except InputValidationError as e:
                col = "lat" if e.field == "lat_deg" else "lon"
                raise InputValidationError(f"facility row {rowno}: field {col!r}: {e}", field=col) from None
            out.append(Facility(fid, kind, point, row[idx["name"]].strip()))
    return out


def _read_int(value: str, rowno: int, name: str, what: str) -> int:
    try:
        n = int(float(value))
    except ValueError:
        raise InputValidationError(f"{what} row {rowno}: field {name!r} is not a number", field=name) from None
    if n < 0:
        raise InputValidationError(f"{what} row {rowno}: field {name!r} is negative", field=name)
    return n


def _read_zip(value: str, rowno: int, what: str) -> str:
    m = _ZIP_RE.match(value.strip())
    if not m:
        raise InputValidationError(f"{what} row {rowno}: invalid zip {value!r}", field="zip")
    return m.group(1)


def load_income(source) -> dict[str, dict[IncomeBracket, int]]:
    """Long-format ``zip,bracket_index,filer_count`` rows summed per ZIP."""
    counts: dict[str, dict[IncomeBracket, int]] = {}
    with open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError("income file is empty (no header row)")
        idx = _header_index(header, ("zip", "bracket_index", "filer_count"), "income file")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            z = _read_zip(row[idx["zip"]], rowno, "income")
            b = _read_int(row[idx["bracket_index"]], rowno, "bracket_index", "income")
            if not 1 <= b <= 6:
                raise InputValidationError(f"income row {rowno}: bracket_index {b} outside 1..6",
                                           field="bracket_index")
            n = _read_int(row[idx["filer_count"]], rowno, "filer_count", "income")
            per_zip = counts.setdefault(z, {br: 0 for br in IncomeBracket})
            per_zip[IncomeBracket(b)] += n
    return counts


def load_population(source) -> dict[str, int]:
    pop: dict[str, int] = {}
    with open_text(source) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError("population file is empty (no header row)")
        idx = _header_index(header, ("zip", "population"), "population file")
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            z = _read_zip(row[idx["zip"]], rowno, "population")
            if z in pop:
                raise InputValidationError(f"duplicate zip {z} in population file (row {rowno})", field="zip")
            pop[z] = _read_int(row[idx["population"]], rowno, "population", "population")
    return pop


def assign_bracket(filer_counts: Mapping[IncomeBracket, int], tie: str = "lower") -> IncomeBracket:
    """Bracket containing the median filer.

    With ``tie="lower"`` this is the lowest bracket whose cumulative count
    reaches ``ceil(total / 2)``; ``tie="upper"`` requires the cumulative
    count to exceed ``total / 2``, so an exact half split goes up instead.
    """
    if tie not in ("lower", "upper"):
        raise ConfigurationError(f"tie must be 'lower' or 'upper', got {tie!r}")
    total = sum(filer_counts.get(b, 0) for b in IncomeBracket)
    if total <= 0:
        raise DomainError("median bracket undefined: all filer counts are zero")
    half = -(-total // 2)
    cumulative = 0
    for b in IncomeBracket:
        cumulative += filer_counts.get(b, 0)
        if (cumulative >= half) if tie == "lower" else (2 * cumulative > total):
            return b
    raise AssertionError("unreachable")


def build_zip_profiles(income: Mapping[str, Mapping[IncomeBracket, int]],
                       population: Mapping[str, int], tie: str = "lower") -> dict[str, ZipProfile]:
    """One profile per ZIP seen in either file, ordered by ZIP.

    ZIPs without income data (or with only zero counts) get
    ``median_bracket=None``; ZIPs without population get 0.
    """
    profiles = {}
    for z in sorted(set(income) | set(population)):
        counts = {b: int(income.get(z, {}).get(b, 0)) for b in IncomeBracket}
        median = assign_bracket(counts, tie) if sum(counts.values()) > 0 else None
        profiles[z] = ZipProfile(z, counts, median, int(population.get(z, 0)))
    return profiles
