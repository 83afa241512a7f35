"""Deterministic synthetic datasets in the formats :mod:`emsequity.ingest` reads.

Success or failure on each metric is not sampled: for every bracket exactly
``round(n * p)`` incidents are placed inside the threshold and the rest
outside, so group proportions are exact whenever ``n * p`` is an integer.
Randomness only decides *which* incidents succeed and where inside the
admissible region a point lands.

Random stream
-------------
All draws come from :class:`XorShift64Star`, specified here so any
implementation can reproduce the byte stream:

* seeding: ``state = splitmix64(seed mod 2**64)``; a zero state is replaced
  by ``0x9E3779B97F4A7C15``.
* step: ``x ^= x >> 12; x ^= (x << 25) mod 2**64; x ^= x >> 27``;
  output ``(x * 0x2545F4914F6CDD1D) mod 2**64``.
* ``uniform()`` = ``(next >> 11) * 2**-53``;
  ``randint(lo, hi)`` = ``lo + next mod (hi - lo + 1)`` after rejecting draws
  at or above the largest multiple of the range below ``2**64``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigurationError
from .geodesy import EARTH_RADIUS_MILES, GeoPoint
from .ingest import Category, Facility, FacilityKind, IncomeBracket, Incident, ZipProfile
from .metrics import REFERENCE_THRESHOLDS, Thresholds, assign_nearest

MASK64 = (1 << 64) - 1
MILES_PER_DEGREE = EARTH_RADIUS_MILES * math.pi / 180.0
COORD_DECIMALS = 6
BATCH = 512
MAX_BATCHES = 4000

INCIDENT_HEADER = ("id", "alarm_ts", "arrival_ts", "zip", "lat", "lon",
                   "category", "action_codes", "property_loss")


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


class XorShift64Star:
    """Marsaglia xorshift with Vigna's multiplicative output scrambler."""

    def __init__(self, seed: int):
        self.state = splitmix64(seed & MASK64) or 0x9E3779B97F4A7C15

    def next(self) -> int:
        x = self.state
        x ^= x >> 12
        x ^= (x << 25) & MASK64
        x ^= x >> 27
        self.state = x
        return (x * 0x2545F4914F6CDD1D) & MASK64

    def uniform(self) -> float:
        return (self.next() >> 11) * (1.0 / 9007199254740992.0)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in ``[lo, hi]`` (both inclusive)."""
        span = hi - lo + 1
        if span <= 0:
            raise ValueError(f"empty range [{lo}, {hi}]")
        limit = (1 << 64) - (1 << 64) % span
        while True:
            r = self.next()
            if r < limit:
                return lo + r % span

    def shuffle(self, items: list) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]


@dataclass(frozen=True)
class BracketSpec:
    bracket: IncomeBracket
    n_incidents: int
    p_response: float
    p_station: float
    p_er: float
    false_alarms: int = 0

    def successes(self) -> tuple[int, int, int]:
        return tuple(int(round(self.n_incidents * p)) for p in (self.p_response, self.p_station, self.p_er))


@dataclass(frozen=True)
class ZipSpec:
    centroid: GeoPoint
    bracket: IncomeBracket
    population: int | None = None


@dataclass
class SynthConfig:
    seed: int
    per_bracket: Sequence[BracketSpec]
    facilities: Sequence[Facility]
    zips: Mapping[str, ZipSpec]
    thresholds: Thresholds = REFERENCE_THRESHOLDS
    years: Sequence[int] = (2018,)
    spread_miles: float = 1.6
    # keep placements this fraction away from a distance threshold
    margin: float = 0.02

    def validate(self) -> None:
        for spec in self.per_bracket:
            if spec.n_incidents < 0 or spec.false_alarms < 0:
                raise ConfigurationError(f"{spec.bracket.name}: negative incident count")
            for p in (spec.p_response, spec.p_station, spec.p_er):
                if not 0.0 <= p <= 1.0:
                    raise ConfigurationError(f"{spec.bracket.name}: proportion {p} outside [0, 1]")
        brackets = [s.bracket for s in self.per_bracket]
        if len(set(brackets)) != len(brackets):
            raise ConfigurationError("each bracket may appear only once")
        if not self.years:
            raise ConfigurationError("at least one year is required")
        if self.spread_miles <= 0:
            raise ConfigurationError("spread_miles must be positive")
        for z in self.zips:
            if len(z) != 5 or not z.isdigit():
                raise ConfigurationError(f"invalid zip {z!r}")


@dataclass
class SynthDataset:
    incidents: list[Incident]
    facilities: list[Facility]
    profiles: dict[str, ZipProfile]
    filer_counts: dict[str, dict[IncomeBracket, int]] = field(repr=False, default_factory=dict)

    @property
    def stations(self) -> list[Facility]:
        return [f for f in self.facilities if f.kind is FacilityKind.FIRE_STATION]

    @property
    def ers(self) -> list[Facility]:
        return [f for f in self.facilities if f.kind is FacilityKind.EMERGENCY_ROOM]


def _offset(center: GeoPoint, north_miles: float, east_miles: float) -> GeoPoint:
    lat = center.lat_deg + north_miles / MILES_PER_DEGREE
    lon = center.lon_deg + east_miles / (MILES_PER_DEGREE * math.cos(math.radians(center.lat_deg)))
    return GeoPoint(round(lat, COORD_DECIMALS), round(lon, COORD_DECIMALS))


def default_layout(n_stations: int = 48, n_ers: int = 14,
                   brackets: Sequence[IncomeBracket] = (IncomeBracket.B2, IncomeBracket.B3,
                                                        IncomeBracket.B4, IncomeBracket.B5),
                   origin: GeoPoint = GeoPoint(37.70, -122.52), spacing_miles: float = 4.0,
                   ) -> tuple[list[Facility], dict[str, ZipSpec]]:
    """One ZIP per emergency room, the ER at the ZIP centroid.

    Stations are spread round-robin over the ZIPs and sit 0.8 mi from the
    centroid at evenly spaced bearings, which leaves room for all four
    combinations of near/far station and near/far ER inside a 1.6 mi disc.
    """
    if n_ers < 1 or n_stations < n_ers:
        raise ConfigurationError("need at least one ER and at least as many stations as ERs")
    cols = math.ceil(math.sqrt(n_ers * 2))
    centroids = [_offset(origin, spacing_miles * (k // cols), spacing_miles * (k % cols)) for k in range(n_ers)]
    zips = {f"{94100 + k:05d}": ZipSpec(c, brackets[k % len(brackets)]) for k, c in enumerate(centroids)}
    facilities = [Facility(f"ER{k + 1:02d}", FacilityKind.EMERGENCY_ROOM, c, f"Emergency room {k + 1}")
                  for k, c in enumerate(centroids)]
    per_zip = [n_stations // n_ers + (1 if k < n_stations % n_ers else 0) for k in range(n_ers)]
    s = 0
    for k, c in enumerate(centroids):
        for j in range(per_zip[k]):
            theta = 2.0 * math.pi * (j + 0.125) / per_zip[k]
            s += 1
            facilities.append(Facility(f"ST{s:02d}", FacilityKind.FIRE_STATION,
                                       _offset(c, 0.8 * math.cos(theta), 0.8 * math.sin(theta)),
                                       f"Station {s}"))
    return facilities, zips


def reference_config(seed: int = 2018, n_per_bracket: int = 2500, **layout) -> SynthConfig:
    """Four brackets (B2..B5) with realistic, unequal success proportions,
    chosen so that ``n_per_bracket * p`` is integral for n = 2500."""
    props = {
        IncomeBracket.B2: (0.494, 0.444, 0.098),
        IncomeBracket.B3: (0.558, 0.534, 0.714),
        IncomeBracket.B4: (0.624, 0.722, 0.928),
        IncomeBracket.B5: (0.554, 0.618, 0.780),
    }
    facilities, zips = default_layout(**layout)
    return SynthConfig(
        seed=seed,
        per_bracket=[BracketSpec(b, n_per_bracket, *p) for b, p in props.items()],
        facilities=facilities,
        zips=zips,
    )


class _Placer:
    """Finds points around a ZIP centroid with prescribed near/far status."""

    def __init__(self, config: SynthConfig, rng: XorShift64Star):
        self.rng = rng
        self.cfg = config
        self.stations = [f for f in config.facilities if f.kind is FacilityKind.FIRE_STATION]
        self.ers = [f for f in config.facilities if f.kind is FacilityKind.EMERGENCY_ROOM]

    def _classify(self, miles: np.ndarray, limit: float) -> np.ndarray:
        # 1 inside, 0 outside, -1 too close to the boundary
        m = self.cfg.margin
        return np.where(miles <= limit * (1 - m), 1, np.where(miles >= limit * (1 + m), 0, -1))

    def place(self, zip_code: str, needed: dict[tuple[int, int], int]) -> dict[tuple[int, int], list[GeoPoint]]:
        center = self.cfg.zips[zip_code].centroid
        th = self.cfg.thresholds
        out: dict[tuple[int, int], list[GeoPoint]] = {k: [] for k in needed}
        remaining = {k: v for k, v in needed.items() if v > 0}
        cos_lat = math.cos(math.radians(center.lat_deg))
        for _ in range(MAX_BATCHES):
            if not remaining:
                return out
            lat = np.empty(BATCH)
            lon = np.empty(BATCH)
            for i in range(BATCH):
                r = self.cfg.spread_miles * math.sqrt(self.rng.uniform())
                theta = 2.0 * math.pi * self.rng.uniform()
                lat[i] = round(center.lat_deg + r * math.cos(theta) / MILES_PER_DEGREE, COORD_DECIMALS)
                lon[i] = round(center.lon_deg + r * math.sin(theta) / (MILES_PER_DEGREE * cos_lat),
                               COORD_DECIMALS)
            _, st = assign_nearest(lat, lon, self.stations)
            _, er = assign_nearest(lat, lon, self.ers)
            st_ok = self._classify(st, th.station_miles)
            er_ok = self._classify(er, th.er_miles)
            for i in range(BATCH):
                key = (int(st_ok[i]), int(er_ok[i]))
                if key in remaining:
                    out[key].append(GeoPoint(float(lat[i]), float(lon[i])))
                    remaining[key] -= 1
                    if remaining[key] == 0:
                        del remaining[key]
        raise ConfigurationError(
            f"zip {zip_code}: could not place points with (station, ER) status {sorted(remaining)}; "
            "the facility layout leaves no such region within spread_miles")


def _check_layout(config: SynthConfig) -> None:
    stations = [f for f in config.facilities if f.kind is FacilityKind.FIRE_STATION]
    ers = [f for f in config.facilities if f.kind is FacilityKind.EMERGENCY_ROOM]
    if not stations or not ers:
        raise ConfigurationError("layout needs at least one fire station and one emergency room")
    reach = config.spread_miles
    for z, spec in config.zips.items():
        _, st = assign_nearest([spec.centroid.lat_deg], [spec.centroid.lon_deg], stations)
        _, er = assign_nearest([spec.centroid.lat_deg], [spec.centroid.lon_deg], ers)
        if st[0] > reach + config.thresholds.station_miles or er[0] > reach + config.thresholds.er_miles:
            raise ConfigurationError(f"zip {z} has no facilities within reach of its incidents")


def _filer_counts(rng: XorShift64Star, bracket: IncomeBracket) -> dict[IncomeBracket, int]:
    main = rng.randint(1000, 1999)
    counts = {b: rng.randint(0, main // 10) for b in IncomeBracket}
    # more than half of all filers sit in ``bracket``
    counts[bracket] = main
    return counts


def generate(config: SynthConfig) -> SynthDataset:
    config.validate()
    rng = XorShift64Star(config.seed)
    active = [s for s in config.per_bracket if s.n_incidents or s.false_alarms]
    zips_by_bracket = {b: sorted(z for z, zs in config.zips.items() if zs.bracket == b) for b in IncomeBracket}
    for spec in active:
        if not zips_by_bracket[spec.bracket]:
            raise ConfigurationError(f"bracket {spec.bracket.name} has incidents but no zip in the layout")
    if active:
        _check_layout(config)

    filer_counts = {}
    profiles = {}
    for z in sorted(config.zips):
        zs = config.zips[z]
        counts = _filer_counts(rng, zs.bracket)
        filer_counts[z] = counts
        pop = zs.population if zs.population is not None else rng.randint(1000, 80000)
        profiles[z] = ZipProfile(z, counts, zs.bracket, pop)

    placer = _Placer(config, rng)
    th = config.thresholds
    t_limit = int(math.floor(th.response_seconds))
    incidents: list[Incident] = []
    seq = 0
    for spec in active:
        n = spec.n_incidents
        flags = []
        for k in spec.successes():
            order = list(range(n))
            rng.shuffle(order)
            f = [0] * n
            for i in order[:k]:
                f[i] = 1
            flags.append(f)
        zlist = zips_by_bracket[spec.bracket]
        assigned = [zlist[i % len(zlist)] for i in range(n)]

        points: dict[str, dict] = {}
        for z in zlist:
            needed: dict[tuple[int, int], int] = {}
            for i in range(n):
                if assigned[i] == z:
                    key = (flags[1][i], flags[2][i])
                    needed[key] = needed.get(key, 0) + 1
            points[z] = {k: iter(v) for k, v in placer.place(z, needed).items()}

        for i in range(n):
            seq += 1
            loc = next(points[assigned[i]][(flags[1][i], flags[2][i])])
            secs = rng.randint(30, t_limit) if flags[0][i] else rng.randint(t_limit + 1, 3 * t_limit)
            incidents.append(_incident(rng, seq, config.years[i % len(config.years)], secs, assigned[i], loc,
                                       Category.RESCUE_EMS, ("32 - Provide basic life support (BLS)",)))
        for i in range(spec.false_alarms):
            seq += 1
            z = zlist[i % len(zlist)]
            loc = placer.place(z, {(1, 1): 1})[(1, 1)][0]
            incidents.append(_incident(rng, seq, config.years[i % len(config.years)], rng.randint(30, 3 * t_limit),
                                       z, loc, Category.FALSE_ALARMS, ("86 - Investigate",)))

    return SynthDataset(incidents, list(config.facilities), profiles, filer_counts)


def _incident(rng, seq, year, secs, zip_code, loc, category, actions) -> Incident:
    alarm = datetime(year, 1, 1) + timedelta(seconds=rng.randint(0, 364 * 86400 - 1))
    loss = float(rng.randint(100, 500_000)) if rng.uniform() < 0.3 else 0.0
    return Incident(f"S{seq:07d}", alarm, alarm + timedelta(seconds=secs), zip_code, loc,
                    category, actions, loss)


# ---------------------------------------------------------------------------
# serialisation


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else repr(float(x))


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def incidents_csv(incidents: Sequence[Incident]) -> str:
    return _csv(
        ((i.id, i.alarm_ts.isoformat(), "" if i.arrival_ts is None else i.arrival_ts.isoformat(), i.zip,
          repr(i.location.lat_deg), repr(i.location.lon_deg), i.category.label, ";".join(i.action_codes),
          _num(i.property_loss)) for i in incidents),
        INCIDENT_HEADER)


def facilities_csv(facilities: Sequence[Facility]) -> str:
    return _csv(((f.id, f.name, repr(f.location.lat_deg), repr(f.location.lon_deg)) for f in facilities),
                ("id", "name", "lat", "lon"))


def income_csv(filer_counts: Mapping[str, Mapping[IncomeBracket, int]]) -> str:
    return _csv(((z, int(b), filer_counts[z][b]) for z in sorted(filer_counts) for b in IncomeBracket),
                ("zip", "bracket_index", "filer_count"))


def population_csv(profiles: Mapping[str, ZipProfile]) -> str:
    return _csv(((z, profiles[z].population) for z in sorted(profiles)), ("zip", "population"))


DATASET_FILES = ("incidents.csv", "stations.csv", "ers.csv", "income.csv", "population.csv")


def render_dataset(ds: SynthDataset) -> dict[str, str]:
    """File name -> file contents, in the formats ingest reads."""
    return {
        "incidents.csv": incidents_csv(ds.incidents),
        "stations.csv": facilities_csv(ds.stations),
        "ers.csv": facilities_csv(ds.ers),
        "income.csv": income_csv(ds.filer_counts),
        "population.csv": population_csv(ds.profiles),
    }


def write_dataset(ds: SynthDataset, out_dir) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for name, text in render_dataset(ds).items():
        p = out / name
        p.write_bytes(text.encode("utf-8"))
        paths[name] = p
    return paths
