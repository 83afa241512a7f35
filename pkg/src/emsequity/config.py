"""Flat ``section.key = value`` configuration files.

Blank lines and lines starting with ``#`` are ignored.  Relative paths are
resolved against the directory holding the config file.
"""
from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .errors import ConfigurationError
from .gof import parse_grouping
from .geodesy import EARTH_RADIUS_MILES
from .ingest import (DEFAULT_EXCLUDED_ACTIONS, Category, ColumnMapping, FilterRules, IncomeBracket,
                     category_from_name, normalize_action)
from .logit import DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE
from .metrics import Metric

# key (or glob) -> description; printed by ``emsequity keys``
ANALYZE_KEYS: dict[str, str] = {
    "paths.incidents": "incident file (delimited text, optionally gzip)",
    "paths.stations": "fire stations, columns id,name,lat,lon",
    "paths.ers": "emergency rooms, columns id,name,lat,lon",
    "paths.income": "IRS filer counts, columns zip,bracket_index,filer_count",
    "paths.population": "population, columns zip,population",
    "incidents.delimiter": "field delimiter of the incident file (default ','; 'tab' for TSV)",
    "incidents.timestamp_format": "strptime format of timestamps, or 'iso' (default)",
    "incidents.action_separator": "separator between action codes in one cell (default ';')",
    "incidents.col.*": "source column for an incident field: id, alarm_ts, arrival_ts, zip, lat, lon, "
                       "point, category, action_codes, property_loss",
    "filter.excluded_actions": "comma list of action codes; an incident whose actions are all listed is "
                               "removed ('default' = investigate/inform/standby/cancelled en route, "
                               "'none' = off)",
    "filter.excluded_categories": "comma list of categories to drop (default 'False Alarms'; 'none' = off)",
    "filter.year": "comma list of alarm years to keep (default: all)",
    "thresholds.response_seconds": "'derive' (default) or seconds",
    "thresholds.station_miles": "'derive' (default) or miles",
    "thresholds.er_miles": "'derive' (default) or miles",
    "logit.reference": "reference bracket for all models (B1..B6 or 'lowest', default lowest)",
    "logit.reference.*": "reference bracket for one metric: response_time, station_distance, er_distance",
    "logit.tolerance": f"IRLS coefficient-change tolerance (default {DEFAULT_TOLERANCE:g})",
    "logit.max_iterations": f"IRLS iteration cap (default {DEFAULT_MAX_ITERATIONS})",
    "hl.grouping": "covariate_pattern (default) or deciles[:g]",
    "income.tie": "median bracket tie rule: lower (default) or upper",
    "geodesy.earth_radius_miles": f"Earth radius (default {EARTH_RADIUS_MILES:g})",
    "report.formats": "comma list of csv, json, markdown (default csv,json,markdown)",
    "report.bin.response_seconds": "histogram bin width, seconds (default 30)",
    "report.bin.station_miles": "histogram bin width, miles (default 0.1)",
    "report.bin.er_miles": "histogram bin width, miles (default 0.1)",
    "output.dir": "output directory (relative to the config file)",
    "run.metrics": "comma list of metrics to model (default all three)",
}

SYNTH_KEYS: dict[str, str] = {
    "synth.seed": "64-bit seed",
    "synth.preset": "'reference': four brackets B2..B5 with fixed, unequal proportions",
    "synth.n_per_bracket": "incidents per bracket for the preset (default 2500)",
    "synth.bracket.*": "per bracket (B1..B6): n, p_response, p_station, p_er[, false_alarms]",
    "synth.years": "comma list of alarm years, assigned round-robin (default 2018)",
    "synth.stations": "number of fire stations in the generated layout (default 48)",
    "synth.ers": "number of emergency rooms / ZIPs in the generated layout (default 14)",
    "synth.spread_miles": "radius around each ZIP centroid where incidents land (default 1.6)",
    "output.dir": "directory for the generated files",
}

REPRODUCTION_THRESHOLDS = {"response_seconds": 300.0, "station_miles": 0.4, "er_miles": 1.0}
# reference bracket per model for the reproduction preset
REPRODUCTION_REFERENCES = {
    Metric.RESPONSE_TIME: IncomeBracket.B5,
    Metric.STATION_DISTANCE: IncomeBracket.B2,
    Metric.ER_DISTANCE: IncomeBracket.B3,
}


def parse_config(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key or not key:
            raise ConfigurationError(f"config line {lineno}: expected 'section.key = value', got {raw!r}")
        if key in values:
            raise ConfigurationError(f"config line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def unknown_keys(values: Mapping[str, str], known: Mapping[str, str]) -> list[str]:
    return [k for k in values if not any(fnmatch.fnmatchcase(k, pat) for pat in known)]


def load_config(path) -> tuple[dict[str, str], Path]:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigurationError(f"cannot read config {p}: {e.strerror or e}") from None
    return parse_config(text), p.resolve().parent


def _list(value: str | None) -> list[str] | None:
    if value is None:
        return None
    if value.strip().lower() == "none":
        return []
    return [v.strip() for v in value.split(",") if v.strip()]


def _float(values, key, default=None):
    if key not in values:
        return default
    try:
        return float(values[key])
    except ValueError:
        raise ConfigurationError(f"{key}: expected a number, got {values[key]!r}") from None


@dataclass
class RunConfig:
    paths: dict[str, Path]
    mapping: ColumnMapping = field(default_factory=ColumnMapping)
    rules: FilterRules = field(default_factory=FilterRules.default)
    thresholds: dict[str, float | None] = field(
        default_factory=lambda: {"response_seconds": None, "station_miles": None, "er_miles": None})
    references: dict[Metric, IncomeBracket | None] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    grouping: str = "covariate_pattern"
    income_tie: str = "lower"
    earth_radius: float = EARTH_RADIUS_MILES
    formats: tuple[str, ...] = ("csv", "json", "markdown")
    bins: dict[str, float] = field(
        default_factory=lambda: {"response_seconds": 30.0, "station_miles": 0.1, "er_miles": 0.1})
    output_dir: Path | None = None
    metrics: tuple[Metric, ...] = tuple(Metric)
    echo: dict[str, str] = field(default_factory=dict)

    PATH_KEYS = ("incidents", "stations", "ers", "income", "population")

    @classmethod
    def from_values(cls, values: Mapping[str, str], base: Path | None = None) -> RunConfig:
        bad = unknown_keys(values, ANALYZE_KEYS)
        if bad:
            raise ConfigurationError(f"unknown config key(s): {', '.join(sorted(bad))}")
        base = base or Path.cwd()
        paths = {}
        for name in cls.PATH_KEYS:
            key = f"paths.{name}"
            if key not in values:
                raise ConfigurationError(f"missing required key {key}")
            paths[name] = (base / values[key]).resolve() if not Path(values[key]).is_absolute() \
                else Path(values[key])
        cfg = cls(paths=paths, mapping=ColumnMapping.from_config(values), echo=dict(sorted(values.items())))

        actions = values.get("filter.excluded_actions", "default")
        excluded_actions = (DEFAULT_EXCLUDED_ACTIONS if actions.strip() == "default"
                            else frozenset(normalize_action(a) for a in _list(actions)))
        cats = _list(values.get("filter.excluded_categories", Category.FALSE_ALARMS.label))
        years = _list(values.get("filter.year"))
        cfg.rules = FilterRules(
            excluded_actions=excluded_actions,
            excluded_categories=frozenset(category_from_name(c) for c in cats),
            years=None if not years else frozenset(_int(y, "filter.year") for y in years),
        )

        for name in cfg.thresholds:
            raw = values.get(f"thresholds.{name}", "derive")
            cfg.thresholds[name] = None if raw.strip() == "derive" else _float(values, f"thresholds.{name}")

        default_ref = values.get("logit.reference", "lowest")
        for m in Metric:
            raw = values.get(f"logit.reference.{m.value}", default_ref)
            cfg.references[m] = None if raw.strip() == "lowest" else IncomeBracket.parse(raw)
        for key in values:
            if key.startswith("logit.reference."):
                Metric.parse(key[len("logit.reference."):])

        cfg.tolerance = _float(values, "logit.tolerance", DEFAULT_TOLERANCE)
        cfg.max_iterations = _int(values.get("logit.max_iterations", DEFAULT_MAX_ITERATIONS), "logit.max_iterations")
        cfg.grouping = values.get("hl.grouping", "covariate_pattern")
        parse_grouping(cfg.grouping)
        cfg.income_tie = values.get("income.tie", "lower")
        if cfg.income_tie not in ("lower", "upper"):
            raise ConfigurationError(f"income.tie must be lower or upper, got {cfg.income_tie!r}")
        cfg.earth_radius = _float(values, "geodesy.earth_radius_miles", EARTH_RADIUS_MILES)
        formats = tuple(_list(values.get("report.formats", "csv,json,markdown")))
        for f in formats:
            if f not in ("csv", "json", "markdown"):
                raise ConfigurationError(f"report.formats: unknown format {f!r}")
        cfg.formats = formats
        for name in cfg.bins:
            cfg.bins[name] = _float(values, f"report.bin.{name}", cfg.bins[name])
            if cfg.bins[name] <= 0:
                raise ConfigurationError(f"report.bin.{name} must be positive")
        if "output.dir" in values:
            out = Path(values["output.dir"])
            cfg.output_dir = out if out.is_absolute() else (base / out).resolve()
        if "run.metrics" in values:
            cfg.metrics = tuple(Metric.parse(m) for m in _list(values["run.metrics"]))
        return cfg

    def apply_reproduction_preset(self) -> None:
        """Pin thresholds to 300 s / 0.4 mi / 1.0 mi and set per-model reference brackets."""
        self.thresholds.update(REPRODUCTION_THRESHOLDS)
        self.references.update(REPRODUCTION_REFERENCES)


def _int(value, key) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected an integer, got {value!r}") from None
