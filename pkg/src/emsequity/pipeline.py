"""End-to-end analysis: ingest, metrics, thresholds, models, tables, figures."""
from __future__ import annotations

import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

from .config import RunConfig
from .errors import ConfigurationError, EquityError
from .gof import HLResult, hosmer_lemeshow
from .ingest import (Category, FacilityKind, FilterReport, FilterRules, build_zip_profiles, filter_incidents,
                     load_facilities, load_income, load_population, parse_incidents)
from .logit import LogitModel, build_design, Encoding, fit
from .metrics import (Metric, SummaryStats, Thresholds, binarize, compute_records, derive_thresholds,
                      metric_values, summarize, write_records_csv)
from .report import (SummaryRow, bracket_table, category_table, export_tables, histogram_svg, zip_table)

log = logging.getLogger(__name__)

_EXT = {"csv": "csv", "json": "json", "markdown": "md"}
_AXIS = {
    Metric.RESPONSE_TIME: ("Response time (seconds)", "response_seconds"),
    Metric.STATION_DISTANCE: ("Distance to nearest fire station (miles)", "station_miles"),
    Metric.ER_DISTANCE: ("Distance to nearest emergency room (miles)", "er_miles"),
}


@dataclass
class ModelResult:
    metric: Metric
    threshold: float
    model: LogitModel
    hl: HLResult
    n_unbracketed: int

    def to_dict(self) -> dict:
        return {
            "schema": "logit_model",
            "metric": self.metric.value,
            "threshold": self.threshold,
            "excluded_unbracketed": self.n_unbracketed,
            "model": self.model.to_dict(),
            "hosmer_lemeshow": self.hl.to_dict(),
        }


@dataclass
class AnalysisResult:
    parse_report: FilterReport
    filter_report: FilterReport
    ems_report: FilterReport
    stats: dict[Metric, SummaryStats]
    thresholds: Thresholds
    models: dict[Metric, ModelResult]
    tables: dict[str, tuple[str, list]]
    figures: dict[str, str]
    records_csv: str
    notes: list[str] = field(default_factory=list)


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _fit_metric(metric, records, thresholds, cfg: RunConfig) -> ModelResult:
    outcomes = binarize(records, thresholds, metric)
    unbracketed = sum(1 for r in records if r.bracket is None and r.value(metric) is not None)
    if not outcomes:
        raise EquityError(f"{metric.value}: no bracketed observations to model")
    present = sorted({b for b, _ in outcomes})
    ref = cfg.references.get(metric)
    if ref is not None and ref not in present:
        log.warning("%s: reference %s absent from data, using %s", metric.value, ref.name, present[0].name)
        ref = None
    encoding = Encoding(tuple(present), ref if ref is not None else present[0])
    X, y = build_design(outcomes, encoding)
    model = fit(X, y, cfg.tolerance, cfg.max_iterations, encoding=encoding)
    hl = hosmer_lemeshow(model, outcomes, cfg.grouping)
    return ModelResult(metric, thresholds.for_metric(metric), model, hl, unbracketed)


def run_analysis(cfg: RunConfig) -> AnalysisResult:
    """Run every stage in memory; nothing is written."""
    for name, p in cfg.paths.items():
        if not p.is_file():
            raise ConfigurationError(f"{name} file not found: {p}")

    incidents, parse_report = parse_incidents(cfg.paths["incidents"], cfg.mapping)
    categories = category_table(incidents)
    kept, filter_report = filter_incidents(incidents, cfg.rules)
    ems, ems_report = filter_incidents(kept, FilterRules(allowed_categories=frozenset({Category.RESCUE_EMS})))
    del incidents

    stations = load_facilities(cfg.paths["stations"], FacilityKind.FIRE_STATION)
    ers = load_facilities(cfg.paths["ers"], FacilityKind.EMERGENCY_ROOM)
    if not stations or not ers:
        raise ConfigurationError("need at least one fire station and one emergency room")
    profiles = build_zip_profiles(load_income(cfg.paths["income"]), load_population(cfg.paths["population"]),
                                  cfg.income_tie)

    records = compute_records(kept, stations, ers, profiles, cfg.earth_radius)
    ems_ids = {i.id for i in ems}
    ems_records = [r for r in records if r.incident_id in ems_ids]
    if not records:
        raise EquityError("no incidents left after filtering")

    sources = {Metric.RESPONSE_TIME: records, Metric.STATION_DISTANCE: records, Metric.ER_DISTANCE: ems_records}
    stats = {}
    for m, recs in sources.items():
        vals = metric_values(recs, m)
        if vals:
            stats[m] = summarize(vals)
    missing = [m.threshold_field for m in Metric
               if m not in stats and cfg.thresholds[m.threshold_field] is None]
    if missing:
        raise EquityError(f"cannot derive threshold(s) {', '.join(missing)}: no data")
    explicit = {k: v for k, v in cfg.thresholds.items() if v is not None}
    # an explicit threshold needs no data; stand in a stats object for it
    basis = [stats.get(m) or SummaryStats(1, explicit[m.threshold_field], 0.0, explicit[m.threshold_field],
                                          explicit[m.threshold_field]) for m in Metric]
    thresholds = derive_thresholds(*basis, overrides=explicit)

    models = {m: _fit_metric(m, sources[m], thresholds, cfg) for m in cfg.metrics}

    fire_models = {m: r.model for m, r in models.items() if m is not Metric.ER_DISTANCE}
    er_models = {m: r.model for m, r in models.items() if m is Metric.ER_DISTANCE}
    zrows, notes = zip_table(records, profiles, kept)
    tables = {
        "categories": ("category", categories),
        "summary": ("summary", [SummaryRow.from_stats(m, s) for m, s in stats.items()]),
        "brackets_fire": ("bracket", bracket_table(fire_models, records, profiles)),
        "brackets_er": ("bracket", bracket_table(er_models, ems_records, profiles)),
        "zips": ("zip", zrows),
    }
    figures = {}
    for m, recs in sources.items():
        vals = metric_values(recs, m)
        if vals:
            label, key = _AXIS[m]
            figures[f"hist_{m.value}"] = histogram_svg(vals, cfg.bins[key], label, "Incidents")

    buf = io.StringIO()
    write_records_csv(records, buf)
    return AnalysisResult(parse_report, filter_report, ems_report, stats, thresholds, models, tables,
                          figures, buf.getvalue(), notes)


def build_manifest(cfg: RunConfig, result: AnalysisResult, files: list[str]) -> dict:
    pr, fr = result.parse_report, result.filter_report
    return {
        "schema": "run_manifest",
        "inputs": {name: {"path": str(p), "sha256": file_digest(p)} for name, p in sorted(cfg.paths.items())},
        "config": cfg.echo,
        "stages": {
            "parse": pr.to_dict(),
            "filter": fr.to_dict(),
            "ems_subset": result.ems_report.to_dict(),
            "models": {m.value: {"observations": r.model.n_observations,
                                 "excluded_unbracketed": r.n_unbracketed}
                       for m, r in result.models.items()},
        },
        "conservation": {
            "parse": pr.conserved,
            "filter": fr.conserved and fr.input_count == pr.retained_count,
        },
        "thresholds": {"response_seconds": result.thresholds.response_seconds,
                       "station_miles": result.thresholds.station_miles,
                       "er_miles": result.thresholds.er_miles},
        "notes": result.notes,
        "files": sorted(files),
    }


def write_outputs(cfg: RunConfig, result: AnalysisResult, out_dir) -> list[Path]:
    """Write every artifact under ``out_dir``; on failure remove what was written."""
    out = Path(out_dir)
    written: list[Path] = []

    def put(rel: str, text: str) -> None:
        p = out / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_bytes(text.encode("utf-8"))
        written.append(p)

    try:
        for name, (schema, rows) in result.tables.items():
            for fmt in cfg.formats:
                put(f"tables/{name}.{_EXT[fmt]}", export_tables(rows, fmt, schema))
        for m, r in result.models.items():
            put(f"models/{m.value}.json", json.dumps(r.to_dict(), indent=2) + "\n")
        for name, svg in result.figures.items():
            put(f"figures/{name}.svg", svg)
        put("records.csv", result.records_csv)
        rel = [str(p.relative_to(out)) for p in written]
        put("manifest.json", json.dumps(build_manifest(cfg, result, rel + ["manifest.json"]), indent=2) + "\n")
    except BaseException:
        for p in written:
            p.unlink(missing_ok=True)
        raise
    return written
