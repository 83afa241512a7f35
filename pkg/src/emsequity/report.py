"""Output tables, table exports and SVG histograms.

Internal values keep full precision.  CSV and JSON exports write floats
with ``repr`` so they parse back to identical rows; Markdown is the display
format and rounds (probabilities and miles to 3 decimals, durations as
whole seconds and ``HH:MM:SS``).
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

from .errors import ConfigurationError
from .ingest import Category, IncomeBracket, Incident, ZipProfile, category_from_name
from .logit import LogitModel, predict_prob
from .metrics import Metric, ResponseRecord, SummaryStats


@dataclass(frozen=True)
class CategoryRow:
    category: Category
    count: int
    percentage: float


@dataclass(frozen=True)
class BracketRow:
    bracket: IncomeBracket
    n_zips: int
    incidents: int
    probabilities: Mapping[str, float]
    population: int


@dataclass(frozen=True)
class ZipRow:
    zip: str
    avg_response: float | None
    avg_station_miles: float
    avg_er_miles: float
    bracket: IncomeBracket | None
    incidents: int
    population: int
    total_property_loss: float
    per_capita_loss: float | None


@dataclass(frozen=True)
class SummaryRow:
    metric: str
    n: int
    mean: float
    std_error: float
    min: float
    max: float

    @classmethod
    def from_stats(cls, metric, stats: SummaryStats) -> SummaryRow:
        name = metric.value if isinstance(metric, Metric) else str(metric)
        return cls(name, stats.n, stats.mean, stats.std_error, stats.min, stats.max)


def category_table(incidents: Iterable[Incident]) -> list[CategoryRow]:
    """Call counts per category, most frequent first."""
    counts = Counter(i.category for i in incidents)
    total = sum(counts.values())
    order = {c: k for k, c in enumerate(Category)}
    return [CategoryRow(c, n, 100.0 * n / total)
            for c, n in sorted(counts.items(), key=lambda kv: (-kv[1], order[kv[0]]))]


def bracket_table(models: Mapping[Metric, LogitModel], records: Sequence[ResponseRecord],
                  profiles: Mapping[str, ZipProfile] | None = None) -> list[BracketRow]:
    """One row per bracket present in ``records``, probabilities from each model."""
    profiles = profiles or {}
    zips: dict[IncomeBracket, set[str]] = defaultdict(set)
    counts: Counter[IncomeBracket] = Counter()
    for r in records:
        if r.bracket is not None:
            zips[r.bracket].add(r.zip)
            counts[r.bracket] += 1
    rows = []
    for b in sorted(counts):
        probs = {}
        for metric, model in models.items():
            if model.encoding is not None and b in model.encoding.brackets_present:
                probs[Metric.parse(metric).value] = predict_prob(model, b)
        pop = sum(profiles[z].population for z in zips[b] if z in profiles)
        rows.append(BracketRow(b, len(zips[b]), counts[b], probs, pop))
    return rows


def per_capita(total_loss: float, population: int) -> float | None:
    return total_loss / population if population > 0 else None


def zip_table(records: Sequence[ResponseRecord], profiles: Mapping[str, ZipProfile],
              incidents: Iterable[Incident] = ()) -> tuple[list[ZipRow], list[str]]:
    """Per-ZIP averages and property losses.

    Returns the rows (ordered by bracket, unbracketed last, then ZIP) and a
    list of notes about ZIPs that were left out or lack population.
    """
    loss: dict[str, list[float]] = defaultdict(list)
    for inc in incidents:
        loss[inc.zip].append(inc.property_loss)
    by_zip: dict[str, list[ResponseRecord]] = defaultdict(list)
    for r in records:
        by_zip[r.zip].append(r)

    notes = [f"zip {z}: no incidents, excluded" for z in sorted(profiles) if z not in by_zip]
    rows = []
    for z, recs in by_zip.items():
        prof = profiles.get(z)
        secs = [r.response_seconds for r in recs if r.response_seconds is not None]
        pop = prof.population if prof else 0
        total = math.fsum(loss.get(z, ()))
        if pop <= 0:
            notes.append(f"zip {z}: no population, per-capita loss undefined")
        rows.append(ZipRow(
            zip=z,
            avg_response=math.fsum(secs) / len(secs) if secs else None,
            avg_station_miles=math.fsum(r.station_miles for r in recs) / len(recs),
            avg_er_miles=math.fsum(r.er_miles for r in recs) / len(recs),
            bracket=prof.median_bracket if prof else None,
            incidents=len(recs),
            population=pop,
            total_property_loss=total,
            per_capita_loss=per_capita(total, pop),
        ))
    rows.sort(key=lambda r: (r.bracket is None, r.bracket or 0, r.zip))
    return rows, notes


def format_hms(seconds: float | None) -> str:
    if seconds is None:
        return ""
    s = int(math.floor(seconds + 0.5))
    return f"{s // 3600:02d}:{s % 3600 // 60:02d}:{s % 60:02d}"


# ---------------------------------------------------------------------------
# exports


@dataclass(frozen=True)
class Column:
    name: str
    get: Callable[[Any], Any]
    kind: str  # str | int | float | prob | miles | seconds | pct | money
    derived: bool = False


@dataclass(frozen=True)
class Schema:
    name: str
    row_type: type
    columns: tuple[Column, ...]
    build: Callable[[dict], Any] = field(repr=False)


def _bracket_or_none(text):
    return IncomeBracket.parse(text) if text not in (None, "") else None


def _probs(row: BracketRow, metric: Metric):
    return row.probabilities.get(metric.value)


SCHEMAS: dict[str, Schema] = {}


def _register(schema: Schema) -> None:
    SCHEMAS[schema.name] = schema


_register(Schema("category", CategoryRow, (
    Column("category", lambda r: r.category.label, "str"),
    Column("count", lambda r: r.count, "int"),
    Column("percentage", lambda r: r.percentage, "pct"),
), lambda d: CategoryRow(category_from_name(d["category"]), d["count"], d["percentage"])))


_register(Schema("bracket", BracketRow, (
    Column("bracket", lambda r: r.bracket.name, "str"),
    Column("median_income", lambda r: r.bracket.label, "str", derived=True),
    Column("n_zips", lambda r: r.n_zips, "int"),
    Column("incidents", lambda r: r.incidents, "int"),
    *(Column(f"prob_{m.value}", (lambda m: lambda r: _probs(r, m))(m), "prob") for m in Metric),
    Column("population", lambda r: r.population, "int"),
), lambda d: BracketRow(IncomeBracket.parse(d["bracket"]), d["n_zips"], d["incidents"],
                        {m.value: d[f"prob_{m.value}"] for m in Metric if d[f"prob_{m.value}"] is not None},
                        d["population"])))

_register(Schema("zip", ZipRow, (
    Column("zip", lambda r: r.zip, "str"),
    Column("avg_response_hms", lambda r: format_hms(r.avg_response), "str", derived=True),
    Column("avg_response_seconds", lambda r: r.avg_response, "seconds"),
    Column("avg_station_miles", lambda r: r.avg_station_miles, "miles"),
    Column("avg_er_miles", lambda r: r.avg_er_miles, "miles"),
    Column("bracket", lambda r: "" if r.bracket is None else r.bracket.name, "str"),
    Column("incidents", lambda r: r.incidents, "int"),
    Column("population", lambda r: r.population, "int"),
    Column("total_property_loss", lambda r: r.total_property_loss, "money"),
    Column("per_capita_loss", lambda r: r.per_capita_loss, "money"),
), lambda d: ZipRow(d["zip"], d["avg_response_seconds"], d["avg_station_miles"], d["avg_er_miles"],
                    _bracket_or_none(d["bracket"]), d["incidents"], d["population"],
                    d["total_property_loss"], d["per_capita_loss"])))

_register(Schema("summary", SummaryRow, (
    Column("metric", lambda r: r.metric, "str"),
    Column("n", lambda r: r.n, "int"),
    Column("mean", lambda r: r.mean, "float"),
    Column("std_error", lambda r: r.std_error, "float"),
    Column("min", lambda r: r.min, "float"),
    Column("max", lambda r: r.max, "float"),
), lambda d: SummaryRow(d["metric"], d["n"], d["mean"], d["std_error"], d["min"], d["max"])))


def _schema_for(rows, schema) -> Schema:
    if schema is not None:
        if isinstance(schema, Schema):
            return schema
        if schema not in SCHEMAS:
            raise ConfigurationError(f"unknown table schema {schema!r}")
        return SCHEMAS[schema]
    if not rows:
        raise ConfigurationError("cannot infer the schema of an empty table; pass schema=")
    for s in SCHEMAS.values():
        if isinstance(rows[0], s.row_type):
            return s
    raise ConfigurationError(f"no schema for rows of type {type(rows[0]).__name__}")


def _full(value, kind):
    if value is None:
        return ""
    if kind == "int":
        return str(int(value))
    if kind == "str":
        return str(value)
    return repr(float(value))


def _display(value, kind):
    if value is None or value == "":
        return ""
    if kind in ("prob", "miles"):
        return f"{value:.3f}"
    if kind == "seconds":
        return f"{value:.0f}"
    if kind in ("pct",):
        return f"{value:.2f}%"
    if kind == "money":
        return f"{value:.3f}"
    if kind == "float":
        return f"{value:.4g}"
    return str(value)


def export_tables(rows: Sequence, fmt: str, schema=None) -> str:
    """Render rows as ``csv``, ``json`` or ``markdown``."""
    sch = _schema_for(rows, schema)
    cols = sch.columns
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow([c.name for c in cols])
        for r in rows:
            w.writerow([_full(c.get(r), c.kind) for c in cols])
        return buf.getvalue()
    if fmt == "json":
        doc = {
            "schema": sch.name,
            "columns": [c.name for c in cols],
            "rows": [{c.name: c.get(r) for c in cols} for r in rows],
        }
        return json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if fmt == "markdown":
        lines = ["| " + " | ".join(c.name for c in cols) + " |",
                 "|" + "|".join("---" if c.kind == "str" else "---:" for c in cols) + "|"]
        for r in rows:
            lines.append("| " + " | ".join(_display(c.get(r), c.kind) for c in cols) + " |")
        return "\n".join(lines) + "\n"
    raise ConfigurationError(f"unknown export format {fmt!r}; expected csv, json or markdown")


def _parse_cell(text: str, kind: str):
    if kind == "str":
        return text
    if text == "":
        return None
    return int(text) if kind == "int" else float(text)


def parse_table_csv(text: str, schema) -> list:
    """Inverse of ``export_tables(rows, "csv")``."""
    sch = _schema_for([], schema)
    reader = csv.DictReader(io.StringIO(text))
    rows = []
    for rec in reader:
        values = {c.name: _parse_cell(rec[c.name], c.kind) for c in sch.columns if not c.derived}
        rows.append(sch.build(values))
    return rows


def parse_table_json(text: str) -> list:
    doc = json.loads(text)
    sch = _schema_for([], doc["schema"])
    return [sch.build({c.name: rec[c.name] for c in sch.columns if not c.derived}) for rec in doc["rows"]]


# ---------------------------------------------------------------------------
# histograms


def histogram(values: Sequence[float], bin_width: float) -> tuple[float, list[int]]:
    """Counts in bins ``[k*w, (k+1)*w)`` from the lowest to the highest occupied bin.

    Returns the left edge of the first bin and the list of counts.
    """
    if not bin_width > 0:
        raise ConfigurationError(f"bin width must be positive, got {bin_width}")
    if not values:
        raise ConfigurationError("histogram needs at least one value")
    idx = [math.floor(v / bin_width) for v in values]
    lo, hi = min(idx), max(idx)
    counts = [0] * (hi - lo + 1)
    for k in idx:
        counts[k - lo] += 1
    return lo * bin_width, counts


def local_maxima(counts: Sequence[float], window: int = 1) -> list[int]:
    """Indices whose count is the strict maximum of their ``±window`` neighbourhood."""
    peaks = []
    for i, c in enumerate(counts):
        lo, hi = max(0, i - window), min(len(counts), i + window + 1)
        nbrs = [counts[j] for j in range(lo, hi) if j != i]
        if c > 0 and all(c > n for n in nbrs):
            peaks.append(i)
    return peaks


def _esc(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
            .replace('"', "&quot;"))


def _nice_step(span: float, target: int = 5) -> float:
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 2.5, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def _tick_label(v: float) -> str:
    return f"{v:.6g}"


def histogram_svg(values: Sequence[float], bin_width: float, x_label: str, y_label: str = "Count",
                  title: str = "", width: int = 640, height: int = 400) -> str:
    """Standalone SVG bar histogram with linear axes.  Same input, same bytes."""
    start, counts = histogram(values, bin_width)
    left, right, top, bottom = 70, 20, 40 if title else 20, 60
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = start, start + bin_width * len(counts)
    ymax = max(counts)
    ystep = _nice_step(ymax) if ymax > 1 else 1
    ytop = max(ystep * math.ceil(ymax / ystep), 1)

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - y / ytop * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{width / 2:.2f}" y="24" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="15">{_esc(title)}</text>')
    for k, c in enumerate(counts):
        if c == 0:
            continue
        xa, xb = sx(start + k * bin_width), sx(start + (k + 1) * bin_width)
        out.append(f'<rect x="{xa:.2f}" y="{sy(c):.2f}" width="{xb - xa:.2f}" height="{sy(0) - sy(c):.2f}" '
                   f'fill="#4c72b0" stroke="#2a4d80" stroke-width="0.5"/>')
    out.append(f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>')
    out.append(f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>')

    xstep = _nice_step(x1 - x0)
    t = math.ceil(x0 / xstep) * xstep
    while t <= x1 + 1e-9 * xstep:
        x = sx(t)
        out.append(f'<line x1="{x:.2f}" y1="{top + ph}" x2="{x:.2f}" y2="{top + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{top + ph + 18}" text-anchor="middle" font-family="sans-serif" '
                   f'font-size="11">{_tick_label(round(t, 10))}</text>')
        t += xstep
    y = 0.0
    while y <= ytop + 1e-9:
        py = sy(y)
        out.append(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end" font-family="sans-serif" '
                   f'font-size="11">{_tick_label(y)}</text>')
        y += ystep
    out.append(f'<text x="{left + pw / 2:.2f}" y="{height - 15}" text-anchor="middle" '
               f'font-family="sans-serif" font-size="13">{_esc(x_label)}</text>')
    out.append(f'<text x="16" y="{top + ph / 2:.2f}" text-anchor="middle" font-family="sans-serif" '
               f'font-size="13" transform="rotate(-90 16 {top + ph / 2:.2f})">{_esc(y_label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
