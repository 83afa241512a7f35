import json
import math
import re
from datetime import datetime

import pytest
from hypothesis import given, strategies as st

from emsequity.errors import ConfigurationError
from emsequity.geodesy import GeoPoint
from emsequity.ingest import Category, IncomeBracket as B, Incident, ZipProfile
from emsequity.logit import fit_outcomes
from emsequity.metrics import Metric, ResponseRecord, summarize
from emsequity.report import (BracketRow, SummaryRow, ZipRow, bracket_table, category_table, export_tables,
                              format_hms, histogram, histogram_svg, local_maxima, parse_table_csv,
                              parse_table_json, per_capita, zip_table)


def inc(ident, cat, zip_code="94110", loss=0.0):
    t = datetime(2018, 1, 1)
    return Incident(ident, t, t, zip_code, GeoPoint(37.7, -122.4), cat, (), loss)


def rec(ident, bracket, zip_code="94110", secs=300, st_mi=0.3, er_mi=1.2):
    return ResponseRecord(ident, secs, "S1", st_mi, "E1", er_mi, zip_code, bracket, 2018)


def profile(z, bracket, pop):
    return ZipProfile(z, {bracket: 1} if bracket else {}, bracket, pop)


def test_category_single():
    (row,) = category_table([inc("a", Category.FIRE)])
    assert row.percentage == 100.0


def test_category_three_to_one():
    rows = category_table([inc(str(k), Category.RESCUE_EMS) for k in range(3)] + [inc("f", Category.FIRE)])
    assert [(r.category, r.percentage) for r in rows] == [(Category.RESCUE_EMS, 75.0), (Category.FIRE, 25.0)]


@given(st.lists(st.sampled_from(list(Category)), min_size=1, max_size=200))
def test_category_percentages_sum(cats):
    rows = category_table([inc(str(k), c) for k, c in enumerate(cats)])
    assert abs(sum(round(r.percentage, 2) for r in rows) - 100.0) <= 0.05
    assert [r.count for r in rows] == sorted((r.count for r in rows), reverse=True)


def test_bracket_table_probabilities_are_proportions():
    records, outcomes = [], []
    for b, k in zip((B.B2, B.B3, B.B4, B.B5), (494, 559, 624, 553)):
        for i in range(1000):
            records.append(rec(f"{b.name}{i}", b, zip_code=f"9410{int(b)}"))
            outcomes.append((b, 1 if i < k else 0))
    model = fit_outcomes(outcomes)
    rows = bracket_table({Metric.RESPONSE_TIME: model}, records)
    assert [r.bracket for r in rows] == [B.B2, B.B3, B.B4, B.B5]
    for r, p in zip(rows, (0.494, 0.559, 0.624, 0.553)):
        assert abs(r.probabilities["response_time"] - p) <= 1e-6
    assert sum(r.incidents for r in rows) == len(records)


def test_bracket_table_single_bracket_and_unbracketed():
    records = [rec("a", B.B3), rec("b", B.B3), rec("c", None)]
    model = fit_outcomes([(B.B3, 1), (B.B3, 0)])
    (row,) = bracket_table({Metric.STATION_DISTANCE: model}, records, {"94110": profile("94110", B.B3, 10)})
    assert row.incidents == 2
    assert row.probabilities == {"station_distance": pytest.approx(0.5, abs=1e-12)}
    assert row.population == 10


@pytest.mark.parametrize("loss, pop, want", [(51_467_239, 35_550, 1447.742), (33_639_417, 77_090, 436.366)])
def test_per_capita_reference_rows(loss, pop, want):
    assert abs(per_capita(loss, pop) - want) <= 1e-3


def test_zip_table_losses_and_notes():
    profiles = {"94124": profile("94124", B.B2, 35_550), "94112": profile("94112", B.B3, 77_090),
                "94999": profile("94999", B.B4, 10), "94000": profile("94000", None, 0)}
    incidents = [inc("a", Category.FIRE, "94124", 51_000_000), inc("b", Category.FIRE, "94124", 467_239),
                 inc("c", Category.FIRE, "94112", 33_639_417), inc("d", Category.FIRE, "94000", 5)]
    records = [rec("a", B.B2, "94124", 200), rec("b", B.B2, "94124", 400, er_mi=2.0),
               rec("c", B.B3, "94112"), rec("d", None, "94000")]
    rows, notes = zip_table(records, profiles, incidents)
    assert [r.zip for r in rows] == ["94124", "94112", "94000"]
    assert abs(rows[0].per_capita_loss - 1447.742) <= 1e-3
    assert abs(rows[1].per_capita_loss - 436.366) <= 1e-3
    assert rows[0].avg_response == 300.0 and rows[0].avg_er_miles == 1.6
    assert rows[2].per_capita_loss is None
    assert "zip 94999: no incidents, excluded" in notes
    assert any("94000" in n and "per-capita" in n for n in notes)


def test_format_hms():
    assert format_hms(327) == "00:05:27"
    assert format_hms(3725.6) == "01:02:06"
    assert format_hms(None) == ""


def test_empty_export_is_header_only():
    assert export_tables([], "csv", "bracket").count("\n") == 1
    assert json.loads(export_tables([], "json", "bracket"))["rows"] == []
    assert export_tables([], "markdown", "zip").count("\n") == 2


def bracket_row():
    return BracketRow(B.B3, 4, 1234, {"response_time": 0.55812345, "er_distance": 0.71412}, 98765)


def test_markdown_three_decimals():
    md = export_tables([bracket_row()], "markdown")
    line = md.splitlines()[2]
    assert "| 0.558 |" in line and "| 0.714 |" in line
    assert "$50,000 - $75,000" in line


def test_csv_round_trip_is_exact():
    rows = [bracket_row(), BracketRow(B.B5, 1, 7, {"station_distance": 1 / 3}, 0)]
    text = export_tables(rows, "csv")
    assert parse_table_csv(text, "bracket") == rows
    assert export_tables(parse_table_csv(text, "bracket"), "csv") == text


def test_json_round_trip_zip_and_summary():
    zrow = ZipRow("94110", 327.25, 0.38, math.pi, B.B4, 12, 70_000, 1e6 / 7, 1e6 / 7 / 70_000)
    blank = ZipRow("94111", None, 0.1, 0.2, None, 1, 0, 0.0, None)
    assert parse_table_json(export_tables([zrow, blank], "json")) == [zrow, blank]
    assert parse_table_csv(export_tables([zrow, blank], "csv"), "zip") == [zrow, blank]
    srow = SummaryRow.from_stats(Metric.ER_DISTANCE, summarize([0.5, 2.7, 0.97]))
    assert parse_table_json(export_tables([srow], "json")) == [srow]


def test_unknown_format_and_schema():
    with pytest.raises(ConfigurationError):
        export_tables([bracket_row()], "xlsx")
    with pytest.raises(ConfigurationError):
        export_tables([], "csv")


def test_histogram_examples():
    assert histogram([3.3], 0.5) == (3.0, [1])
    assert histogram([0.1, 0.1, 0.9], 0.5) == (0.0, [2, 1])
    with pytest.raises(ConfigurationError):
        histogram([1.0], 0)


def test_local_maxima_bimodal():
    counts = [1, 4, 9, 4, 2, 1, 3, 8, 3, 1]
    assert local_maxima(counts) == [2, 7]


def test_svg_bars_and_determinism():
    svg = histogram_svg([0.1, 0.1, 0.9], 0.5, "Distance (miles)", "Calls", title="A & B")
    assert svg == histogram_svg([0.1, 0.1, 0.9], 0.5, "Distance (miles)", "Calls", title="A & B")
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    heights = [float(h) for h in re.findall(r'height="([\d.]+)" fill="#4c72b0"', svg)]
    assert len(heights) == 2
    assert heights[0] == pytest.approx(2 * heights[1], rel=1e-3)
    assert "A &amp; B" in svg
    with pytest.raises(ConfigurationError):
        histogram_svg([1.0], -1, "x")
