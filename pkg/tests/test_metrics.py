import io
import math
import random
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emsequity.errors import ConfigurationError, DomainError
from emsequity.geodesy import GeoPoint, distance_miles
from emsequity.ingest import FacilityKind, Facility, IncomeBracket
from emsequity.metrics import (Metric, ResponseRecord, SummaryStats, Thresholds, assign_nearest, binarize,
                               derive_thresholds, nearest_facility, read_records_csv, response_time, summarize,
                               write_records_csv)

T0 = datetime(2018, 6, 1, 12, 0, 0)
STATION = FacilityKind.FIRE_STATION


def record(seconds=300, station=0.4, er=1.0, bracket=IncomeBracket.B3, ident="r"):
    return ResponseRecord(ident, seconds, "S1", station, "E1", er, "94110", bracket, 2018)


def stats(mean):
    return SummaryStats(10, mean, 0.0, mean, mean)


def random_facilities(rng, n, kind=STATION):
    return [Facility(f"F{k:02d}", kind, GeoPoint(rng.uniform(37.70, 37.82), rng.uniform(-122.52, -122.36)))
            for k in range(n)]


def test_response_time():
    assert response_time(T0, T0) == 0
    assert response_time(T0, T0 + timedelta(minutes=5)) == 300
    assert response_time(T0, T0 + timedelta(days=1, seconds=3)) == 86403
    with pytest.raises(DomainError):
        response_time(T0, T0 - timedelta(seconds=1))


def test_nearest_single_and_coincident():
    rng = random.Random(1)
    fs = random_facilities(rng, 6)
    (only,) = fs[:1]
    call = GeoPoint(37.76, -122.44)
    assert nearest_facility(call, [only]) == (only.id, distance_miles(call, only.location))
    assert nearest_facility(fs[3].location, fs) == (fs[3].id, 0.0)


def test_nearest_tie_goes_to_smallest_id():
    p = GeoPoint(37.75, -122.4)
    fs = [Facility("B", STATION, p), Facility("A", STATION, p)]
    assert nearest_facility(GeoPoint(37.76, -122.4), fs)[0] == "A"
    ids, _ = assign_nearest([37.76], [-122.4], fs)
    assert ids == ["A"]


def test_nearest_errors():
    with pytest.raises(ConfigurationError):
        nearest_facility(GeoPoint(0, 0), [])
    mixed = [Facility("a", STATION, GeoPoint(0, 0)), Facility("b", FacilityKind.EMERGENCY_ROOM, GeoPoint(1, 1))]
    with pytest.raises(ConfigurationError):
        nearest_facility(GeoPoint(0, 0), mixed)


@pytest.mark.parametrize("seed", range(5))
def test_nearest_matches_brute_force(seed):
    rng = random.Random(seed)
    fs = random_facilities(rng, 5)
    for _ in range(50):
        call = GeoPoint(rng.uniform(37.70, 37.82), rng.uniform(-122.52, -122.36))
        oracle = min(fs, key=lambda f: (distance_miles(call, f.location), f.id))
        fid, miles = nearest_facility(call, fs)
        assert fid == oracle.id
        assert miles == pytest.approx(distance_miles(call, oracle.location), abs=1e-12)
        assert all(miles <= distance_miles(call, f.location) + 1e-12 for f in fs)


def test_batch_assignment_matches_scalar():
    rng = random.Random(11)
    fs = random_facilities(rng, 12)
    lat = [rng.uniform(37.70, 37.82) for _ in range(300)]
    lon = [rng.uniform(-122.52, -122.36) for _ in range(300)]
    ids, miles = assign_nearest(lat, lon, fs)
    for a, b, fid, m in zip(lat, lon, ids, miles):
        ref_id, ref_m = nearest_facility(GeoPoint(a, b), fs)
        assert fid == ref_id
        assert m == pytest.approx(ref_m, abs=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**32))
def test_adding_a_facility_never_increases_distance(seed):
    rng = random.Random(seed)
    fs = random_facilities(rng, 4)
    extra = Facility("Z9", STATION, GeoPoint(rng.uniform(37.7, 37.8), rng.uniform(-122.5, -122.4)))
    call = GeoPoint(rng.uniform(37.7, 37.8), rng.uniform(-122.5, -122.4))
    assert nearest_facility(call, fs + [extra])[1] <= nearest_facility(call, fs)[1]


def test_summarize_examples():
    assert summarize([5.0]) == SummaryStats(1, 5.0, 0.0, 5.0, 5.0)
    s = summarize([1, 2, 3])
    assert s.mean == 2.0
    assert s.std_error == pytest.approx(0.57735026918962576451, abs=1e-15)
    assert summarize([4, 4, 4, 4]).std_error == 0.0
    with pytest.raises(DomainError):
        summarize([])


@given(st.lists(st.floats(0, 1e4, allow_nan=False), min_size=1, max_size=50), st.randoms())
def test_summarize_permutation_invariant(values, rnd):
    shuffled = list(values)
    rnd.shuffle(shuffled)
    a, b = summarize(values), summarize(shuffled)
    assert a.n == b.n and a.mean == b.mean and a.min == b.min and a.max == b.max
    assert a.std_error == pytest.approx(b.std_error, rel=1e-12, abs=1e-12)
    assert a.min <= a.mean <= a.max


def test_derive_thresholds_reference_pairs():
    t = derive_thresholds(stats(327.0), stats(0.38), stats(0.97))
    assert t == Thresholds(300.0, 0.4, 1.0)


def test_derive_thresholds_override_and_half_up():
    t = derive_thresholds(stats(330.0), stats(0.25), stats(0.97), overrides={"er_miles": 1.14})
    assert t.response_seconds == 360.0
    assert t.station_miles == 0.3
    assert t.er_miles == 1.14
    with pytest.raises(ConfigurationError):
        derive_thresholds(stats(1), stats(1), stats(1), overrides={"bogus": 1})


def test_thresholds_must_be_positive():
    with pytest.raises(DomainError):
        Thresholds(0.0, 0.4, 1.0)
    with pytest.raises(DomainError):
        derive_thresholds(stats(10.0), stats(0.4), stats(1.0))


def test_binarize_boundaries():
    th = Thresholds(300.0, 0.4, 1.0)
    assert binarize([record(station=0.4)], th, "station_distance") == [(IncomeBracket.B3, 1)]
    assert binarize([record(seconds=301)], th, Metric.RESPONSE_TIME) == [(IncomeBracket.B3, 0)]
    assert binarize([record(er=0.99)], th, "er_distance") == [(IncomeBracket.B3, 1)]


def test_binarize_skips_missing():
    th = Thresholds()
    recs = [record(bracket=None), record(seconds=None), record()]
    assert len(binarize(recs, th, Metric.RESPONSE_TIME)) == 1
    assert len(binarize(recs, th, Metric.STATION_DISTANCE)) == 2
    with pytest.raises(ConfigurationError):
        binarize(recs, th, "walking_distance")


def test_records_csv_round_trip():
    recs = [record(ident="a", station=0.1 + 0.2), record(seconds=None, bracket=None, ident="b", er=math.pi)]
    buf = io.StringIO()
    write_records_csv(recs, buf)
    buf.seek(0)
    assert read_records_csv(buf) == recs


def test_chunking_does_not_change_results(monkeypatch):
    import emsequity.metrics as m
    rng = np.random.default_rng(3)
    lat, lon = rng.uniform(37.7, 37.8, 1000), rng.uniform(-122.5, -122.4, 1000)
    fs = random_facilities(random.Random(2), 7)
    whole = assign_nearest(lat, lon, fs)
    monkeypatch.setattr(m, "CHUNK_ROWS", 37)
    chunked = assign_nearest(lat, lon, fs)
    assert whole[0] == chunked[0]
    np.testing.assert_array_equal(whole[1], chunked[1])
