import pytest

from emsequity import synth
from emsequity.errors import ConfigurationError
from emsequity.ingest import (Category, FacilityKind, FilterRules, IncomeBracket, build_zip_profiles,
                              filter_incidents, load_facilities, load_income, load_population, parse_incidents)
from emsequity.metrics import Metric, binarize, compute_records


def test_splitmix64_reference_vector():
    # first output of the reference splitmix64 stream from state 0
    assert synth.splitmix64(0) == 0xE220A8397B1DCDAF


def test_xorshift64star_matches_plain_reference():
    rng = synth.XorShift64Star(12345)
    x = rng.state
    mask = (1 << 64) - 1
    for _ in range(100):
        x ^= x >> 12
        x ^= (x << 25) & mask
        x ^= x >> 27
        assert rng.next() == (x * 2685821657736338717) & mask


def test_uniform_and_randint_ranges():
    rng = synth.XorShift64Star(1)
    us = [rng.uniform() for _ in range(2000)]
    assert 0.0 <= min(us) and max(us) < 1.0
    assert 0.45 < sum(us) / len(us) < 0.55
    assert {rng.randint(3, 5) for _ in range(200)} == {3, 4, 5}
    with pytest.raises(ValueError):
        rng.randint(2, 1)


def one_bracket_config(n, p, seed=9):
    facilities, zips = synth.default_layout(n_stations=4, n_ers=2, brackets=(IncomeBracket.B3,))
    return synth.SynthConfig(seed, [synth.BracketSpec(IncomeBracket.B3, n, p, p, p)], facilities, zips)


def test_empty_dataset_has_header():
    ds = synth.generate(one_bracket_config(0, 0.5))
    text = synth.render_dataset(ds)["incidents.csv"]
    assert text == ",".join(synth.INCIDENT_HEADER) + "\n"


def test_ten_incidents_half_inside():
    ds = synth.generate(one_bracket_config(10, 0.5))
    recs = compute_records(ds.incidents, ds.stations, ds.ers, ds.profiles)
    th = synth.REFERENCE_THRESHOLDS
    for metric in Metric:
        assert sum(y for _, y in binarize(recs, th, metric)) == 5


def test_same_seed_same_bytes(small_config):
    a = synth.render_dataset(synth.generate(small_config))
    b = synth.render_dataset(synth.generate(small_config))
    assert a == b
    small_config.seed += 1
    assert synth.render_dataset(synth.generate(small_config))["incidents.csv"] != a["incidents.csv"]


def test_round_trip_through_files(small_config, tmp_path):
    ds = synth.generate(small_config)
    paths = synth.write_dataset(ds, tmp_path)
    incidents, report = parse_incidents(paths["incidents.csv"])
    assert incidents == ds.incidents
    assert report.quarantined == 0
    kept, frep = filter_incidents(incidents, FilterRules.default())
    assert frep.removed_by_rule == {"false_alarm": 3}
    stations = load_facilities(paths["stations.csv"], FacilityKind.FIRE_STATION)
    ers = load_facilities(paths["ers.csv"], FacilityKind.EMERGENCY_ROOM)
    profiles = build_zip_profiles(load_income(paths["income.csv"]), load_population(paths["population.csv"]))
    assert {z: p.median_bracket for z, p in profiles.items()} == {z: p.median_bracket for z, p in ds.profiles.items()}
    recs = compute_records(kept, stations, ers, profiles)
    for spec in small_config.per_bracket:
        want = dict(zip(Metric, spec.successes()))
        for metric in Metric:
            got = [y for b, y in binarize(recs, small_config.thresholds, metric) if b == spec.bracket]
            assert len(got) == spec.n_incidents
            assert sum(got) == want[metric]


def test_years_round_robin(small_config):
    ds = synth.generate(small_config)
    years = {i.year for i in ds.incidents}
    assert years == {2017, 2018}
    assert all(i.category in (Category.RESCUE_EMS, Category.FALSE_ALARMS) for i in ds.incidents)


def test_reference_preset_counts():
    cfg = synth.reference_config(seed=1, n_per_bracket=1000)
    assert [s.successes() for s in cfg.per_bracket] == [(494, 444, 98), (558, 534, 714), (624, 722, 928),
                                                        (554, 618, 780)]


@pytest.mark.parametrize("mutate, msg", [
    (lambda c: setattr(c, "years", ()), "year"),
    (lambda c: setattr(c, "spread_miles", 0), "spread"),
    (lambda c: setattr(c, "per_bracket", [synth.BracketSpec(IncomeBracket.B3, 5, 1.2, 0, 0)]), "proportion"),
    (lambda c: setattr(c, "per_bracket", [synth.BracketSpec(IncomeBracket.B6, 5, 0.5, 0.5, 0.5)]), "no zip"),
])
def test_invalid_configs(small_config, mutate, msg):
    mutate(small_config)
    with pytest.raises(ConfigurationError, match=msg):
        synth.generate(small_config)


def test_layout_without_er_rejected(small_config):
    small_config.facilities = [f for f in small_config.facilities if f.kind is FacilityKind.FIRE_STATION]
    with pytest.raises(ConfigurationError):
        synth.generate(small_config)
