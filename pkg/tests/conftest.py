import pytest

from emsequity import synth
from emsequity.ingest import IncomeBracket


@pytest.fixture(scope="session")
def reference_dataset():
    return synth.generate(synth.reference_config(seed=2018))


@pytest.fixture(scope="session")
def reference_files(reference_dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("reference")
    synth.write_dataset(reference_dataset, out)
    return out


@pytest.fixture
def small_config():
    facilities, zips = synth.default_layout(n_stations=8, n_ers=4)
    specs = [
        synth.BracketSpec(IncomeBracket.B2, 20, 0.5, 0.25, 0.1, false_alarms=3),
        synth.BracketSpec(IncomeBracket.B3, 20, 0.6, 0.5, 0.75),
        synth.BracketSpec(IncomeBracket.B4, 10, 0.7, 0.6, 0.8),
        synth.BracketSpec(IncomeBracket.B5, 10, 0.4, 0.3, 0.9),
    ]
    return synth.SynthConfig(seed=42, per_bracket=specs, facilities=facilities, zips=zips, years=(2017, 2018))


def write_analyze_conf(directory, **extra):
    lines = [
        "paths.incidents = incidents.csv",
        "paths.stations = stations.csv",
        "paths.ers = ers.csv",
        "paths.income = income.csv",
        "paths.population = population.csv",
    ]
    lines += [f"{k.replace('__', '.')} = {v}" for k, v in extra.items()]
    path = directory / "analyze.conf"
    path.write_text("\n".join(lines) + "\n")
    return path


# one PASS/FAIL/SKIP line per acceptance criterion, printed after the run

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else "SKIP" if rep.skipped else "FAIL"
        if rep.skipped and isinstance(rep.longrepr, tuple):
            detail = rep.longrepr[2].removeprefix("Skipped: ")
        _CRITERIA[number] = (status, title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        status, title, detail = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n}: {status}  {title}" + (f"  [{detail}]" if detail else ""))
