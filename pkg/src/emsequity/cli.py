"""Command line entry point: ``emsequity analyze | synth | validate | keys``.

Exit codes: 0 success, 1 fatal error, 2 validation problems found.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import synth
from .config import ANALYZE_KEYS, SYNTH_KEYS, RunConfig, load_config, unknown_keys
from .errors import EquityError
from .ingest import (FacilityKind, FilterReport, IncomeBracket, iter_incidents, load_facilities, load_income,
                     load_population, open_text)
from .metrics import Metric
from .pipeline import file_digest, run_analysis, write_outputs

log = logging.getLogger("emsequity")

EXIT_OK, EXIT_FATAL, EXIT_PROBLEMS = 0, 1, 2
THRESHOLD_NAMES = ("response_seconds", "station_miles", "er_miles")


def _run_config(args) -> RunConfig:
    values, base = load_config(args.config)
    cfg = RunConfig.from_values(values, base)
    if args.reproduce_paper:
        cfg.apply_reproduction_preset()
        cfg.echo["cli.reproduce_paper"] = "true"
    for name in THRESHOLD_NAMES:
        v = getattr(args, f"threshold_{name}")
        if v is not None:
            cfg.thresholds[name] = v
            cfg.echo[f"cli.threshold.{name}"] = repr(v)
    if args.year:
        cfg.rules = cfg.rules.with_years(args.year)
        cfg.echo["cli.year"] = ",".join(map(str, args.year))
    if args.metric:
        cfg.metrics = tuple(dict.fromkeys(Metric.parse(m) for m in args.metric))
        cfg.echo["cli.metric"] = ",".join(m.value for m in cfg.metrics)
    if args.format:
        cfg.formats = tuple(dict.fromkeys(args.format))
        cfg.echo["cli.format"] = ",".join(cfg.formats)
    if args.out:
        cfg.output_dir = Path(args.out)
    if cfg.output_dir is None:
        raise EquityError("no output directory: pass --out or set output.dir")
    return cfg


def cmd_analyze(args) -> int:
    cfg = _run_config(args)
    result = run_analysis(cfg)
    files = write_outputs(cfg, result, cfg.output_dir)
    for m, r in result.models.items():
        p = r.model
        log.info("%s: threshold %g, n=%d, beta=%s, HL chi2=%.3g p=%.4f", m.value, r.threshold,
                 p.n_observations, [round(b, 4) for b in p.beta], r.hl.chi2, r.hl.p_value)
    print(f"wrote {len(files)} files to {cfg.output_dir}")
    return EXIT_OK


def _synth_config(values: dict[str, str]) -> synth.SynthConfig:
    bad = unknown_keys(values, SYNTH_KEYS)
    if bad:
        raise EquityError(f"unknown synth key(s): {', '.join(sorted(bad))}")
    layout = {}
    if "synth.stations" in values:
        layout["n_stations"] = int(values["synth.stations"])
    if "synth.ers" in values:
        layout["n_ers"] = int(values["synth.ers"])
    seed = int(values.get("synth.seed", "2018"), 0)
    specs = []
    for key, raw in values.items():
        if key.startswith("synth.bracket."):
            b = IncomeBracket.parse(key[len("synth.bracket."):])
            parts = [p.strip() for p in raw.split(",")]
            if len(parts) not in (4, 5):
                raise EquityError(f"{key}: expected n, p_response, p_station, p_er[, false_alarms]")
            specs.append(synth.BracketSpec(b, int(parts[0]), float(parts[1]), float(parts[2]), float(parts[3]),
                                           int(parts[4]) if len(parts) == 5 else 0))
    preset = values.get("synth.preset")
    if preset == "reference":
        n = int(values.get("synth.n_per_bracket", "2500"))
        cfg = synth.reference_config(seed, n, **layout)
        if specs:
            by_b = {s.bracket: s for s in cfg.per_bracket}
            by_b.update({s.bracket: s for s in specs})
            cfg.per_bracket = [by_b[b] for b in sorted(by_b)]
    elif preset is not None:
        raise EquityError(f"unknown synth.preset {preset!r}")
    else:
        if not specs:
            raise EquityError("synth config defines no brackets (set synth.preset or synth.bracket.<B>)")
        facilities, zips = synth.default_layout(brackets=sorted(s.bracket for s in specs), **layout)
        cfg = synth.SynthConfig(seed, sorted(specs, key=lambda s: s.bracket), facilities, zips)
    if "synth.years" in values:
        cfg.years = tuple(int(y) for y in values["synth.years"].split(","))
    if "synth.spread_miles" in values:
        cfg.spread_miles = float(values["synth.spread_miles"])
    return cfg


ANALYZE_TEMPLATE = """\
# generated by `emsequity synth`
paths.incidents = incidents.csv
paths.stations = stations.csv
paths.ers = ers.csv
paths.income = income.csv
paths.population = population.csv
thresholds.response_seconds = {response_seconds!r}
thresholds.station_miles = {station_miles!r}
thresholds.er_miles = {er_miles!r}
output.dir = analysis
"""


def cmd_synth(args) -> int:
    values, base = load_config(args.config)
    scfg = _synth_config(values)
    out = Path(args.out) if args.out else (base / values["output.dir"] if "output.dir" in values else None)
    if out is None:
        raise EquityError("no output directory: pass --out or set output.dir")
    ds = synth.generate(scfg)
    paths = synth.write_dataset(ds, out)
    th = scfg.thresholds
    conf = out / "analyze.conf"
    conf.write_text(ANALYZE_TEMPLATE.format(response_seconds=th.response_seconds, station_miles=th.station_miles,
                                            er_miles=th.er_miles), encoding="utf-8")
    manifest = {
        "schema": "synth_manifest",
        "seed": scfg.seed,
        "config": dict(sorted(values.items())),
        "counts": {
            "incidents": len(ds.incidents),
            "per_bracket": {s.bracket.name: {"n": s.n_incidents, "false_alarms": s.false_alarms,
                                             "successes": dict(zip((m.value for m in Metric), s.successes()))}
                            for s in scfg.per_bracket},
            "stations": len(ds.stations),
            "ers": len(ds.ers),
            "zips": len(ds.profiles),
        },
        "files": {name: file_digest(p) for name, p in sorted(paths.items())},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    print(f"wrote {len(paths)} data files, analyze.conf and manifest.json to {out}")
    return EXIT_OK


def _header(path, delimiter=",") -> list[str]:
    with open_text(path) as fh:
        return [h.strip() for h in next(csv.reader(fh, delimiter=delimiter), [])]


def collect_problems(config_path) -> list[str]:
    """Every detectable problem with a config and its input files."""
    problems: list[str] = []
    try:
        values, base = load_config(config_path)
    except EquityError as e:
        return [str(e)]
    try:
        cfg = RunConfig.from_values(values, base)
    except (EquityError, ValueError) as e:
        return [f"config: {e}"]

    for name, p in cfg.paths.items():
        if not p.is_file():
            problems.append(f"{name}: cannot read {p}")
    readable = {n for n, p in cfg.paths.items() if p.is_file()}

    if "incidents" in readable:
        p = cfg.paths["incidents"]
        header = _header(p, cfg.mapping.delimiter)
        missing = [c for c in cfg.mapping.required_columns() if c not in header]
        if missing:
            problems.append(f"incidents: column(s) {', '.join(missing)} not in header of {p}")
        else:
            report = FilterReport()
            for _ in iter_incidents(p, cfg.mapping, report):
                pass
            for reason, n in sorted(report.quarantine_reasons.items()):
                rows = [r for r, why in report.quarantine_samples if why == reason][:5]
                problems.append(f"incidents: {n} row(s) quarantined: {reason} (e.g. rows {rows})")
    for name, kind in (("stations", FacilityKind.FIRE_STATION), ("ers", FacilityKind.EMERGENCY_ROOM)):
        if name in readable:
            try:
                if not load_facilities(cfg.paths[name], kind):
                    problems.append(f"{name}: no facilities in {cfg.paths[name]}")
            except EquityError as e:
                problems.append(f"{name}: {e}")
    for name, loader in (("income", load_income), ("population", load_population)):
        if name in readable:
            try:
                loader(cfg.paths[name])
            except EquityError as e:
                problems.append(f"{name}: {e}")
    return problems


def cmd_validate(args) -> int:
    problems = collect_problems(args.config)
    for p in problems:
        print(f"problem: {p}")
    if not problems:
        print("no problems found")
    return EXIT_PROBLEMS if problems else EXIT_OK


def cmd_keys(args) -> int:
    for title, keys in (("analyze", ANALYZE_KEYS), ("synth", SYNTH_KEYS)):
        print(f"[{title}]")
        for k, desc in keys.items():
            print(f"  {k:32s} {desc}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emsequity", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="run the full pipeline")
    a.add_argument("--config", required=True)
    a.add_argument("--out")
    a.add_argument("--year", type=int, action="append", help="keep only this alarm year (repeatable)")
    a.add_argument("--metric", action="append", choices=[m.value for m in Metric])
    for name in THRESHOLD_NAMES:
        a.add_argument(f"--threshold.{name}", dest=f"threshold_{name}", type=float)
    a.add_argument("--reproduce-paper", action="store_true",
                   help="pin thresholds to 300 s / 0.4 mi / 1.0 mi and reference brackets per model")
    a.add_argument("--format", action="append", choices=["csv", "json", "markdown"])
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("validate", help="check a config and its input files")
    v.add_argument("--config", required=True)
    v.set_defaults(func=cmd_validate)

    k = sub.add_parser("keys", help="list every config key")
    k.set_defaults(func=cmd_keys)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (EquityError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
