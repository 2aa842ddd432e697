"""Command-line entry points: run one scenario, sweep a parameter, or compare
schemes on the same scenario and seed.

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import copy
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from ecsim.config import ConfigError, ScenarioConfig, from_dict, parse_config
from ecsim.engine import run_simulation
from ecsim.report import compare, compare_csv, trace_csv

SCHEME_CHOICES = ("traffic-aware", "always-on", "periodic", "coordinated")


def _write_outputs(outdir: Path, report, trace_rows, quiet: bool) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "report.json").write_text(report.to_json())
    (outdir / "timeseries.csv").write_text(report.timeseries_csv())
    if trace_rows is not None:
        (outdir / "trace.csv").write_text(trace_csv(trace_rows))
    if not quiet:
        net = report.network
        print(
            f"[{report.meta['scheme']}] seed={report.meta['seed']} "
            f"delivery={net['delivery_ratio']:.3f} "
            f"mean_consumption={net['mean_per_device_consumption_j']:.3f} J "
            f"-> {outdir / 'report.json'}"
        )


def _config_with_scheme(config_dict: dict, scheme_kind: str) -> ScenarioConfig:
    raw = copy.deepcopy(config_dict)
    raw["scheme"] = {"kind": scheme_kind}
    return from_dict(raw)


def _run_worker(args: tuple) -> str:
    """Run one (config, seed) and write its outputs; used by sweep workers."""
    raw_config, seed, outdir, trace, quiet = args
    config = from_dict(raw_config)
    report, trace_rows = run_simulation(config, seed, collect_trace=trace)
    _write_outputs(Path(outdir), report, trace_rows, quiet)
    return outdir


def cmd_run(args: argparse.Namespace) -> int:
    config = parse_config(args.config)
    if args.scheme:
        config = _config_with_scheme(config.to_dict(), args.scheme)
    report, trace_rows = run_simulation(config, args.seed, collect_trace=args.trace)
    _write_outputs(Path(args.out), report, trace_rows, args.quiet)
    return 0


def _set_by_path(raw: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    target = raw
    for part in parts[:-1]:
        if part not in target or not isinstance(target[part], dict):
            target[part] = {}
        target = target[part]
    target[parts[-1]] = value


def cmd_sweep(args: argparse.Namespace) -> int:
    base = parse_config(args.config)
    raw = base.to_dict()
    values = [json.loads(v) for v in args.values.split(",")]
    seeds = [int(s) for s in args.seeds.split(",")] if args.seeds else [args.seed]
    jobs = []
    for value in values:
        for seed in seeds:
            run_raw = copy.deepcopy(raw)
            _set_by_path(run_raw, args.param, value)
            if args.scheme:
                run_raw["scheme"] = {"kind": args.scheme}
            from_dict(run_raw)  # validate before launching anything
            outdir = Path(args.out) / f"{args.param.replace('.', '_')}={value}" / f"seed={seed}"
            jobs.append((run_raw, seed, str(outdir), args.trace, args.quiet))
    workers = int(os.environ.get("ECSIM_THREADS", "1"))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            list(pool.map(_run_worker, jobs))
    else:
        for job in jobs:
            _run_worker(job)
    if not args.quiet:
        print(f"sweep complete: {len(jobs)} runs under {args.out}")
    return 0


def cmd_compare(args: argparse.Namespace) -> int:
    base = parse_config(args.config)
    raw = base.to_dict()
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if len(schemes) < 2:
        raise ConfigError(["compare needs at least two schemes"])
    for scheme in schemes:
        if scheme not in SCHEME_CHOICES:
            raise ConfigError([f"unknown scheme {scheme!r}; choices: {SCHEME_CHOICES}"])
    outdir = Path(args.out)
    reports = []
    for scheme in schemes:
        config = _config_with_scheme(raw, scheme)
        report, trace_rows = run_simulation(config, args.seed, collect_trace=args.trace)
        _write_outputs(outdir / scheme, report, trace_rows, args.quiet)
        reports.append((scheme, report))
    rows = compare(reports, baseline=args.baseline or schemes[0])
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "compare.csv").write_text(compare_csv(rows))
    if not args.quiet:
        print(f"comparison table -> {outdir / 'compare.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecsim",
        description="Deterministic simulator for traffic-aware duty-cycle energy conservation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one scenario with one seed")
    run_p.add_argument("--config", required=True)
    run_p.add_argument("--seed", type=int, required=True)
    run_p.add_argument("--out", required=True)
    run_p.add_argument("--scheme", choices=SCHEME_CHOICES)
    run_p.add_argument("--trace", action="store_true", help="also write trace.csv")
    run_p.add_argument("--quiet", action="store_true")
    run_p.set_defaults(func=cmd_run)

    sweep_p = sub.add_parser("sweep", help="vary one config parameter over a list")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--param", required=True, help="dotted config path, e.g. nodes")
    sweep_p.add_argument("--values", required=True, help="comma-separated JSON values")
    sweep_p.add_argument("--seed", type=int, default=1)
    sweep_p.add_argument("--seeds", help="comma-separated seeds (overrides --seed)")
    sweep_p.add_argument("--out", required=True)
    sweep_p.add_argument("--scheme", choices=SCHEME_CHOICES)
    sweep_p.add_argument("--trace", action="store_true")
    sweep_p.add_argument("--quiet", action="store_true")
    sweep_p.set_defaults(func=cmd_sweep)

    cmp_p = sub.add_parser("compare", help="run several schemes on one scenario+seed")
    cmp_p.add_argument("--config", required=True)
    cmp_p.add_argument("--seed", type=int, required=True)
    cmp_p.add_argument("--schemes", required=True, help="comma-separated scheme kinds")
    cmp_p.add_argument("--baseline", help="baseline scheme for deltas (default: first)")
    cmp_p.add_argument("--out", required=True)
    cmp_p.add_argument("--trace", action="store_true")
    cmp_p.add_argument("--quiet", action="store_true")
    cmp_p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - report and exit 3 per contract
        print(f"runtime error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
