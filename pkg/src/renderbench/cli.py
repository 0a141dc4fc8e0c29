"""Command-line experiment runner.

  renderbench run <scenario> [--out DIR] [--seed N] [--variant V]
                  [--measure M] [--hooks on|off] [--queries double|single|off]
  renderbench compare <dirA> <dirB> [--out FILE]
  renderbench validate <scenario>

<scenario> is a JSON file path or a bundled scenario name (see
`renderbench validate --list`). Exit codes: 0 ok, 1 tracking-invariant
failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from renderbench.errors import ConfigError, InvariantError, SchemaMismatch
from renderbench.metrics import MeasureMode
from renderbench.pipeline import PipelineVariant
from renderbench.scenario import bundled_scenario_names, load_scenario

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="renderbench",
        description="Latency/FPS benchmarking for pipelined remote rendering, "
                    "with a deterministic discrete-event twin.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario and write reports")
    run.add_argument("scenario", help="scenario JSON path or bundled name")
    run.add_argument("--out", default="runs/out", help="output directory")
    run.add_argument("--seed", type=int, help="override the scenario seed")
    run.add_argument("--variant", choices=[v.value for v in PipelineVariant],
                     help="run only this pipeline variant")
    run.add_argument("--measure", choices=[m.value for m in MeasureMode],
                     help="run only this measurement mode")
    run.add_argument("--hooks", choices=["on", "off"],
                     help="override instrumentation hooks")
    run.add_argument("--queries", choices=["double", "single", "off"],
                     help="override GPU time-query mode")

    cmp_p = sub.add_parser("compare", help="delta report between two run dirs")
    cmp_p.add_argument("run_a")
    cmp_p.add_argument("run_b")
    cmp_p.add_argument("--out", help="also write compare.csv here")

    val = sub.add_parser("validate", help="check a scenario file")
    val.add_argument("scenario", nargs="?", help="scenario JSON path or name")
    val.add_argument("--list", action="store_true", dest="list_bundled",
                     help="list bundled scenarios")
    return parser


def _apply_overrides(scenario, args):
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.variant:
        overrides["variants"] = (PipelineVariant(args.variant),)
    if args.measure:
        overrides["measures"] = (MeasureMode(args.measure),)
    if args.hooks:
        overrides["hooks_enabled"] = args.hooks == "on"
    if args.queries:
        overrides["queries"] = args.queries
    return scenario.with_overrides(**overrides) if overrides else scenario


def _cmd_run(args) -> int:
    from renderbench.report import execute_scenario

    scenario = _apply_overrides(load_scenario(args.scenario), args)
    if scenario.mode == "des":
        from renderbench.des.model import run_sim as runner
    else:
        from renderbench.harness import run_harness as runner
    report = execute_scenario(scenario, args.out, runner)
    print(f"wrote {report.out_dir}/summary.csv "
          f"({len(report.rows)} rows, {len(report.counters)} runs)")
    if not report.ok:
        for failure in report.invariant_failures:
            print(f"INVARIANT FAILURE: {failure}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _cmd_compare(args) -> int:
    from renderbench.report import compare_runs, write_compare_csv

    report = compare_runs(args.run_a, args.run_b)
    print(report.format_table())
    if args.out:
        write_compare_csv(args.out, report)
        print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_validate(args) -> int:
    if args.list_bundled:
        for name in bundled_scenario_names():
            print(name)
        return EXIT_OK
    if not args.scenario:
        print("validate: provide a scenario or --list", file=sys.stderr)
        return EXIT_CONFIG
    scenario = load_scenario(args.scenario)
    combos = len(scenario.variants) * len(scenario.measures) * scenario.replicates
    print(f"OK: {scenario.name} ({scenario.mode}, "
          f"{len(scenario.instances)} instance(s), {combos} run(s))")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "compare":
            return _cmd_compare(args)
        return _cmd_validate(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SchemaMismatch as exc:
        print(f"schema mismatch: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InvariantError as exc:
        print(f"tracking invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
