"""Run outputs: summary rows, CSV/meta files, and run comparison.

A run directory holds trace.jsonl (one file per variant/measure/replicate
combination; at the top level when there is exactly one), summary.csv (one
row per scenario/variant/measure/replicate/instance/metric with the
distribution summary columns), and run_meta.json (enough to reproduce the
run). Durations are reported in milliseconds, frame rates in frames per
second. The client-FPS quality-of-service floor is 25.
"""

from __future__ import annotations

import csv
import json
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import renderbench
from renderbench.core import HookId
from renderbench.errors import MissingStage, SchemaMismatch
from renderbench.metrics import (
    MeasureMode,
    fps_series,
    match_rtts,
    offline_sum_estimate,
    pass_periods,
    stage_durations,
    summarize,
)
from renderbench.scenario import ScenarioConfig
from renderbench.trace import write_jsonl

QOS_MIN_CLIENT_FPS = 25.0

SUMMARY_COLUMNS = [
    "scenario", "mode", "variant", "measure", "replicate", "instance",
    "metric", "unit", "count", "mean", "p1", "p25", "p75", "p99",
]


def collect_metrics(result) -> dict:
    """Raw per-(instance, metric) value lists from one run result.

    Keys are (instance, metric, unit); durations stay in nanoseconds here
    and are scaled at CSV-writing time.
    """
    records = result.records
    out: dict[tuple, list] = {}

    offset = 0
    if result.offset_estimates:
        offset = next(iter(result.offset_estimates.values()))
    matched = match_rtts(records, offset=offset)
    by_instance: dict[int, list] = {}
    for rec in matched.records:
        by_instance.setdefault(rec.instance, []).append(rec)
    for instance, recs in sorted(by_instance.items()):
        out[(instance, "rtt", "ms")] = [r.rtt for r in recs]
        out[(instance, "queue_wait", "ms")] = [r.queue_wait for r in recs]
        try:
            out[(instance, "rtt_offline", "ms")] = [
                offline_sum_estimate(r) for r in recs
            ]
        except MissingStage:
            pass

    instances = sorted({rec["instance"] for rec in records if "instance" in rec})
    for instance in instances:
        periods = pass_periods(records, instance)
        if periods:
            out[(instance, "period_server", "ms")] = periods
        for stage, durations in sorted(stage_durations(records, instance).items()):
            out[(instance, f"stage_{stage}", "ms")] = durations

    for metric, hook in (("fps_server", HookId.PROXY_FRAME_RECV),
                         ("fps_client", HookId.CLIENT_FRAME_RECV)):
        for instance, counts in sorted(fps_series(records, hook).items()):
            out[(instance, metric, "fps")] = counts
    return out


@dataclass
class RunRow:
    scenario: str
    mode: str
    variant: str
    measure: str
    replicate: str
    instance: int
    metric: str
    unit: str
    count: int
    mean: float
    p1: float
    p25: float
    p75: float
    p99: float


def _rows_from_metrics(metrics: dict, scenario: ScenarioConfig, variant: str,
                       measure: str, replicate: str) -> list[RunRow]:
    rows = []
    for (instance, metric, unit), values in metrics.items():
        if not values:
            continue
        s = summarize(values)
        scale = 1e-6 if unit == "ms" else 1.0
        rows.append(RunRow(
            scenario=scenario.name, mode=scenario.mode, variant=variant,
            measure=measure, replicate=replicate, instance=instance,
            metric=metric, unit=unit, count=s.count,
            mean=float(s.mean) * scale, p1=float(s.p1) * scale,
            p25=float(s.p25) * scale, p75=float(s.p75) * scale,
            p99=float(s.p99) * scale,
        ))
    return rows


@dataclass
class ExecutionReport:
    scenario: ScenarioConfig
    out_dir: Path
    rows: list[RunRow] = field(default_factory=list)
    counters: list[dict] = field(default_factory=list)
    invariant_failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.invariant_failures


def execute_scenario(scenario: ScenarioConfig, out_dir, runner) -> ExecutionReport:
    """Run every (variant, measure, replicate) combination and write outputs.

    `runner(scenario, variant, measure, seed)` is either the DES or harness
    entry point; replicate r runs under seed + r.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = ExecutionReport(scenario=scenario, out_dir=out_dir)
    combos = [(v, m) for v in scenario.variants for m in scenario.measures]
    single = len(combos) == 1 and scenario.replicates == 1
    started = time.time()

    pooled: dict[tuple, dict] = {}
    for variant, measure in combos:
        pool_key = (variant.value, measure.value)
        pooled.setdefault(pool_key, {})
        for rep in range(scenario.replicates):
            result = runner(scenario, variant, measure, scenario.seed + rep)
            if single:
                trace_path = out_dir / "trace.jsonl"
            else:
                trace_dir = out_dir / "traces"
                trace_dir.mkdir(exist_ok=True)
                trace_path = trace_dir / f"{variant.value}.{measure.value}.rep{rep}.jsonl"
            write_jsonl(trace_path, result.records)

            metrics = collect_metrics(result)
            report.rows.extend(_rows_from_metrics(
                metrics, scenario, variant.value, measure.value, str(rep)
            ))
            for key, values in metrics.items():
                pooled[pool_key].setdefault(key, []).extend(values)

            counters = dict(result.counters)
            counters.update({
                "variant": variant.value, "measure": measure.value,
                "replicate": rep,
                "offset_estimates_ms": {
                    k: float(v) / 1e6 for k, v in result.offset_estimates.items()
                },
                "agent_stats": {k: vars(v) for k, v in result.agent_stats.items()},
            })
            report.counters.append(counters)
            for instance, n in result.counters.get("unmatched", {}).items():
                if n:
                    report.invariant_failures.append(
                        f"{variant.value}/{measure.value}/rep{rep}: instance "
                        f"{instance} saw {n} unmatched frame tags"
                    )

        report.rows.extend(_rows_from_metrics(
            pooled[pool_key],
            scenario, variant.value, measure.value, "pooled",
        ))

    write_summary_csv(out_dir / "summary.csv", report.rows)
    meta = {
        "scenario": scenario.raw or scenario.name,
        "scenario_name": scenario.name,
        "mode": scenario.mode,
        "seed": scenario.seed,
        "variants": [v.value for v in scenario.variants],
        "measures": [m.value for m in scenario.measures],
        "replicates": scenario.replicates,
        "package_version": renderbench.__version__,
        "python": sys.version.split()[0],
        "platform": platform.platform(),
        "runtime_s": round(time.time() - started, 3),
        "counters": report.counters,
        "invariant_failures": report.invariant_failures,
    }
    (out_dir / "run_meta.json").write_text(json.dumps(meta, indent=2, default=str))
    return report


def _fmt(value: float) -> str:
    return f"{value:.6f}"


def write_summary_csv(path, rows: list[RunRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_COLUMNS)
        for row in rows:
            writer.writerow([
                row.scenario, row.mode, row.variant, row.measure, row.replicate,
                row.instance, row.metric, row.unit, row.count,
                _fmt(row.mean), _fmt(row.p1), _fmt(row.p25), _fmt(row.p75),
                _fmt(row.p99),
            ])


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class CompareRow:
    instance: int
    metric: str
    mean_a: float
    mean_b: float
    delta_pct: float | None


@dataclass
class CompareReport:
    rows: list[CompareRow]
    qos_a: dict[int, str]
    qos_b: dict[int, str]

    def format_table(self) -> str:
        lines = [f"{'instance':>8} {'metric':<16} {'A':>12} {'B':>12} {'delta%':>9}"]
        for row in self.rows:
            delta = "n/a" if row.delta_pct is None else f"{row.delta_pct:+.1f}"
            lines.append(f"{row.instance:>8} {row.metric:<16} "
                         f"{row.mean_a:>12.3f} {row.mean_b:>12.3f} {delta:>9}")
        for label, qos in (("A", self.qos_a), ("B", self.qos_b)):
            for instance, verdict in sorted(qos.items()):
                lines.append(f"QoS[{label}] instance {instance}: client FPS "
                             f"{verdict}")
        return "\n".join(lines)


_COMPARE_METRICS = ("fps_server", "fps_client", "rtt")


def compare_runs(dir_a, dir_b) -> CompareReport:
    """Pooled-row comparison of two completed run directories."""
    def pooled_means(path) -> dict:
        rows = read_summary_csv(Path(path) / "summary.csv")
        out = {}
        for row in rows:
            if row["replicate"] != "pooled":
                continue
            key = (int(row["instance"]), row["metric"])
            out[key] = float(row["mean"])
        if not out:
            raise SchemaMismatch(f"{path}: no pooled rows in summary.csv")
        return out

    a = pooled_means(dir_a)
    b = pooled_means(dir_b)
    keys_a = {k for k in a if k[1] in _COMPARE_METRICS}
    keys_b = {k for k in b if k[1] in _COMPARE_METRICS}
    if keys_a != keys_b:
        raise SchemaMismatch(
            f"metric sets differ: only-A={sorted(keys_a - keys_b)}, "
            f"only-B={sorted(keys_b - keys_a)}"
        )

    rows = []
    for key in sorted(keys_a):
        mean_a, mean_b = a[key], b[key]
        delta = None if mean_a == 0 else 100.0 * (mean_b - mean_a) / mean_a
        rows.append(CompareRow(instance=key[0], metric=key[1], mean_a=mean_a,
                               mean_b=mean_b, delta_pct=delta))

    def qos(means: dict) -> dict[int, str]:
        return {
            inst: ("PASS" if mean >= QOS_MIN_CLIENT_FPS else "FAIL")
            for (inst, metric), mean in means.items() if metric == "fps_client"
        }

    return CompareReport(rows=rows, qos_a=qos(a), qos_b=qos(b))


def write_compare_csv(path, report: CompareReport) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["instance", "metric", "mean_a", "mean_b", "delta_pct"])
        for row in report.rows:
            writer.writerow([
                row.instance, row.metric, _fmt(row.mean_a), _fmt(row.mean_b),
                "" if row.delta_pct is None else _fmt(row.delta_pct),
            ])
