"""Trace analysis: tag matching, FPS series, stage attribution, estimators.

The round-trip time of an input is the client-clock interval between its
hook1 (tagged send) and the hook10 that delivered a frame carrying its tag.
Stage attribution pulls the per-tag path out of the spans; whatever part of
the RTT no stage claims is reported as QUEUE (input-queue wait, pipeline
gaps, handoff backpressure, residual network). Two rival estimators are
implemented for bias studies: the offline stage sum (CS+SP+AL+CP+SS, which
omits the IPC stages and all queueing) and the slow-motion gated mode
(realized in the runners; here it is just measured like any other run).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Optional, Sequence

from renderbench.core import HookId, StageKind
from renderbench.errors import (
    DuplicateTagInTrace,
    MissingStage,
    ZeroReference,
)

# Stages whose durations add up along a tag's path (RD overlaps the path and
# is reported but not summed; QUEUE is the residual).
_ADDITIVE = (
    StageKind.CS, StageKind.SP, StageKind.PS, StageKind.AL, StageKind.FC,
    StageKind.FC_START, StageKind.FC_END, StageKind.AS, StageKind.CP,
    StageKind.SS,
)

OFFLINE_SUM_STAGES = (
    StageKind.CS, StageKind.SP, StageKind.AL, StageKind.CP, StageKind.SS,
)


class MeasureMode(str, Enum):
    FULL = "FULL"
    SLOW_MOTION = "SLOW_MOTION"
    OFFLINE_SUM = "OFFLINE_SUM"


@dataclass(frozen=True)
class DistributionSummary:
    count: int
    mean: float
    p1: float
    p25: float
    p75: float
    p99: float


def summarize(values: Sequence) -> DistributionSummary:
    """Arithmetic mean plus nearest-rank percentiles (1, 25, 75, 99)."""
    if not values:
        raise ValueError("summarize() needs at least one value")
    ordered = sorted(values)
    n = len(ordered)

    def rank(q: int):
        idx = max(1, -(-q * n // 100))  # ceil(q*n/100), 1-indexed
        return ordered[idx - 1]

    return DistributionSummary(
        count=n,
        mean=sum(ordered) / n,
        p1=rank(1),
        p25=rank(25),
        p75=rank(75),
        p99=rank(99),
    )


def percent_error(est_mean, ref_mean):
    """|est - ref| / ref, as a fraction."""
    if ref_mean == 0:
        raise ZeroReference("reference mean is zero")
    return abs(est_mean - ref_mean) / ref_mean


@dataclass
class RttRecord:
    tag: int
    instance: int
    frame_seq: int
    t_send: int
    t_recv: int
    attribution: dict = field(default_factory=dict)

    @property
    def rtt(self):
        return self.t_recv - self.t_send

    @property
    def queue_wait(self):
        return self.attribution.get("QUEUE", 0)


@dataclass
class MatchResult:
    records: list[RttRecord]
    outstanding: list[int]          # tags sent but never answered
    unmatched_frame_tags: list[int]  # frame tags with no outstanding input


def _duration(span_rec: dict):
    return span_rec["t_end"] - span_rec["t_start"]


def match_rtts(records: list[dict], offset=0) -> MatchResult:
    """Join hook1 and hook10 events on tag and attribute stage durations.

    `offset` is the estimated server-minus-client clock offset; durations
    are clock-local so only the CS cross-clock edge depends on it (the CS
    span is emitted already corrected by the proxy's handshake estimate,
    so `offset` is only used for residual bookkeeping).
    """
    sends: dict[int, dict] = {}
    matched: dict[int, RttRecord] = {}
    unmatched_frame_tags: list[int] = []

    spans_by_frame: dict[tuple[int, int], dict[str, dict]] = {}
    spans_by_tag: dict[tuple[str, int], dict] = {}

    for rec in records:
        if rec["type"] == "span":
            stage = rec["stage"]
            if rec["tag"] and stage in (StageKind.CS.value, StageKind.SP.value,
                                        StageKind.PS.value):
                spans_by_tag[(stage, rec["tag"])] = rec
            if rec["frame"] or stage not in (StageKind.CS.value, StageKind.SP.value,
                                             StageKind.PS.value):
                spans_by_frame.setdefault((rec["instance"], rec["frame"]), {})[stage] = rec
        elif rec["type"] == "hook":
            if rec["hook"] == HookId.CLIENT_INPUT_CAPTURE:
                if rec["tag"] in sends:
                    raise DuplicateTagInTrace(f"tag {rec['tag']} sent twice")
                sends[rec["tag"]] = rec

    for rec in records:
        if rec["type"] != "hook" or rec["hook"] != HookId.CLIENT_FRAME_RECV:
            continue
        for tag in rec.get("tags", []):
            if tag == 0:
                continue
            if tag in matched:
                raise DuplicateTagInTrace(f"tag {tag} matched twice")
            sent = sends.get(tag)
            if sent is None:
                unmatched_frame_tags.append(tag)
                continue
            matched[tag] = RttRecord(
                tag=tag,
                instance=rec["instance"],
                frame_seq=rec["frame"],
                t_send=sent["t"],
                t_recv=rec["t"],
            )

    for record in matched.values():
        attribution: dict = {}
        for stage_name in (StageKind.CS.value, StageKind.SP.value, StageKind.PS.value):
            span = spans_by_tag.get((stage_name, record.tag))
            if span is not None:
                attribution[stage_name] = _duration(span)
        frame_spans = spans_by_frame.get((record.instance, record.frame_seq), {})
        for kind in (StageKind.AL, StageKind.RD, StageKind.FC, StageKind.FC_START,
                     StageKind.FC_END, StageKind.AS, StageKind.CP, StageKind.SS):
            span = frame_spans.get(kind.value)
            if span is not None:
                attribution[kind.value] = _duration(span)
        additive = sum(attribution.get(k.value, 0) for k in _ADDITIVE)
        attribution["QUEUE"] = record.rtt - additive
        record.attribution = attribution

    outstanding = [tag for tag in sends if tag not in matched]
    ordered = sorted(matched.values(), key=lambda r: (r.t_send, r.tag))
    return MatchResult(records=ordered, outstanding=outstanding,
                       unmatched_frame_tags=unmatched_frame_tags)


def offline_sum_estimate(record: RttRecord):
    """Chen-style stage-sum estimate: CS+SP+AL+CP+SS for this tag's path.

    Deliberately omits PS, FC, AS and every queueing term; raises
    MissingStage when a required span was not captured.
    """
    total = 0
    for kind in OFFLINE_SUM_STAGES:
        if kind.value not in record.attribution:
            raise MissingStage(f"tag {record.tag}: no {kind.value} span")
        total += record.attribution[kind.value]
    return total


def offline_sum_estimates(records: Sequence[RttRecord]) -> list:
    return [offline_sum_estimate(r) for r in records]


def fps_series(records: list[dict], hook: HookId, window_ns: int = 1_000_000_000,
               ) -> dict[int, list[int]]:
    """Per-instance frame counts in tumbling windows anchored at run start.

    Server FPS uses hook8 (proxy frame receipt), client FPS hook10. The
    anchor is the run_start meta record's clock-matching field; trailing
    empty windows up to run_end are included.
    """
    t0_client = t0_server = None
    t_end_client = t_end_server = None
    for rec in records:
        if rec["type"] == "meta" and rec["kind"] == "run_start":
            t0_client = rec.get("t_client", rec["t"])
            t0_server = rec.get("t_server", rec["t"])
        if rec["type"] == "meta" and rec["kind"] == "run_end":
            t_end_client = rec.get("t_client", rec["t"])
            t_end_server = rec.get("t_server", rec["t"])

    t0 = t0_server if hook == HookId.PROXY_FRAME_RECV else t0_client
    t_end = t_end_server if hook == HookId.PROXY_FRAME_RECV else t_end_client

    events: dict[int, list] = {}
    for rec in records:
        if rec["type"] == "hook" and rec["hook"] == hook:
            events.setdefault(rec["instance"], []).append(rec["t"])

    series: dict[int, list[int]] = {}
    for instance, times in events.items():
        if t0 is None:
            t0 = min(times)
        last = t_end if t_end is not None else max(times)
        n_windows = int((last - t0) // window_ns)  # complete windows only
        if n_windows < 1:
            continue
        counts = [0] * n_windows
        for t in times:
            idx = int((t - t0) // window_ns)
            if 0 <= idx < n_windows:
                counts[idx] += 1
        series[instance] = counts
    return series


def pass_periods(records: list[dict], instance: int, warmup: int = 5) -> list:
    """Consecutive AL-start deltas for one instance, warmup passes dropped."""
    starts = sorted(
        (rec["pass"], rec["t_start"])
        for rec in records
        if rec["type"] == "span" and rec["stage"] == StageKind.AL.value
        and rec["instance"] == instance
    )
    times = [t for _, t in starts]
    deltas = [t2 - t1 for t1, t2 in zip(times, times[1:])]
    return deltas[warmup:]


def stage_durations(records: list[dict], instance: Optional[int] = None,
                    ) -> dict[str, list]:
    """All span durations grouped by stage kind (optionally one instance)."""
    out: dict[str, list] = {}
    for rec in records:
        if rec["type"] != "span":
            continue
        if instance is not None and rec["instance"] != instance:
            continue
        out.setdefault(rec["stage"], []).append(_duration(rec))
    return out


def exact_mean(values: Sequence):
    """Mean kept exact when inputs are ints/Fractions."""
    if not values:
        raise ValueError("empty")
    return Fraction(sum(Fraction(v) for v in values), len(values))
