import random

import pytest

from renderbench.core import Clock, HookId
from renderbench.errors import (
    DuplicateTagInTrace,
    MissingStage,
    ZeroReference,
)
from renderbench.metrics import (
    RttRecord,
    fps_series,
    match_rtts,
    offline_sum_estimate,
    percent_error,
    summarize,
)

MS = 1_000_000


def hook(h, t, tag=0, frame=0, tags=None, instance=0):
    rec = {"type": "hook", "hook": int(h), "instance": instance, "t": t,
           "clock": "CLIENT" if h in (1, 10) else "SERVER", "tag": tag,
           "frame": frame}
    if tags is not None:
        rec["tags"] = tags
    return rec


def span(stage, t0, t1, tag=0, frame=0, instance=0, pass_index=0):
    return {"type": "span", "stage": stage, "instance": instance,
            "pass": pass_index, "tag": tag, "frame": frame, "t_start": t0,
            "t_end": t1, "clock": "SERVER"}


class TestMatchRtts:
    def test_worked_example(self):
        records = [
            hook(HookId.CLIENT_INPUT_CAPTURE, 100 * MS, tag=7),
            hook(HookId.CLIENT_FRAME_RECV, 180 * MS, frame=3, tags=[7]),
        ]
        result = match_rtts(records)
        assert len(result.records) == 1
        assert result.records[0].rtt == 80 * MS
        assert result.outstanding == []

    def test_outstanding_and_unmatched(self):
        records = [
            hook(HookId.CLIENT_INPUT_CAPTURE, 0, tag=1),
            hook(HookId.CLIENT_INPUT_CAPTURE, 5, tag=2),
            hook(HookId.CLIENT_FRAME_RECV, 50, frame=1, tags=[1]),
            hook(HookId.CLIENT_FRAME_RECV, 60, frame=2, tags=[99]),
        ]
        result = match_rtts(records)
        assert [r.tag for r in result.records] == [1]
        assert result.outstanding == [2]
        assert result.unmatched_frame_tags == [99]

    def test_duplicate_send_is_hard_failure(self):
        records = [
            hook(HookId.CLIENT_INPUT_CAPTURE, 0, tag=1),
            hook(HookId.CLIENT_INPUT_CAPTURE, 5, tag=1),
        ]
        with pytest.raises(DuplicateTagInTrace):
            match_rtts(records)

    def test_duplicate_match_is_hard_failure(self):
        records = [
            hook(HookId.CLIENT_INPUT_CAPTURE, 0, tag=1),
            hook(HookId.CLIENT_FRAME_RECV, 10, frame=1, tags=[1]),
            hook(HookId.CLIENT_FRAME_RECV, 20, frame=2, tags=[1]),
        ]
        with pytest.raises(DuplicateTagInTrace):
            match_rtts(records)

    def test_attribution_and_queue_residual(self):
        records = [
            hook(HookId.CLIENT_INPUT_CAPTURE, 0, tag=1),
            span("CS", 0, 5, tag=1),
            span("SP", 5, 6, tag=1),
            span("PS", 6, 9, tag=1),
            span("AL", 9, 29, tag=1, frame=4),
            span("FC", 40, 52, frame=4),
            span("AS", 52, 56, frame=4),
            span("CP", 56, 66, frame=4),
            span("SS", 66, 81, frame=4),
            hook(HookId.CLIENT_FRAME_RECV, 81, frame=4, tags=[1]),
        ]
        rec = match_rtts(records).records[0]
        att = rec.attribution
        assert att["CS"] == 5 and att["AL"] == 20 and att["FC"] == 12
        # gap 29->40 between AL end and FC start is the queue residual
        assert att["QUEUE"] == 11
        assert rec.rtt == sum(att[k] for k in
                              ("CS", "SP", "PS", "AL", "FC", "AS", "CP", "SS",
                               "QUEUE"))


class TestOfflineSum:
    def test_worked_example_sum(self):
        rec = RttRecord(tag=1, instance=0, frame_seq=0, t_send=0, t_recv=70 * MS)
        rec.attribution = {"CS": 5 * MS, "SP": 1 * MS, "AL": 20 * MS,
                           "CP": 10 * MS, "SS": 15 * MS, "PS": 3 * MS,
                           "FC": 12 * MS, "AS": 4 * MS, "QUEUE": 0}
        assert offline_sum_estimate(rec) == 51 * MS
        # underestimates the true 70 ms RTT by exactly the omitted terms
        assert rec.rtt - offline_sum_estimate(rec) == 19 * MS

    def test_missing_stage(self):
        rec = RttRecord(tag=1, instance=0, frame_seq=0, t_send=0, t_recv=10)
        rec.attribution = {"CS": 1, "SP": 1, "AL": 1, "CP": 1}  # no SS
        with pytest.raises(MissingStage):
            offline_sum_estimate(rec)


class TestFpsSeries:
    def _records(self, times, t_end=None):
        recs = [{"type": "meta", "kind": "run_start", "t": 0, "t_client": 0,
                 "t_server": 0}]
        recs += [hook(HookId.CLIENT_FRAME_RECV, t, frame=i, tags=[])
                 for i, t in enumerate(times)]
        if t_end is not None:
            recs.append({"type": "meta", "kind": "run_end", "t": t_end,
                         "t_client": t_end, "t_server": t_end})
        return recs

    def test_120_uniform_frames_in_one_second(self):
        times = [int(i * 1e9 / 120) for i in range(120)]
        series = fps_series(self._records(times, t_end=1_000_000_000),
                            HookId.CLIENT_FRAME_RECV)
        assert series[0] == [120]

    def test_empty_window_is_zero(self):
        times = [100, int(2.5e9)]
        series = fps_series(self._records(times, t_end=3_000_000_000),
                            HookId.CLIENT_FRAME_RECV)
        assert series[0] == [1, 0, 1]

    def test_partial_trailing_window_dropped(self):
        times = [100, int(1.5e9)]
        series = fps_series(self._records(times, t_end=1_600_000_000),
                            HookId.CLIENT_FRAME_RECV)
        assert series[0] == [1]


class TestSummarize:
    def test_uniform_ranks(self):
        s = summarize(list(range(1, 101)))
        assert (s.p1, s.p25, s.p75, s.p99) == (1, 25, 75, 99)
        assert s.mean == 50.5 and s.count == 100

    def test_single_value(self):
        s = summarize([7])
        assert (s.mean, s.p1, s.p25, s.p75, s.p99, s.count) == (7, 7, 7, 7, 7, 1)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            summarize([])

    def test_matches_brute_force_oracle(self):
        rng = random.Random(17)
        for _ in range(200):
            values = [rng.randint(-1000, 1000) for _ in range(rng.randint(1, 400))]
            s = summarize(values)
            n = len(values)
            for q, got in ((1, s.p1), (25, s.p25), (75, s.p75), (99, s.p99)):
                # independent nearest-rank: smallest v with >= ceil(q*n/100)
                # values <= v
                rank = max(1, -(-q * n // 100))
                oracle = sorted(values)[rank - 1]
                assert got == oracle


class TestPercentError:
    def test_examples(self):
        assert abs(percent_error(101.6, 100) - 0.016) < 1e-12
        assert percent_error(5, 5) == 0
        assert abs(percent_error(88.4, 100) - 0.116) < 1e-12

    def test_zero_reference(self):
        with pytest.raises(ZeroReference):
            percent_error(1, 0)
