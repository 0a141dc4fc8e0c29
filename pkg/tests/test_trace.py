import json
from fractions import Fraction

from renderbench.core import Clock, HookId, StageKind, StageSpan
from renderbench.trace import (
    TraceCollector,
    read_jsonl,
    serialize_record,
    span_from_record,
    write_jsonl,
)


def _span(**kw):
    base = dict(stage=StageKind.AL, instance=0, pass_index=1, tag=0,
                frame_seq=1, t_start=10, t_end=20, clock=Clock.SERVER)
    base.update(kw)
    return StageSpan(**base)


def test_fraction_serialization():
    rec = {"type": "meta", "kind": "x", "t": Fraction(22, 1),
           "extra": Fraction(1, 3)}
    out = json.loads(serialize_record(rec))
    assert out["t"] == 22 and isinstance(out["t"], int)
    assert abs(out["extra"] - 1 / 3) < 1e-12


def test_roundtrip_jsonl(tmp_path):
    collector = TraceCollector()
    collector.emit_span(_span())
    collector.emit_hook(HookId.CLIENT_INPUT_CAPTURE, 0, 5, Clock.CLIENT, tag=9)
    collector.emit_meta("run_start", 0, t_client=0, t_server=0)
    path = tmp_path / "trace.jsonl"
    write_jsonl(path, collector.records())
    back = read_jsonl(path)
    assert len(back) == 3
    kinds = {r["type"] for r in back}
    assert kinds == {"span", "hook", "meta"}
    span = next(r for r in back if r["type"] == "span")
    assert span_from_record(span) == _span()


def test_noop_mode_drops_instrumentation():
    collector = TraceCollector(hooks_enabled=False)
    collector.emit_span(_span())
    collector.emit_hook(HookId.CLIENT_INPUT_CAPTURE, 0, 5, Clock.CLIENT, tag=9)
    collector.emit_meta("run_start", 0)
    assert [r["type"] for r in collector.records()] == ["meta"]


def test_records_sorted_by_time_stable():
    collector = TraceCollector()
    collector.emit_hook(HookId.CLIENT_INPUT_CAPTURE, 0, 50, Clock.CLIENT, tag=1)
    collector.emit_hook(HookId.CLIENT_INPUT_CAPTURE, 0, 10, Clock.CLIENT, tag=2)
    collector.emit_hook(HookId.CLIENT_INPUT_CAPTURE, 0, 10, Clock.CLIENT, tag=3)
    tags = [r["tag"] for r in collector.records()]
    assert tags == [2, 3, 1]  # time order, insertion-stable on ties
