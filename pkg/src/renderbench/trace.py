"""Trace records and collection.

Both execution modes (live harness, DES twin) emit the same line-delimited
schema so the metrics layer runs unchanged on either. Record shapes:

  span  {"type":"span","stage","instance","pass","tag","frame",
         "t_start","t_end","clock"}
  hook  {"type":"hook","hook","instance","t","clock","tag","frame","tags"?}
  meta  {"type":"meta","kind","t", ...kind-specific fields}

Timestamps are nanoseconds in the named clock domain. DES timestamps are
exact rationals in memory; serialization renders them as int when integral,
else float (the in-memory trace is what exactness checks consume).

Hook payload conventions: hooks 1-4 carry "tag"; 5-9 carry "frame" (8 also
carries the extracted "tag"); 10 carries "frame" plus the full "tags" list.
"""

from __future__ import annotations

import json
import threading
from fractions import Fraction
from typing import Iterable

from renderbench.core import Clock, HookId, StageKind, StageSpan


def _jsonable(value):
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else float(value)
    if isinstance(value, list):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    return value


class TraceCollector:
    """Thread-safe append-only event sink.

    `hooks_enabled=False` is the no-op instrumentation mode: hook and span
    records are dropped at the call site (meta records are kept; they are
    rare run bookkeeping, not per-stage instrumentation).
    """

    def __init__(self, hooks_enabled: bool = True):
        self.hooks_enabled = hooks_enabled
        self._records: list[dict] = []
        self._lock = threading.Lock()

    def __len__(self) -> int:
        return len(self._records)

    def emit_span(self, span: StageSpan) -> None:
        if not self.hooks_enabled:
            return
        self._append({
            "type": "span",
            "stage": span.stage.value,
            "instance": span.instance,
            "pass": span.pass_index,
            "tag": span.tag,
            "frame": span.frame_seq,
            "t_start": span.t_start,
            "t_end": span.t_end,
            "clock": span.clock.value,
        })

    def emit_hook(self, hook: HookId, instance: int, t, clock: Clock,
                  tag: int = 0, frame: int = 0, tags: list[int] | None = None) -> None:
        if not self.hooks_enabled:
            return
        rec = {
            "type": "hook",
            "hook": int(hook),
            "instance": instance,
            "t": t,
            "clock": clock.value,
            "tag": tag,
            "frame": frame,
        }
        if tags is not None:
            rec["tags"] = list(tags)
        self._append(rec)

    def emit_meta(self, kind: str, t, **fields) -> None:
        rec = {"type": "meta", "kind": kind, "t": t}
        rec.update(fields)
        self._append(rec)

    def _append(self, rec: dict) -> None:
        with self._lock:
            self._records.append(rec)

    def records(self) -> list[dict]:
        """Records sorted by timestamp (stable, so same-time causal order
        from the single-threaded DES is preserved)."""
        with self._lock:
            snapshot = list(self._records)
        return sorted(snapshot, key=lambda r: r.get("t", r.get("t_start", 0)))


def span_from_record(rec: dict) -> StageSpan:
    return StageSpan(
        stage=StageKind(rec["stage"]),
        instance=rec["instance"],
        pass_index=rec["pass"],
        tag=rec["tag"],
        frame_seq=rec["frame"],
        t_start=rec["t_start"],
        t_end=rec["t_end"],
        clock=Clock(rec["clock"]),
    )


def serialize_record(rec: dict) -> str:
    return json.dumps(_jsonable(rec), separators=(",", ":"))


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(serialize_record(rec))
            fh.write("\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
