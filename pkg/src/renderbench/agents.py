"""Input-generation policies.

Three ways to drive a client, replacing the CNN/RNN pilot with machinery
that keeps its timing and closed-loop structure:

  scripted  emit a fixed schedule of actions (open loop)
  reactive  parse the frame's annotation block, look the top object up in a
            policy table, emit after a configured perception + decision
            latency (closed loop; tolerant of random object placement)
  replay    DeskBench-style: issue a recorded action once the displayed
            frame is pixel-similar to the recorded reference frame, or on
            timeout (marked DELAYED)

All policies are paced by an actions-per-minute cap over a sliding 60 s
window. Default latencies: 72.7 ms perception, 1.9 ms decision, 804 APM.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from renderbench import kernels
from renderbench.core import Frame
from renderbench.errors import ConfigError, MissingAnnotation

DEFAULT_CV_LATENCY_NS = 72_700_000
DEFAULT_DECIDE_LATENCY_NS = 1_900_000
DEFAULT_APM_CAP = 804.0
DEFAULT_REPLAY_TAU = 0.95
DEFAULT_REPLAY_TIMEOUT_NS = 2_000_000_000

_WINDOW_NS = 60_000_000_000


@dataclass(frozen=True)
class PolicyTable:
    """Total map from object class to action payload."""

    actions: dict[int, bytes]
    default: bytes = b"NOOP"

    def action_for(self, class_id: int) -> bytes:
        return self.actions.get(class_id, self.default)


class ApmLimiter:
    """Sliding-window rate limiter: at most `cap` actions per 60 s."""

    def __init__(self, cap: float):
        if cap <= 0:
            raise ConfigError(f"apm_cap must be positive, got {cap}")
        self.cap = cap
        self._emits: deque = deque()

    def _prune(self, now) -> None:
        while self._emits and self._emits[0] <= now - _WINDOW_NS:
            self._emits.popleft()

    def admit(self, now) -> bool:
        self._prune(now)
        if len(self._emits) < self.cap:
            self._emits.append(now)
            return True
        return False

    def next_allowed(self, now):
        """Earliest time at which admit() would succeed."""
        self._prune(now)
        if len(self._emits) < self.cap:
            return now
        return self._emits[0] + _WINDOW_NS


@dataclass
class AgentStats:
    emitted: int = 0
    dropped_apm: int = 0
    replay_matched: int = 0
    replay_delayed: int = 0


class ScriptedPolicy:
    """Emits (time, action) pairs in order; over-cap actions are deferred."""

    def __init__(self, schedule: list[tuple[int, bytes]], limiter: ApmLimiter):
        self.schedule = sorted(schedule, key=lambda e: e[0])
        self.limiter = limiter
        self._idx = 0

    @property
    def done(self) -> bool:
        return self._idx >= len(self.schedule)

    def next_emit_time(self, now):
        """When the next action may fire, or None if exhausted."""
        if self.done:
            return None
        due = self.schedule[self._idx][0]
        return max(due, self.limiter.next_allowed(max(now, due)))

    def take(self, now) -> Optional[bytes]:
        """Emit the next action if it is due and the cap admits it."""
        if self.done or self.schedule[self._idx][0] > now:
            return None
        if not self.limiter.admit(now):
            return None
        action = self.schedule[self._idx][1]
        self._idx += 1
        return action


def uniform_schedule(rate_per_s: float, count: int, start_ns: int = 0,
                     action: bytes = b"KEY") -> list[tuple[int, bytes]]:
    spacing = int(round(1e9 / rate_per_s))
    return [(start_ns + i * spacing, action) for i in range(count)]


class ReactivePolicy:
    """Table lookup on the highest-priority annotated object.

    Priority is lowest class_id, ties broken by lowest object instance id;
    position never matters, which is exactly what makes this tolerant of
    randomly placed objects. Over-cap reactions are dropped (a player does
    not queue stale reactions).
    """

    def __init__(self, table: PolicyTable, limiter: ApmLimiter,
                 cv_latency_ns: int = DEFAULT_CV_LATENCY_NS,
                 decide_latency_ns: int = DEFAULT_DECIDE_LATENCY_NS):
        self.table = table
        self.limiter = limiter
        self.cv_latency_ns = cv_latency_ns
        self.decide_latency_ns = decide_latency_ns

    @property
    def think_time_ns(self) -> int:
        return self.cv_latency_ns + self.decide_latency_ns

    def decide(self, frame: Frame) -> Optional[bytes]:
        """Action for this frame, ignoring latency and pacing."""
        if frame.annotation is None:
            raise MissingAnnotation(f"frame {frame.seq} has no annotation block")
        if not frame.annotation:
            return None
        top = min(frame.annotation, key=lambda o: (o.class_id, o.instance))
        return self.table.action_for(top.class_id)


@dataclass(frozen=True)
class ReplayRecord:
    reference_pixels: bytes
    action: bytes
    delay_ns: int  # inter-action delay recorded before this action


@dataclass(frozen=True)
class RecordedSession:
    records: tuple[ReplayRecord, ...]

    def __post_init__(self):
        if not self.records:
            raise ConfigError("replay needs a non-empty recorded session")


class ReplayPolicy:
    """Frame-match replay of a recorded session.

    A record becomes eligible `delay_ns` after the previous action was
    issued; from then on each displayed frame is compared byte-for-byte
    against the reference, and the action fires on similarity >= tau or on
    timeout (marked DELAYED).
    """

    def __init__(self, session: RecordedSession, tau: float = DEFAULT_REPLAY_TAU,
                 timeout_ns: int = DEFAULT_REPLAY_TIMEOUT_NS):
        if not 0.0 <= tau <= 1.0:
            raise ConfigError(f"tau must be in [0, 1], got {tau}")
        self.session = session
        self.tau = tau
        self.timeout_ns = timeout_ns
        self._idx = 0
        self._eligible_at = session.records[0].delay_ns
        self.marks: list[str] = []

    @property
    def done(self) -> bool:
        return self._idx >= len(self.session.records)

    def eligible_at(self):
        return None if self.done else self._eligible_at

    def deadline(self):
        return None if self.done else self._eligible_at + self.timeout_ns

    def _advance(self, now) -> None:
        self._idx += 1
        if not self.done:
            self._eligible_at = now + self.session.records[self._idx].delay_ns

    def offer_frame(self, frame: Frame, now) -> Optional[bytes]:
        """Try the current record against a displayed frame."""
        if self.done or now < self._eligible_at:
            return None
        record = self.session.records[self._idx]
        similarity = kernels.equal_fraction(frame.pixels, record.reference_pixels)
        if similarity >= self.tau:
            self.marks.append("MATCHED")
            action = record.action
            self._advance(now)
            return action
        if now >= self._eligible_at + self.timeout_ns:
            return self.timed_out(now)
        return None

    def timed_out(self, now) -> Optional[bytes]:
        """Issue the current record on timeout, marking it DELAYED."""
        if self.done or now < self._eligible_at + self.timeout_ns:
            return None
        record = self.session.records[self._idx]
        self.marks.append("DELAYED")
        self._advance(now)
        return record.action

    @property
    def delayed_fraction(self) -> float:
        return self.marks.count("DELAYED") / len(self.marks) if self.marks else 0.0


def record_session(frames: list[Frame], table: PolicyTable,
                   delay_ns: int) -> RecordedSession:
    """Build a replay session from a reference frame stream.

    Each frame contributes one record whose action is what the reactive
    policy would do (table lookup on the top object), spaced `delay_ns`
    apart, mirroring how a human recording session is captured.
    """
    records = []
    for frame in frames:
        if frame.annotation:
            top = min(frame.annotation, key=lambda o: (o.class_id, o.instance))
            action = table.action_for(top.class_id)
        else:
            action = table.default
        records.append(ReplayRecord(reference_pixels=frame.pixels, action=action,
                                    delay_ns=delay_ns))
    return RecordedSession(records=tuple(records))
