import random

import pytest

from renderbench.agents import (
    ApmLimiter,
    PolicyTable,
    ReactivePolicy,
    ReplayPolicy,
    ScriptedPolicy,
    record_session,
    uniform_schedule,
)
from renderbench.core import AnnotationObject, Frame
from renderbench.errors import ConfigError, MissingAnnotation
from renderbench.workload import FrameSource, WorkloadConfig

MS = 1_000_000
S = 1_000_000_000

TABLE = PolicyTable(actions={1: b"FIRE", 2: b"LEFT", 3: b"RIGHT"}, default=b"NOOP")


def annotated_frame(objects, seq=0):
    return Frame(seq=seq, width=64, height=64, pixels=b"", tags=[],
                 annotation=objects)


class TestApmLimiter:
    def test_never_exceeds_cap_in_any_sliding_window(self):
        limiter = ApmLimiter(cap=60)
        rng = random.Random(5)
        emitted = []
        t = 0
        for _ in range(5000):
            t += rng.randint(0, 80 * MS)
            if limiter.admit(t):
                emitted.append(t)
        for i, start in enumerate(emitted):
            in_window = [e for e in emitted if start <= e < start + 60 * S]
            assert len(in_window) <= 60

    def test_next_allowed_progresses(self):
        limiter = ApmLimiter(cap=1)
        assert limiter.admit(0)
        assert not limiter.admit(1)
        assert limiter.next_allowed(1) == 60 * S
        assert limiter.admit(60 * S)

    def test_cap_validation(self):
        with pytest.raises(ConfigError):
            ApmLimiter(0)


class TestScripted:
    def test_schedule_emission(self):
        policy = ScriptedPolicy([(0, b"A"), (50 * MS, b"B")], ApmLimiter(10000))
        assert policy.take(0) == b"A"
        assert policy.take(10 * MS) is None  # B not due yet
        assert policy.take(50 * MS) == b"B"
        assert policy.done

    def test_apm_defers_second_action(self):
        policy = ScriptedPolicy([(0, b"A"), (MS, b"B")], ApmLimiter(1))
        assert policy.take(0) == b"A"
        assert policy.take(MS) is None  # capped
        assert policy.next_emit_time(MS) == 60 * S
        assert policy.take(60 * S) == b"B"

    def test_empty_schedule(self):
        policy = ScriptedPolicy([], ApmLimiter(10))
        assert policy.done and policy.next_emit_time(0) is None

    def test_uniform_schedule_spacing(self):
        sched = uniform_schedule(20, 5, start_ns=100)
        assert [t for t, _ in sched] == [100 + i * 50 * MS for i in range(5)]


class TestReactive:
    def test_lowest_class_then_lowest_instance_wins(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        frame = annotated_frame([
            AnnotationObject(class_id=3, x=1, y=1, instance=0),
            AnnotationObject(class_id=1, x=9, y=9, instance=1),
            AnnotationObject(class_id=1, x=5, y=5, instance=2),
        ])
        assert policy.decide(frame) == b"FIRE"

    def test_position_never_matters(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        rng = random.Random(2)
        for _ in range(200):
            objs = [AnnotationObject(class_id=2, x=rng.randint(0, 63),
                                     y=rng.randint(0, 63), instance=0)]
            assert policy.decide(annotated_frame(objs)) == b"LEFT"

    def test_unknown_class_gets_default(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        frame = annotated_frame([AnnotationObject(class_id=77, x=0, y=0, instance=0)])
        assert policy.decide(frame) == b"NOOP"

    def test_empty_annotation_no_action(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        assert policy.decide(annotated_frame([])) is None

    def test_missing_annotation_raises(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        with pytest.raises(MissingAnnotation):
            policy.decide(Frame(seq=0, width=2, height=2, pixels=b"\0" * 16))

    def test_default_latency_is_74_6_ms(self):
        policy = ReactivePolicy(TABLE, ApmLimiter(10000))
        assert policy.think_time_ns == 74_600_000


def _sources(seed=9):
    fixed = FrameSource(WorkloadConfig(width=48, height=48, object_count=2,
                                       class_ids=(1, 2, 3), placement="fixed",
                                       object_size=12), seed, 0)
    rand = FrameSource(WorkloadConfig(width=48, height=48, object_count=2,
                                      class_ids=(1, 2, 3), placement="random",
                                      object_size=12), seed, 0)
    return fixed, rand


class TestReplay:
    def test_identical_frame_issues_immediately(self):
        fixed, _ = _sources()
        session = record_session([fixed.frame(s, []) for s in range(3)], TABLE,
                                 delay_ns=0)
        policy = ReplayPolicy(session, tau=0.95, timeout_ns=2 * S)
        action = policy.offer_frame(fixed.frame(0, []), now=0)
        assert action is not None
        assert policy.marks == ["MATCHED"]

    def test_dissimilar_frames_time_out_delayed(self):
        fixed, rand = _sources()
        session = record_session([fixed.frame(s, []) for s in range(2)], TABLE,
                                 delay_ns=0)
        policy = ReplayPolicy(session, tau=0.95, timeout_ns=100 * MS)
        # random-placement frames rarely reach 95% byte equality
        assert policy.offer_frame(rand.frame(0, []), now=0) is None
        action = policy.offer_frame(rand.frame(1, []), now=150 * MS)
        assert action is not None
        assert policy.marks == ["DELAYED"]

    def test_records_consumed_strictly_in_order(self):
        fixed, _ = _sources()
        frames = [fixed.frame(s, []) for s in range(4)]
        session = record_session(frames, TABLE, delay_ns=10 * MS)
        policy = ReplayPolicy(session, tau=0.9, timeout_ns=S)
        issued = 0
        t = 0
        while not policy.done:
            t = max(t, policy.eligible_at())
            action = policy.offer_frame(frames[0], t)
            if action is not None:
                issued += 1
        assert issued == 4
        assert policy.marks == ["MATCHED"] * 4

    def test_not_eligible_before_recorded_delay(self):
        fixed, _ = _sources()
        session = record_session([fixed.frame(0, [])], TABLE, delay_ns=50 * MS)
        policy = ReplayPolicy(session, tau=0.5, timeout_ns=S)
        assert policy.offer_frame(fixed.frame(0, []), now=10 * MS) is None
        assert policy.offer_frame(fixed.frame(0, []), now=50 * MS) is not None

    def test_tau_validation(self):
        fixed, _ = _sources()
        session = record_session([fixed.frame(0, [])], TABLE, delay_ns=0)
        with pytest.raises(ConfigError):
            ReplayPolicy(session, tau=1.5)

    def test_empty_session_rejected(self):
        from renderbench.agents import RecordedSession

        with pytest.raises(ConfigError):
            RecordedSession(records=())
