"""Live-mode runner: real threads, real sockets, real sleeps.

Mirrors the DES twin's sequencing exactly (same pass structure, same
sampler streams), but stage costs are realized by sleeping and the wire is
loopback TCP, so measured periods approach the virtual-time ones within
scheduler noise. One process hosts both ends; client and server still run
on separate clock domains (the server clock can be offset in the scenario
to exercise the sync correction).
"""

from __future__ import annotations

import queue
import socket
import threading
import time
from dataclasses import dataclass, replace

from renderbench.agents import (
    AgentStats,
    ApmLimiter,
    ReactivePolicy,
    ReplayPolicy,
    ScriptedPolicy,
    PolicyTable,
    record_session,
    uniform_schedule,
)
from renderbench.clocks import ClockDomain
from renderbench.core import Clock, HookId, StageKind, StageSpan, embed_tag
from renderbench.costs import Sampler
from renderbench.device import (
    CopyEngine,
    PcieArbiter,
    RenderCmd,
    TimeQueryPair,
    VirtualGpu,
    WindowAttributeService,
    sleep_until,
)
from renderbench.errors import InvariantError
from renderbench.metrics import MeasureMode
from renderbench.pipeline import PipelineVariant
from renderbench.proxies import (
    CHANNEL_FRAME,
    CHANNEL_INPUT,
    ClientProxy,
    ServerProxy,
    pixel_digest,
    read_hello,
)
from renderbench.scenario import InstanceConfig, ScenarioConfig
from renderbench.trace import TraceCollector
from renderbench.workload import FrameSource

_SENTINEL = object()


@dataclass
class HarnessResult:
    records: list[dict]
    counters: dict
    scenario: ScenarioConfig
    variant: PipelineVariant
    measure: MeasureMode
    offset_estimates: dict[int, float]
    agent_stats: dict[int, AgentStats]
    elapsed_ns: int


class _HarnessInstance:
    def __init__(self, run: "HarnessRun", idx: int, cfg: InstanceConfig):
        self.idx = idx
        self.cfg = cfg
        seed = run.seed
        self.al = Sampler(cfg.costs.al, seed, "al", idx)
        self.rd = Sampler(cfg.costs.rd, seed, "rd", idx)
        self.frame_bytes = Sampler(cfg.costs.frame_bytes, seed, "bytes", idx)
        self.attr_sampler = Sampler(cfg.attr, seed, "attr", idx)
        self.samplers = {
            "sp": Sampler(run.scenario.proxy.sp_cost, seed, "sp", idx),
            "ipc": Sampler(run.scenario.proxy.ipc_cost, seed, "ipc-ps", idx),
            "cp": Sampler(run.scenario.proxy.compress_cost, seed, "cp", idx),
            "net_down": Sampler(run.scenario.proxy.net_down, seed, "net-down", idx),
        }
        self.ipc_as = Sampler(run.scenario.proxy.ipc_cost, seed, "ipc-as", idx)
        self.client_samplers = {
            "net_up": Sampler(run.scenario.proxy.net_up, seed, "net-up", idx),
        }
        self.source = FrameSource(cfg.workload, seed, idx)
        self.pending: list[tuple[int, int]] = []
        self.pending_lock = threading.Lock()
        self.attr_service = WindowAttributeService(
            self.attr_sampler, cfg.workload.width, cfg.workload.height
        )
        self.queries = TimeQueryPair(
            "single" if run.scenario.queries == "single" else "double"
        )
        self.copy_engine = CopyEngine(run.arbiter, run.scenario.device.pcie_latency_ns, idx)
        self.app_to_sender: queue.Queue = queue.Queue(maxsize=1)
        self.server_proxy: ServerProxy | None = None
        self.client: ClientProxy | None = None
        self.passes_done = 0

    def enqueue_input(self, tag: int, t3: int) -> None:
        with self.pending_lock:
            self.pending.append((tag, t3))

    def drain_inputs(self) -> list[tuple[int, int]]:
        with self.pending_lock:
            drained, self.pending = self.pending, []
        return drained


class HarnessRun:
    def __init__(self, scenario: ScenarioConfig, variant: PipelineVariant,
                 measure: MeasureMode, seed: int):
        if measure == MeasureMode.OFFLINE_SUM:
            measure_behavior = MeasureMode.FULL  # estimator is post-hoc
        else:
            measure_behavior = measure
        self.scenario = scenario
        self.variant = variant
        self.measure = measure
        self.seed = seed
        self.slow_motion = measure_behavior == MeasureMode.SLOW_MOTION
        self.trace = TraceCollector(hooks_enabled=scenario.hooks_enabled)
        self.client_clock = ClockDomain(0)
        self.server_clock = ClockDomain(scenario.server_clock_offset_ns)
        n = len(scenario.instances)
        self.mem_factor = 1 + scenario.resources.memory_contention_c * (n - 1)
        self.gpu = VirtualGpu(on_span=self.trace.emit_span)
        self.arbiter = PcieArbiter(scenario.device.pcie_bandwidth)
        self.stop = threading.Event()       # hard stop: sockets unwind
        self.soft_stop = threading.Event()  # pipelines break at pass boundary
        self.errors: list[BaseException] = []
        self.instances = [
            _HarnessInstance(self, i, cfg) for i, cfg in enumerate(scenario.instances)
        ]
        self._threads: list[threading.Thread] = []

    # --- wiring ---------------------------------------------------------------

    def _on_error(self, exc: BaseException) -> None:
        self.errors.append(exc)
        self.soft_stop.set()
        self.stop.set()

    def _spawn(self, fn, *args, name: str) -> threading.Thread:
        def guarded():
            try:
                fn(*args)
            except Exception as exc:
                self._on_error(exc)

        t = threading.Thread(target=guarded, name=name, daemon=True)
        t.start()
        self._threads.append(t)
        return t

    def _accept_loop(self, listener: socket.socket, expected: int) -> None:
        accepted = 0
        listener.settimeout(0.5)
        while accepted < expected and not self.stop.is_set():
            try:
                sock, _ = listener.accept()
            except socket.timeout:
                continue
            sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            instance, channel = read_hello(sock)
            self.instances[instance].server_proxy.attach(sock, channel)
            accepted += 1
        listener.close()

    # --- pipeline -------------------------------------------------------------

    def _handoff(self, inst: _HarnessInstance, frame) -> threading.Event:
        self.trace.emit_meta("frame_hash", self.server_clock.now(),
                             where="pre_embed", instance=inst.idx,
                             frame=frame.seq, sha=pixel_digest(frame.pixels))
        stash = None
        if frame.tags and frame.pixels:
            frame, stash = embed_tag(frame, frame.primary_tag)
        sent_event = threading.Event()
        self._queue_put(inst.app_to_sender, (frame, stash, sent_event))
        return sent_event

    def _queue_put(self, q: queue.Queue, item) -> None:
        while not self.stop.is_set():
            try:
                q.put(item, timeout=0.1)
                return
            except queue.Full:
                continue

    def _server_now(self) -> int:
        return self.server_clock.now()

    def _pipeline_loop(self, inst: _HarnessInstance) -> None:
        variant = self.variant
        queries_mode = self.scenario.queries
        prev = None            # (frame, handle, nbytes)
        pending_ticket = None
        last_sent: threading.Event | None = None
        k = 0
        while (self.passes is None or k < self.passes) and not self.soft_stop.is_set():
            if self.slow_motion and last_sent is not None:
                while not last_sent.wait(timeout=0.1):
                    if self.soft_stop.is_set():
                        break
            t_pass = self._server_now()
            tags = []
            for tag, t3 in inst.drain_inputs():
                self.trace.emit_hook(HookId.APP_INPUT_RECV, inst.idx, t_pass,
                                     Clock.SERVER, tag=tag)
                self.trace.emit_span(StageSpan(
                    stage=StageKind.PS, instance=inst.idx, pass_index=k, tag=tag,
                    frame_seq=0, t_start=t3, t_end=t_pass, clock=Clock.SERVER,
                ))
                tags.append(tag)

            al_cost = int(round(inst.al() * self.mem_factor))
            if al_cost:
                sleep_until(time.monotonic_ns() + al_cost)
            t_al_end = self._server_now()
            self.trace.emit_span(StageSpan(
                stage=StageKind.AL, instance=inst.idx, pass_index=k,
                tag=tags[0] if tags else 0, frame_seq=k, t_start=t_pass,
                t_end=t_al_end, clock=Clock.SERVER,
            ))
            frame = inst.source.frame(k, tags, with_pixels=True)
            nbytes = max(1, inst.frame_bytes())

            self.trace.emit_hook(HookId.RENDER_SUBMIT, inst.idx,
                                 self._server_now(), Clock.SERVER, frame=k)
            handle = self.gpu.submit(RenderCmd(inst.idx, k, inst.rd(), nbytes))
            if queries_mode != "off":
                inst.queries.issue(k, handle)

            t_q0 = self._server_now()
            inst.attr_service.query(memoized=variant.memoized)
            self.trace.emit_span(StageSpan(
                stage=StageKind.ATTR_QUERY, instance=inst.idx, pass_index=k,
                tag=0, frame_seq=k, t_start=t_q0, t_end=self._server_now(),
                clock=Clock.SERVER,
            ))

            if queries_mode == "double":
                inst.queries.read_previous(k)  # never blocks
            elif queries_mode == "single":
                inst.queries.read(0)           # stalls until render k completes

            if variant.twostep:
                new_ticket = None
                if prev is not None:
                    self.trace.emit_hook(HookId.READBACK_START, inst.idx,
                                         self._server_now(), Clock.SERVER,
                                         frame=prev[0].seq)
                    new_ticket = inst.copy_engine.start(prev[1], prev[2])
                    new_ticket.frame = prev[0]
                    t_now = self._server_now()
                    self.trace.emit_span(StageSpan(
                        stage=StageKind.FC_START, instance=inst.idx, pass_index=k,
                        tag=0, frame_seq=prev[0].seq, t_start=t_now, t_end=t_now,
                        clock=Clock.SERVER,
                    ))
                if pending_ticket is not None:
                    t_f0 = self._server_now()
                    inst.copy_engine.finish(pending_ticket)
                    self.trace.emit_span(StageSpan(
                        stage=StageKind.FC_END, instance=inst.idx, pass_index=k,
                        tag=0, frame_seq=pending_ticket.frame.seq, t_start=t_f0,
                        t_end=self._server_now(), clock=Clock.SERVER,
                    ))
                    last_sent = self._handoff(inst, pending_ticket.frame)
                pending_ticket = new_ticket
            elif prev is not None:
                self.trace.emit_hook(HookId.READBACK_START, inst.idx,
                                     self._server_now(), Clock.SERVER,
                                     frame=prev[0].seq)
                t_f0 = self._server_now()
                inst.copy_engine.copy_sync(prev[1], prev[2])
                self.trace.emit_span(StageSpan(
                    stage=StageKind.FC, instance=inst.idx, pass_index=k, tag=0,
                    frame_seq=prev[0].seq, t_start=t_f0, t_end=self._server_now(),
                    clock=Clock.SERVER,
                ))
                last_sent = self._handoff(inst, prev[0])

            prev = (frame, handle, nbytes)
            k += 1

        inst.passes_done = k
        if not self.stop.is_set():
            # flush frames still in flight so consumed tags get answered
            if variant.twostep and pending_ticket is not None:
                t_f0 = self._server_now()
                inst.copy_engine.finish(pending_ticket)
                self.trace.emit_span(StageSpan(
                    stage=StageKind.FC_END, instance=inst.idx, pass_index=k, tag=0,
                    frame_seq=pending_ticket.frame.seq, t_start=t_f0,
                    t_end=self._server_now(), clock=Clock.SERVER,
                ))
                self._handoff(inst, pending_ticket.frame)
            if prev is not None:
                t_f0 = self._server_now()
                inst.copy_engine.copy_sync(prev[1], prev[2])
                self.trace.emit_span(StageSpan(
                    stage=StageKind.FC_END if variant.twostep else StageKind.FC,
                    instance=inst.idx, pass_index=k, tag=0, frame_seq=prev[0].seq,
                    t_start=t_f0, t_end=self._server_now(), clock=Clock.SERVER,
                ))
                self._handoff(inst, prev[0])
        self._queue_put(inst.app_to_sender, _SENTINEL)

    def _sender_loop(self, inst: _HarnessInstance) -> None:
        while not self.stop.is_set():
            try:
                item = inst.app_to_sender.get(timeout=0.1)
            except queue.Empty:
                continue
            if item is _SENTINEL:
                inst.server_proxy.handoff.put(None, self.stop)
                return
            frame, stash, sent_event = item
            t7 = self._server_now()
            self.trace.emit_hook(HookId.APP_FRAME_PUSH, inst.idx, t7,
                                 Clock.SERVER, frame=frame.seq)
            ipc = inst.ipc_as()
            if ipc:
                time.sleep(ipc / 1e9)
            taken = inst.server_proxy.handoff.put((frame, stash, sent_event),
                                                  self.stop)
            taken.wait(timeout=30)
            self.trace.emit_span(StageSpan(
                stage=StageKind.AS, instance=inst.idx, pass_index=-1,
                tag=frame.primary_tag, frame_seq=frame.seq, t_start=t7,
                t_end=self._server_now(), clock=Clock.SERVER,
            ))

    # --- agents ----------------------------------------------------------------

    def _build_table(self, inst: _HarnessInstance) -> PolicyTable:
        spec = inst.cfg.agent
        if spec.table:
            return PolicyTable(actions=dict(spec.table), default=spec.default_action)
        actions = {c: f"ACT{c}".encode() for c in inst.cfg.workload.class_ids}
        return PolicyTable(actions=actions, default=spec.default_action)

    def _sleep_until_ns(self, deadline: int) -> bool:
        """Sleep in slices until `deadline` (client clock); False on stop."""
        while True:
            remaining = deadline - self.client_clock.now()
            if remaining <= 0:
                return True
            if self.soft_stop.is_set():
                return False
            time.sleep(min(remaining / 1e9, 0.05))

    def _scripted_agent(self, inst: _HarnessInstance) -> None:
        spec = inst.cfg.agent
        policy = ScriptedPolicy(
            uniform_schedule(spec.rate_per_s, spec.count, spec.start_ns),
            ApmLimiter(spec.apm_cap),
        )
        base = self.client_clock.now()
        while not policy.done:
            t_next = policy.next_emit_time(self.client_clock.now() - base)
            if not self._sleep_until_ns(base + t_next):
                return
            action = policy.take(self.client_clock.now() - base)
            if action is not None:
                inst.client.send_action(action)

    def _reactive_agent(self, inst: _HarnessInstance) -> None:
        spec = inst.cfg.agent
        limiter = ApmLimiter(spec.apm_cap)
        policy = ReactivePolicy(self._build_table(inst), limiter,
                                cv_latency_ns=spec.cv_latency_ns,
                                decide_latency_ns=spec.decide_latency_ns)
        while not self.soft_stop.is_set():
            frame = inst.client.mailbox.get(timeout=0.1)
            if frame is None:
                continue
            if policy.think_time_ns:
                time.sleep(policy.think_time_ns / 1e9)
            action = policy.decide(frame)
            if action is None:
                continue
            if limiter.admit(self.client_clock.now()):
                inst.client.send_action(action)
            else:
                inst.client.stats.dropped_apm += 1

    def _replay_agent(self, inst: _HarnessInstance) -> None:
        spec = inst.cfg.agent
        limiter = ApmLimiter(spec.apm_cap)
        ref_source = FrameSource(replace(inst.cfg.workload, placement="fixed"),
                                 self.seed, inst.idx)
        reference = [ref_source.frame(s, [], with_pixels=True)
                     for s in range(max(1, spec.records))]
        policy = ReplayPolicy(record_session(reference, self._build_table(inst),
                                             spec.record_delay_ns),
                              tau=spec.tau, timeout_ns=spec.timeout_ns)
        base = self.client_clock.now()
        while not policy.done and not self.soft_stop.is_set():
            if not self._sleep_until_ns(base + policy.eligible_at()):
                return
            deadline = base + policy.deadline()
            action = None
            while not self.soft_stop.is_set():
                now = self.client_clock.now()
                if now >= deadline:
                    action = policy.timed_out(now - base)
                    break
                frame = inst.client.mailbox.get(
                    timeout=min(0.05, (deadline - now) / 1e9)
                )
                if frame is None:
                    continue
                action = policy.offer_frame(frame, self.client_clock.now() - base)
                if action is not None:
                    break
            if action is not None:
                mark = policy.marks[-1]
                self.trace.emit_meta("replay_mark", self.client_clock.now(),
                                     instance=inst.idx, status=mark)
                if mark == "DELAYED":
                    inst.client.stats.replay_delayed += 1
                else:
                    inst.client.stats.replay_matched += 1
                if limiter.admit(self.client_clock.now()):
                    inst.client.send_action(action)
                else:
                    inst.client.stats.dropped_apm += 1

    # --- run -------------------------------------------------------------------

    def run(self) -> HarnessResult:
        scenario = self.scenario
        self.passes = scenario.passes
        listener = socket.create_server(("127.0.0.1", 0))
        port = listener.getsockname()[1]

        for inst in self.instances:
            inst.server_proxy = ServerProxy(
                instance=inst.idx, trace=self.trace, clock=self.server_clock,
                codec=scenario.proxy.codec, samplers=inst.samplers,
                pipeline_inbox=inst.enqueue_input,
                on_resize=inst.attr_service.invalidate,
                offset_holder={}, stop=self.stop, on_error=self._on_error,
            )
        self._spawn(self._accept_loop, listener, 2 * len(self.instances),
                    name="accept")

        for inst in self.instances:
            inst.client = ClientProxy(
                instance=inst.idx, host="127.0.0.1", port=port, trace=self.trace,
                clock=self.client_clock, samplers=inst.client_samplers,
                slow_motion=self.slow_motion, stop=self.stop,
                on_error=self._on_error,
            )
            inst.server_proxy.offset_holder = inst.client.offset_holder

        deadline = time.monotonic() + 10
        while any(i.server_proxy._input_sock is None or
                  i.server_proxy._frame_sock is None for i in self.instances):
            if time.monotonic() > deadline:
                raise RuntimeError("connection setup timed out")
            time.sleep(0.005)

        offsets = {}
        for inst in self.instances:
            offsets[inst.idx] = inst.client.sync_clocks(scenario.sync_rounds)
            inst.client.start()

        start_ns = time.monotonic_ns()
        self.trace.emit_meta("run_start", self.client_clock.now(),
                             t_client=self.client_clock.now(),
                             t_server=self.server_clock.now())

        pipeline_threads = []
        for inst in self.instances:
            if inst.cfg.stagger_ns:
                time.sleep(inst.cfg.stagger_ns / 1e9)
            pipeline_threads.append(
                self._spawn(self._pipeline_loop, inst, name=f"app-{inst.idx}")
            )
            self._spawn(self._sender_loop, inst, name=f"sender-{inst.idx}")
            policy = inst.cfg.agent.policy
            if policy == "scripted" and inst.cfg.agent.count > 0:
                self._spawn(self._scripted_agent, inst, name=f"agent-{inst.idx}")
            elif policy == "reactive":
                self._spawn(self._reactive_agent, inst, name=f"agent-{inst.idx}")
            elif policy == "replay":
                self._spawn(self._replay_agent, inst, name=f"agent-{inst.idx}")

        if scenario.duration_ns is not None:
            deadline = time.monotonic_ns() + scenario.duration_ns
            while time.monotonic_ns() < deadline and not self.soft_stop.is_set():
                time.sleep(0.02)
            self.soft_stop.set()
        for t in pipeline_threads:
            t.join(timeout=600)

        drain_deadline = time.monotonic() + 5
        while (any(i.client.outstanding_count() for i in self.instances)
               and time.monotonic() < drain_deadline
               and not self.stop.is_set()):
            time.sleep(0.01)

        self.trace.emit_meta("run_end", self.client_clock.now(),
                             t_client=self.client_clock.now(),
                             t_server=self.server_clock.now())
        elapsed_ns = time.monotonic_ns() - start_ns

        self.soft_stop.set()
        self.stop.set()
        for inst in self.instances:
            inst.client.close()
            inst.client.join()
            inst.server_proxy.join()
            inst.copy_engine.stop()
        self.gpu.stop()

        if self.errors:
            first = self.errors[0]
            if isinstance(first, InvariantError):
                raise first
            raise RuntimeError(f"harness thread failed: {first!r}") from first

        counters = {
            "server_frames": {i.idx: i.server_proxy.server_frames
                              for i in self.instances},
            "client_frames": {i.idx: i.client.client_frames for i in self.instances},
            "outstanding": {i.idx: i.client.outstanding_count()
                            for i in self.instances},
            "unmatched": {i.idx: i.client.unmatched for i in self.instances},
            "passes": {i.idx: i.passes_done for i in self.instances},
        }
        return HarnessResult(
            records=self.trace.records(),
            counters=counters,
            scenario=scenario,
            variant=self.variant,
            measure=self.measure,
            offset_estimates=offsets,
            agent_stats={i.idx: i.client.stats for i in self.instances},
            elapsed_ns=elapsed_ns,
        )


def run_harness(scenario: ScenarioConfig, variant: PipelineVariant | None = None,
                measure: MeasureMode | None = None,
                seed: int | None = None) -> HarnessResult:
    return HarnessRun(
        scenario,
        variant or scenario.variants[0],
        measure or scenario.measures[0],
        scenario.seed if seed is None else seed,
    ).run()
