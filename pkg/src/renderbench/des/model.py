"""The discrete-event twin of the whole rendering system.

One virtual-time model of everything the live harness does: agents emit
tagged inputs at the client proxy, inputs cross the network to the server
proxy and into the per-instance pipeline, frames render on the shared GPU,
get copied over shared PCIe, and travel back through compression and send
to the client where tags are matched. Trace records use the same schema as
the harness, so the metrics layer cannot tell the two apart.

Virtual time is exact (int/Fraction nanoseconds); with constant costs and a
single instance, pass periods equal the closed forms in
`renderbench.pipeline` to the nanosecond.

SLOW_MOTION mode = the client-side gate (at most one outstanding tagged
input) plus the injected server-side delay: a pass may not start until the
frame handed off in the previous pass has finished its SS. The barrier is
non-binding when the post-copy stages cost zero, which is what makes the
uncontended constant-cost scenario measure identically under FULL and
SLOW_MOTION; under contention it collapses the pipelining that inflates
FULL-mode RTTs.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction
from typing import Optional

from renderbench.agents import (
    AgentStats,
    ApmLimiter,
    PolicyTable,
    ReactivePolicy,
    ReplayPolicy,
    ScriptedPolicy,
    record_session,
    uniform_schedule,
)
from renderbench.clocks import SyncRound, estimate_offset
from renderbench.core import (
    Clock,
    Frame,
    HookId,
    StageKind,
    StageSpan,
    TagAllocator,
    embed_tag,
    extract_and_restore,
)
from renderbench.costs import Sampler
from renderbench.des.kernel import Channel, Sim, delay, wait
from renderbench.des.resources import CopyEngine, GpuDevice, SharedProcessor
from renderbench.errors import TrackingError
from renderbench.metrics import MeasureMode
from renderbench.pipeline import PipelineVariant
from renderbench.scenario import InstanceConfig, ScenarioConfig
from renderbench.trace import TraceCollector
from renderbench.workload import FrameSource


@dataclass
class DesResult:
    records: list[dict]
    counters: dict
    scenario: ScenarioConfig
    variant: PipelineVariant
    measure: MeasureMode
    offset_estimates: dict[int, Fraction]
    agent_stats: dict[int, AgentStats]


class _Instance:
    """Mutable runtime state of one benchmark instance."""

    def __init__(self, run: "_DesModel", idx: int, cfg: InstanceConfig):
        self.idx = idx
        self.cfg = cfg
        seed = run.seed
        self.al = Sampler(cfg.costs.al, seed, "al", idx)
        self.rd = Sampler(cfg.costs.rd, seed, "rd", idx)
        self.frame_bytes = Sampler(cfg.costs.frame_bytes, seed, "bytes", idx)
        self.attr = Sampler(cfg.attr, seed, "attr", idx)
        self.cp = Sampler(run.scenario.proxy.compress_cost, seed, "cp", idx)
        self.sp = Sampler(run.scenario.proxy.sp_cost, seed, "sp", idx)
        self.ipc_ps = Sampler(run.scenario.proxy.ipc_cost, seed, "ipc-ps", idx)
        self.ipc_as = Sampler(run.scenario.proxy.ipc_cost, seed, "ipc-as", idx)
        self.net_up = Sampler(run.scenario.proxy.net_up, seed, "net-up", idx)
        self.net_down = Sampler(run.scenario.proxy.net_down, seed, "net-down", idx)
        self.sync_up = Sampler(run.scenario.proxy.net_up, seed, "sync-up", idx)
        self.sync_down = Sampler(run.scenario.proxy.net_down, seed, "sync-down", idx)

        sim = run.sim
        self.in_chan = Channel(sim)          # wire -> server proxy input path
        self.handoff = Channel(sim, 1)       # app -> sender (bounded, depth 1)
        self.as_chan = Channel(sim, 0)       # sender -> proxy frame path (rendezvous)
        self.inbox = Channel(sim, 1)         # client proxy -> agent (latest wins)
        self.pending: list[tuple[int, object]] = []  # (tag, t3) awaiting drain
        self.copy_engine = CopyEngine(sim, run.pcie, run.scenario.device.pcie_latency_ns)

        self.alloc = TagAllocator(idx + 1)
        self.outstanding: dict[int, object] = {}
        self.gate: list[bytes] = []
        self.last_up_arrival = 0
        self.offset_estimate: Fraction = Fraction(0)
        self.server_frames = 0
        self.client_frames = 0
        self.unmatched = 0
        self.stats = AgentStats()
        self.source = FrameSource(cfg.workload, seed, idx)

        self.needs_pixels = cfg.agent.policy == "replay"
        self.needs_annotation = cfg.agent.policy in ("reactive", "replay")


class _DesModel:
    def __init__(self, scenario: ScenarioConfig, variant: PipelineVariant,
                 measure: MeasureMode, seed: int):
        self.scenario = scenario
        self.variant = variant
        self.measure = measure
        self.seed = seed
        self.sim = Sim()
        self.trace = TraceCollector(hooks_enabled=scenario.hooks_enabled)
        self.theta_server = scenario.server_clock_offset_ns

        n = len(scenario.instances)
        c = Fraction(str(scenario.resources.memory_contention_c))
        self.mem_factor = 1 + c * (n - 1)
        self.cpu = SharedProcessor(
            self.sim, capacity=Fraction(scenario.resources.cpu_cores),
            cap_per_job=Fraction(1),
        )
        self.pcie = SharedProcessor(
            self.sim, capacity=Fraction(scenario.device.pcie_bandwidth, 1_000_000_000),
        )
        self.gpu = GpuDevice(self.sim, sharing=scenario.device.gpu_sharing,
                             on_span=self._on_render_span)
        self.instances = [
            _Instance(self, i, cfg) for i, cfg in enumerate(scenario.instances)
        ]
        self.start_ev = self.sim.event()
        self._syncs_left = len(self.instances)
        self.slow_motion = measure == MeasureMode.SLOW_MOTION
        self.passes = scenario.passes
        self.queries = scenario.queries

    # --- clocks / trace helpers ------------------------------------------

    def _server_now(self):
        return self.sim.now + self.theta_server

    def _span(self, stage: StageKind, inst: int, pass_index: int, tag: int,
              frame: int, t_start, t_end, clock: Clock = Clock.SERVER) -> None:
        if clock == Clock.SERVER:
            t_start = t_start + self.theta_server
            t_end = t_end + self.theta_server
        self.trace.emit_span(StageSpan(
            stage=stage, instance=inst, pass_index=pass_index, tag=tag,
            frame_seq=frame, t_start=t_start, t_end=t_end, clock=clock,
        ))

    def _hook(self, hook: HookId, inst: int, clock: Clock, tag: int = 0,
              frame: int = 0, tags: Optional[list[int]] = None) -> None:
        t = self.sim.now + (self.theta_server if clock == Clock.SERVER else 0)
        self.trace.emit_hook(hook, inst, t, clock, tag=tag, frame=frame, tags=tags)

    def _on_render_span(self, handle) -> None:
        self._span(StageKind.RD, handle.instance, handle.frame_seq, 0,
                   handle.frame_seq, handle.t_start, handle.t_end, Clock.DEVICE)

    # --- client side -------------------------------------------------------

    def _send_action(self, inst: _Instance, action: bytes) -> None:
        if self.slow_motion and inst.outstanding:
            inst.gate.append(action)
            return
        tag = inst.alloc.next()
        inst.outstanding[tag] = self.sim.now
        self._hook(HookId.CLIENT_INPUT_CAPTURE, inst.idx, Clock.CLIENT, tag=tag)
        inst.stats.emitted += 1
        arrival = self.sim.now + inst.net_up()
        if arrival < inst.last_up_arrival:  # stream transport preserves order
            arrival = inst.last_up_arrival
        inst.last_up_arrival = arrival
        self.sim.call_at(arrival, inst.in_chan.put_nowait, (tag, self.sim.now))

    def _client_recv(self, inst: _Instance, frame: Frame) -> None:
        inst.client_frames += 1
        self._hook(HookId.CLIENT_FRAME_RECV, inst.idx, Clock.CLIENT,
                   frame=frame.seq, tags=frame.tags)
        for tag in frame.tags:
            if tag in inst.outstanding:
                del inst.outstanding[tag]
            else:
                inst.unmatched += 1
                self.trace.emit_meta("unmatched_tag", self.sim.now,
                                     instance=inst.idx, tag=tag)
        if self.slow_motion and not inst.outstanding and inst.gate:
            self._send_action(inst, inst.gate.pop(0))
        if inst.needs_annotation or inst.needs_pixels:
            inst.inbox.put_latest(frame)

    # --- server proxy: input path -------------------------------------------

    def _input_path_proc(self, inst: _Instance):
        while True:
            tag, t1 = yield from inst.in_chan.get()
            t2 = self.sim.now
            self._hook(HookId.PROXY_INPUT_RECV, inst.idx, Clock.SERVER, tag=tag)
            # CS span: client send -> proxy receive, expressed in the server
            # clock via the handshake offset estimate.
            self.trace.emit_span(StageSpan(
                stage=StageKind.CS, instance=inst.idx, pass_index=-1, tag=tag,
                frame_seq=0, t_start=t1 + inst.offset_estimate,
                t_end=t2 + self.theta_server, clock=Clock.SERVER,
            ))
            sp_cost = inst.sp()
            if sp_cost:
                yield delay(sp_cost)
            self._span(StageKind.SP, inst.idx, -1, tag, 0, t2, self.sim.now)
            self._hook(HookId.PROXY_INPUT_FWD, inst.idx, Clock.SERVER, tag=tag)
            t3 = self.sim.now
            ipc = inst.ipc_ps()
            if ipc:
                yield delay(ipc)
            inst.pending.append((tag, t3))

    # --- pipeline ------------------------------------------------------------

    def _make_frame(self, inst: _Instance, seq: int, tags: list[int]) -> Frame:
        if inst.needs_pixels:
            return inst.source.frame(seq, tags, with_pixels=True)
        if inst.needs_annotation:
            return Frame(seq=seq, width=inst.cfg.workload.width,
                         height=inst.cfg.workload.height, pixels=b"",
                         tags=list(tags),
                         annotation=inst.source.annotation_for(seq))
        return Frame(seq=seq, width=inst.cfg.workload.width,
                     height=inst.cfg.workload.height, pixels=b"", tags=list(tags))

    def _handoff(self, inst: _Instance, frame: Frame):
        """Embed the primary tag, push to the sender; returns the SS-complete
        event used by the slow-motion admission barrier."""
        stash = None
        if frame.tags and frame.pixels:
            frame, stash = embed_tag(frame, frame.primary_tag)
        sent_ev = self.sim.event()
        yield from inst.handoff.put((frame, stash, sent_ev))
        return sent_ev

    def _pipeline_proc(self, inst: _Instance):
        yield wait(self.start_ev)
        if inst.cfg.stagger_ns:
            yield delay(inst.cfg.stagger_ns)
        sim = self.sim
        variant = self.variant
        prev = None            # last pass's (frame, handle, nbytes)
        pending_ticket = None  # two-step: copy issued last pass
        last_sent_ev = None
        k = 0
        while self.passes is None or k < self.passes:
            if self.slow_motion and last_sent_ev is not None and not last_sent_ev.fired:
                yield wait(last_sent_ev)
            t_pass = sim.now
            tags = []
            for tag, t3 in inst.pending:
                self._hook(HookId.APP_INPUT_RECV, inst.idx, Clock.SERVER, tag=tag)
                self._span(StageKind.PS, inst.idx, k, tag, 0, t3, t_pass)
                tags.append(tag)
            inst.pending.clear()

            al_cost = inst.al() * self.mem_factor
            yield from self.cpu.run(al_cost)
            self._span(StageKind.AL, inst.idx, k, tags[0] if tags else 0, k,
                       t_pass, sim.now)
            frame = self._make_frame(inst, k, tags)
            nbytes = inst.frame_bytes()

            self._hook(HookId.RENDER_SUBMIT, inst.idx, Clock.SERVER, frame=k)
            handle = self.gpu.submit(inst.idx, k, inst.rd())

            t_q = sim.now
            attr_cost = 0 if variant.memoized else inst.attr()
            if attr_cost:
                yield delay(attr_cost)
            self._span(StageKind.ATTR_QUERY, inst.idx, k, 0, k, t_q, sim.now)

            if self.queries == "single" and not handle.done.fired:
                # one query slot: reading this pass's result stalls on the render
                yield wait(handle.done)

            if variant.twostep:
                new_ticket = None
                if prev is not None:
                    self._hook(HookId.READBACK_START, inst.idx, Clock.SERVER,
                               frame=prev[0].seq)
                    new_ticket = inst.copy_engine.start(prev[1], prev[2])
                    new_ticket.frame = prev[0]
                    self._span(StageKind.FC_START, inst.idx, k, 0, prev[0].seq,
                               sim.now, sim.now)
                if pending_ticket is not None:
                    t_f = sim.now
                    if not pending_ticket.done.fired:
                        yield wait(pending_ticket.done)
                    self._span(StageKind.FC_END, inst.idx, k, 0,
                               pending_ticket.frame.seq, t_f, sim.now)
                    last_sent_ev = yield from self._handoff(inst, pending_ticket.frame)
                pending_ticket = new_ticket
            elif prev is not None:
                self._hook(HookId.READBACK_START, inst.idx, Clock.SERVER,
                           frame=prev[0].seq)
                t_f = sim.now
                ticket = inst.copy_engine.start(prev[1], prev[2])
                if not ticket.done.fired:
                    yield wait(ticket.done)
                self._span(StageKind.FC, inst.idx, k, 0, prev[0].seq, t_f, sim.now)
                last_sent_ev = yield from self._handoff(inst, prev[0])

            prev = (frame, handle, nbytes)
            k += 1

        # flush frames still in flight so every consumed tag gets answered
        if variant.twostep:
            if pending_ticket is not None:
                t_f = sim.now
                if not pending_ticket.done.fired:
                    yield wait(pending_ticket.done)
                self._span(StageKind.FC_END, inst.idx, k, 0,
                           pending_ticket.frame.seq, t_f, sim.now)
                yield from self._handoff(inst, pending_ticket.frame)
        if prev is not None:
            self._hook(HookId.READBACK_START, inst.idx, Clock.SERVER, frame=prev[0].seq)
            t_f = sim.now
            ticket = inst.copy_engine.start(prev[1], prev[2])
            if not ticket.done.fired:
                yield wait(ticket.done)
            kind = StageKind.FC_END if variant.twostep else StageKind.FC
            self._span(kind, inst.idx, k, 0, prev[0].seq, t_f, sim.now)
            yield from self._handoff(inst, prev[0])

    # --- sender + proxy frame path -------------------------------------------

    def _sender_proc(self, inst: _Instance):
        while True:
            frame, stash, sent_ev = yield from inst.handoff.get()
            t7 = self.sim.now
            self._hook(HookId.APP_FRAME_PUSH, inst.idx, Clock.SERVER, frame=frame.seq)
            ipc = inst.ipc_as()
            if ipc:
                yield delay(ipc)
            yield from inst.as_chan.put((frame, stash, sent_ev))
            self._span(StageKind.AS, inst.idx, -1, frame.primary_tag, frame.seq,
                       t7, self.sim.now)

    def _frame_path_proc(self, inst: _Instance):
        while True:
            frame, stash, sent_ev = yield from inst.as_chan.get()
            t8 = self.sim.now
            inst.server_frames += 1
            if stash is not None:
                frame, tag = extract_and_restore(frame, stash)
                if tag != frame.primary_tag:
                    raise TrackingError(
                        f"instance {inst.idx}: extracted tag {tag:#x} != "
                        f"primary {frame.primary_tag:#x}"
                    )
                extracted = tag
            else:
                extracted = frame.primary_tag
            self._hook(HookId.PROXY_FRAME_RECV, inst.idx, Clock.SERVER,
                       tag=extracted, frame=frame.seq)
            cp_cost = inst.cp() * self.mem_factor
            yield from self.cpu.run(cp_cost)
            self._span(StageKind.CP, inst.idx, -1, frame.primary_tag, frame.seq,
                       t8, self.sim.now)
            t_ss = self.sim.now
            ss_delay = inst.net_down()
            if ss_delay:
                yield delay(ss_delay)
            self._span(StageKind.SS, inst.idx, -1, frame.primary_tag, frame.seq,
                       t_ss, self.sim.now)
            self._hook(HookId.PROXY_FRAME_SENT, inst.idx, Clock.SERVER,
                       frame=frame.seq)
            sent_ev.fire()
            self._client_recv(inst, frame)

    # --- agents ---------------------------------------------------------------

    def _build_table(self, inst: _Instance) -> PolicyTable:
        spec = inst.cfg.agent
        if spec.table:
            return PolicyTable(actions=dict(spec.table), default=spec.default_action)
        actions = {c: f"ACT{c}".encode() for c in inst.cfg.workload.class_ids}
        return PolicyTable(actions=actions, default=spec.default_action)

    def _scripted_proc(self, inst: _Instance):
        spec = inst.cfg.agent
        limiter = ApmLimiter(spec.apm_cap)
        policy = ScriptedPolicy(
            uniform_schedule(spec.rate_per_s, spec.count, spec.start_ns), limiter
        )
        yield wait(self.start_ev)
        base = self.sim.now
        while not policy.done:
            t_next = policy.next_emit_time(self.sim.now - base)
            if t_next + base > self.sim.now:
                yield delay(t_next + base - self.sim.now)
            action = policy.take(self.sim.now - base)
            if action is not None:
                self._send_action(inst, action)

    def _reactive_proc(self, inst: _Instance):
        spec = inst.cfg.agent
        limiter = ApmLimiter(spec.apm_cap)
        policy = ReactivePolicy(self._build_table(inst), limiter,
                                cv_latency_ns=spec.cv_latency_ns,
                                decide_latency_ns=spec.decide_latency_ns)
        yield wait(self.start_ev)
        while True:
            frame = yield from inst.inbox.get()
            yield delay(policy.think_time_ns)
            action = policy.decide(frame)
            if action is None:
                continue
            if limiter.admit(self.sim.now):
                self._send_action(inst, action)
            else:
                inst.stats.dropped_apm += 1

    def _replay_proc(self, inst: _Instance):
        spec = inst.cfg.agent
        limiter = ApmLimiter(spec.apm_cap)
        # the recorded session always comes from a fixed-placement pass over
        # the scene (that is what a recorded human run is); the live stream
        # uses the configured placement
        ref_source = FrameSource(
            replace(inst.cfg.workload, placement="fixed"), self.seed, inst.idx
        )
        reference = [ref_source.frame(s, [], with_pixels=True)
                     for s in range(max(1, spec.records))]
        session = record_session(reference, self._build_table(inst),
                                 spec.record_delay_ns)
        policy = ReplayPolicy(session, tau=spec.tau, timeout_ns=spec.timeout_ns)
        inst.replay_policy = policy
        yield wait(self.start_ev)
        base = self.sim.now
        while not policy.done:
            eligible = policy.eligible_at() + base
            if self.sim.now < eligible:
                yield delay(eligible - self.sim.now)
            deadline = policy.deadline() + base
            action = None
            while action is None and not policy.done:
                frame = yield from inst.inbox.get_until(max(self.sim.now, deadline))
                if frame is None:
                    action = policy.timed_out(self.sim.now - base)
                    break
                action = policy.offer_frame(frame, self.sim.now - base)
            if action is not None:
                self.trace.emit_meta("replay_mark", self.sim.now,
                                     instance=inst.idx, status=policy.marks[-1])
                if policy.marks[-1] == "DELAYED":
                    inst.stats.replay_delayed += 1
                else:
                    inst.stats.replay_matched += 1
                if limiter.admit(self.sim.now):
                    self._send_action(inst, action)
                else:
                    inst.stats.dropped_apm += 1

    # --- clock sync + run orchestration ---------------------------------------

    def _sync_proc(self, inst: _Instance):
        rounds = []
        for _ in range(max(1, self.scenario.sync_rounds)):
            t1 = self.sim.now
            up = inst.sync_up()
            if up:
                yield delay(up)
            t2 = t3 = self._server_now()
            down = inst.sync_down()
            if down:
                yield delay(down)
            rounds.append(SyncRound(t1=t1, t2=t2, t3=t3, t4=self.sim.now))
        inst.offset_estimate = estimate_offset(rounds)
        self._syncs_left -= 1
        if self._syncs_left == 0:
            self.trace.emit_meta("run_start", self.sim.now,
                                 t_client=self.sim.now,
                                 t_server=self._server_now())
            self.start_ev.fire()

    def run(self) -> DesResult:
        scenario = self.scenario
        self.passes = scenario.passes
        self.queries = scenario.queries
        for inst in self.instances:
            self.sim.spawn(self._sync_proc(inst))
            self.sim.spawn(self._input_path_proc(inst))
            self.sim.spawn(self._pipeline_proc(inst))
            self.sim.spawn(self._sender_proc(inst))
            self.sim.spawn(self._frame_path_proc(inst))
            policy = inst.cfg.agent.policy
            if policy == "scripted" and inst.cfg.agent.count > 0:
                self.sim.spawn(self._scripted_proc(inst))
            elif policy == "reactive":
                self.sim.spawn(self._reactive_proc(inst))
            elif policy == "replay":
                self.sim.spawn(self._replay_proc(inst))

        if scenario.duration_ns is not None:
            self.sim.run(until=scenario.duration_ns)
        else:
            self.sim.run()

        self.trace.emit_meta("run_end", self.sim.now,
                             t_client=self.sim.now, t_server=self._server_now())
        counters = {
            "server_frames": {i.idx: i.server_frames for i in self.instances},
            "client_frames": {i.idx: i.client_frames for i in self.instances},
            "outstanding": {i.idx: len(i.outstanding) for i in self.instances},
            "unmatched": {i.idx: i.unmatched for i in self.instances},
        }
        return DesResult(
            records=self.trace.records(),
            counters=counters,
            scenario=scenario,
            variant=self.variant,
            measure=self.measure,
            offset_estimates={i.idx: i.offset_estimate for i in self.instances},
            agent_stats={i.idx: i.stats for i in self.instances},
        )


def run_sim(scenario: ScenarioConfig,
            variant: Optional[PipelineVariant] = None,
            measure: Optional[MeasureMode] = None,
            seed: Optional[int] = None) -> DesResult:
    """Run the deterministic twin for one (variant, measure) combination."""
    return _DesModel(
        scenario,
        variant or scenario.variants[0],
        measure or scenario.measures[0],
        scenario.seed if seed is None else seed,
    ).run()
