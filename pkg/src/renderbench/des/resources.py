"""Shared-resource models for the DES twin.

All arithmetic is exact (ints and Fractions): processor-sharing progress is
integrated analytically between membership changes, so work conservation
holds to the nanosecond and identical scenarios replay identically.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Callable, Optional

from renderbench.des.kernel import Channel, Event, Sim, delay, wait


class SharedProcessor:
    """Processor-sharing resource.

    `capacity` is work units per nanosecond (Fraction). With k active jobs
    each runs at capacity/k, optionally capped per job (a single context
    cannot use more than one CPU core). Used for PCIe bandwidth
    (work = bytes), oversubscribed CPU cores (work = busy nanoseconds), and
    the optional processor-shared GPU (work = render nanoseconds).
    """

    def __init__(self, sim: Sim, capacity: Fraction,
                 cap_per_job: Optional[Fraction] = None):
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self._sim = sim
        self.capacity = Fraction(capacity)
        self.cap_per_job = Fraction(cap_per_job) if cap_per_job is not None else None
        self._jobs: dict[int, list] = {}  # id -> [remaining_work, Event]
        self._next_id = 0
        self._last_update = sim.now
        self._wake_token = 0

    def _rate(self) -> Fraction:
        k = len(self._jobs)
        rate = self.capacity / k
        if self.cap_per_job is not None and rate > self.cap_per_job:
            rate = self.cap_per_job
        return rate

    def _advance(self) -> None:
        elapsed = self._sim.now - self._last_update
        if elapsed and self._jobs:
            rate = self._rate()
            for job in self._jobs.values():
                job[0] -= elapsed * rate
        self._last_update = self._sim.now

    def _reschedule(self) -> None:
        self._wake_token += 1
        if not self._jobs:
            return
        token = self._wake_token
        rate = self._rate()
        shortest = min(job[0] for job in self._jobs.values())
        eta = self._sim.now + shortest / rate
        self._sim.call_at(eta, self._on_wake, token)

    def _on_wake(self, token: int) -> None:
        if token != self._wake_token:
            return  # membership changed; a newer wake-up is scheduled
        self._advance()
        finished = [jid for jid, job in self._jobs.items() if job[0] <= 0]
        for jid in finished:
            self._jobs.pop(jid)[1].fire()
        self._reschedule()

    def run(self, work):
        """Generator; completes when `work` units have been served."""
        if work <= 0:
            return
        self._advance()
        done = self._sim.event()
        self._jobs[self._next_id] = [Fraction(work), done]
        self._next_id += 1
        self._reschedule()
        yield wait(done)

    @property
    def active_jobs(self) -> int:
        return len(self._jobs)


class RenderHandle:
    """Completion state of one submitted render command."""

    __slots__ = ("instance", "frame_seq", "cost", "done", "t_start", "t_end")

    def __init__(self, sim: Sim, instance: int, frame_seq: int, cost):
        self.instance = instance
        self.frame_seq = frame_seq
        self.cost = cost
        self.done: Event = sim.event()
        self.t_start = None
        self.t_end = None


class GpuDevice:
    """Render execution: a single FIFO shared by all instances (default),
    or processor-sharing when configured for sensitivity runs."""

    def __init__(self, sim: Sim, sharing: str = "fifo",
                 on_span: Optional[Callable] = None):
        self._sim = sim
        self._on_span = on_span
        self._sharing = sharing
        if sharing == "fifo":
            self._queue = Channel(sim)
            sim.spawn(self._fifo_proc())
        elif sharing == "ps":
            self._ps = SharedProcessor(sim, capacity=Fraction(1))
        else:
            raise ValueError(f"unknown gpu sharing {sharing!r}")

    def submit(self, instance: int, frame_seq: int, cost) -> RenderHandle:
        handle = RenderHandle(self._sim, instance, frame_seq, cost)
        if self._sharing == "fifo":
            self._queue.put_nowait(handle)
        else:
            self._sim.spawn(self._ps_job(handle))
        return handle

    def _fifo_proc(self):
        while True:
            handle = yield from self._queue.get()
            handle.t_start = self._sim.now
            if handle.cost:
                yield delay(handle.cost)
            handle.t_end = self._sim.now
            if self._on_span:
                self._on_span(handle)
            handle.done.fire()

    def _ps_job(self, handle: RenderHandle):
        handle.t_start = self._sim.now
        yield from self._ps.run(handle.cost)
        handle.t_end = self._sim.now
        if self._on_span:
            self._on_span(handle)
        handle.done.fire()


class CopyTicket:
    """One two-step (or blocking) frame copy through the PCIe engine."""

    __slots__ = ("handle", "nbytes", "done", "enqueued_at", "finished",
                 "frame", "stash", "tags")

    def __init__(self, sim: Sim, handle: RenderHandle, nbytes: int):
        self.handle = handle
        self.nbytes = nbytes
        self.done: Event = sim.event()
        self.enqueued_at = sim.now
        self.finished = False


class CopyEngine:
    """Per-instance DMA queue: copies run strictly after their render and
    after the instance's previous copy; concurrent transfers from other
    instances share PCIe bandwidth via processor sharing."""

    def __init__(self, sim: Sim, pcie: SharedProcessor, latency_ns: int):
        self._sim = sim
        self._pcie = pcie
        self._latency = latency_ns
        self._queue = Channel(sim)
        sim.spawn(self._proc())

    def start(self, handle: RenderHandle, nbytes: int) -> CopyTicket:
        ticket = CopyTicket(self._sim, handle, nbytes)
        self._queue.put_nowait(ticket)
        return ticket

    def _proc(self):
        while True:
            ticket = yield from self._queue.get()
            if not ticket.handle.done.fired:
                yield wait(ticket.handle.done)
            if self._latency:
                yield delay(self._latency)
            yield from self._pcie.run(ticket.nbytes)
            ticket.done.fire()
