"""Virtual GPU and PCIe device for the live harness.

Render commands from all instances execute serially on one device thread
(FIFO, like a single hardware queue); completion deadlines are computed on
the device clock and realized by sleeping, so RD spans are exact even though
wall-clock wakeups jitter. Frame copies go through per-instance DMA queues
(copies of one context execute in order, strictly after their render) and
share PCIe bandwidth across instances by processor sharing. The window
attribute service models the expensive per-copy X round trip and its
memoized variant; time-query pairs model OpenGL's double-buffered GPU
timers, including the single-buffer stall.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass

from renderbench.clocks import ClockDomain
from renderbench.core import Clock, StageKind, StageSpan
from renderbench.costs import Sampler
from renderbench.errors import (
    DeviceStopped,
    QueryNotReady,
    TicketAlreadyFinished,
)


# Kernel sleeps overshoot by several hundred microseconds in containers;
# finish the last stretch with a GIL-yielding spin for ~10us accuracy.
SPIN_NS = 800_000


def sleep_until(deadline_ns: int) -> None:
    while True:
        remaining = deadline_ns - time.monotonic_ns()
        if remaining <= 0:
            return
        if remaining > SPIN_NS:
            time.sleep((remaining - SPIN_NS) / 1e9)
        else:
            while time.monotonic_ns() < deadline_ns:
                time.sleep(0)
            return


@dataclass(frozen=True)
class RenderCmd:
    instance: int
    frame_seq: int
    render_cost_ns: int
    frame_bytes: int

    def __post_init__(self):
        if self.render_cost_ns < 0:
            raise ValueError("render_cost must be >= 0")
        if self.frame_bytes <= 0:
            raise ValueError("frame_bytes must be > 0")


class CmdHandle:
    """Completion state of a submitted render command."""

    def __init__(self, cmd: RenderCmd):
        self.cmd = cmd
        self.done = threading.Event()
        self.submit_ns = time.monotonic_ns()
        self.t_start: int = 0  # device clock
        self.t_end: int = 0

    @property
    def duration_ns(self) -> int:
        return self.t_end - self.t_start


class VirtualGpu:
    """Serial render FIFO shared by all instances."""

    _STOP = object()

    def __init__(self, on_span=None):
        self._queue: queue.Queue = queue.Queue()
        self._on_span = on_span
        self._stopped = False
        self._prev_end = 0
        self._thread = threading.Thread(target=self._run, name="gpu", daemon=True)
        self._thread.start()

    def submit(self, cmd: RenderCmd) -> CmdHandle:
        if self._stopped:
            raise DeviceStopped("render submitted after device stop")
        handle = CmdHandle(cmd)
        self._queue.put(handle)
        return handle

    def _run(self) -> None:
        while True:
            handle = self._queue.get()
            if handle is self._STOP:
                return
            # device-clock schedule is pure max-plus: wall wakeup jitter never
            # leaks into modeled start times
            start = max(handle.submit_ns, self._prev_end)
            end = start + handle.cmd.render_cost_ns
            sleep_until(end)
            handle.t_start = start
            handle.t_end = end
            self._prev_end = end
            if self._on_span is not None:
                self._on_span(StageSpan(
                    stage=StageKind.RD, instance=handle.cmd.instance,
                    pass_index=handle.cmd.frame_seq, tag=0,
                    frame_seq=handle.cmd.frame_seq, t_start=start, t_end=end,
                    clock=Clock.DEVICE,
                ))
            handle.done.set()

    def stop(self) -> None:
        self._stopped = True
        self._queue.put(self._STOP)
        self._thread.join(timeout=5)


class PcieArbiter:
    """Processor-sharing bandwidth across concurrent transfers."""

    def __init__(self, bandwidth_bytes_per_s: int):
        self._bw = bandwidth_bytes_per_s
        self._cond = threading.Condition()
        self._jobs: dict[int, list] = {}  # id -> [remaining_bytes]
        self._next_id = 0
        self._last_update = time.monotonic_ns()

    def _advance(self) -> None:
        now = time.monotonic_ns()
        elapsed = now - self._last_update
        self._last_update = now
        if not self._jobs or elapsed <= 0:
            return
        rate = self._bw / len(self._jobs) / 1e9  # bytes per ns
        for job in self._jobs.values():
            job[0] -= elapsed * rate

    def transfer(self, nbytes: int) -> None:
        """Blocks the calling copy worker for the shared transfer time."""
        if nbytes <= 0:
            return
        with self._cond:
            self._advance()
            job_id = self._next_id
            self._next_id += 1
            self._jobs[job_id] = [float(nbytes)]
            self._cond.notify_all()
            while True:
                self._advance()
                if self._jobs[job_id][0] <= 0.5:  # sub-byte residue: done
                    del self._jobs[job_id]
                    self._cond.notify_all()
                    return
                eta_ns = self._jobs[job_id][0] * len(self._jobs) * 1e9 / self._bw
                if eta_ns > SPIN_NS:
                    self._cond.wait(timeout=(eta_ns - SPIN_NS) / 1e9)
                else:
                    deadline = time.monotonic_ns() + eta_ns
                    self._cond.release()
                    try:
                        while time.monotonic_ns() < deadline:
                            time.sleep(0)
                    finally:
                        self._cond.acquire()


class CopyTicket:
    def __init__(self, handle: CmdHandle, nbytes: int):
        self.handle = handle
        self.nbytes = nbytes
        self.done = threading.Event()
        self.finished = False


class CopyEngine:
    """Per-instance DMA queue: copy-after-render without blocking the app."""

    _STOP = object()

    def __init__(self, arbiter: PcieArbiter, latency_ns: int, instance: int):
        self._arbiter = arbiter
        self._latency = latency_ns
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(
            target=self._run, name=f"copy-{instance}", daemon=True
        )
        self._thread.start()

    def start(self, handle: CmdHandle, nbytes: int) -> CopyTicket:
        ticket = CopyTicket(handle, nbytes)
        self._queue.put(ticket)
        return ticket

    def finish(self, ticket: CopyTicket) -> None:
        """Blocks for the residual transfer time (zero when overlapped)."""
        if ticket.finished:
            raise TicketAlreadyFinished("copy ticket finished twice")
        ticket.done.wait()
        ticket.finished = True

    def copy_sync(self, handle: CmdHandle, nbytes: int) -> None:
        """Blocking copy: render wait plus the whole transfer."""
        ticket = self.start(handle, nbytes)
        self.finish(ticket)

    def _run(self) -> None:
        while True:
            ticket = self._queue.get()
            if ticket is self._STOP:
                return
            ticket.handle.done.wait()
            if self._latency:
                sleep_until(time.monotonic_ns() + self._latency)
            self._arbiter.transfer(ticket.nbytes)
            ticket.done.set()

    def stop(self) -> None:
        self._queue.put(self._STOP)
        self._thread.join(timeout=5)


class WindowAttributeService:
    """The per-copy window-attribute lookup (6-9 ms uncached, memoizable)."""

    def __init__(self, sampler: Sampler, width: int, height: int):
        self._sampler = sampler
        self._attrs = (width, height)
        self._valid = False
        self._lock = threading.Lock()

    def invalidate(self, width: int | None = None, height: int | None = None) -> None:
        with self._lock:
            if width is not None and height is not None:
                self._attrs = (width, height)
            self._valid = False

    def query(self, memoized: bool) -> tuple[int, int]:
        """Returns attributes; sleeps the sampled cost unless served from
        the (valid) cache."""
        if memoized:
            with self._lock:
                if self._valid:
                    return self._attrs
        cost = self._sampler()
        if cost:
            sleep_until(time.monotonic_ns() + cost)
        with self._lock:
            self._valid = True
            return self._attrs


class TimeQueryPair:
    """Two GPU time-query slots, switched between frames.

    Double-buffered: slot i's result is read while slot i+1's queries are in
    flight; reading the most recently issued slot is a usage error
    (QueryNotReady). Single-buffered: there is one slot and reading it
    blocks until the bracketed render completes, which is the stall the
    double buffer exists to avoid.
    """

    def __init__(self, mode: str = "double"):
        if mode not in ("double", "single"):
            raise ValueError(f"query mode must be double|single, got {mode!r}")
        self.mode = mode
        self._slots: list[CmdHandle | None] = [None, None]
        self._current: int | None = None

    def issue(self, pass_index: int, handle: CmdHandle) -> int:
        slot = pass_index % 2 if self.mode == "double" else 0
        self._slots[slot] = handle
        self._current = slot
        return slot

    def read(self, slot: int) -> int | None:
        handle = self._slots[slot]
        if handle is None:
            return None
        if self.mode == "double":
            if slot == self._current:
                raise QueryNotReady(
                    f"slot {slot} rotates out only after the next frame's queries"
                )
            if not handle.done.is_set():
                return None  # poll again next pass; never blocks
            return handle.duration_ns
        handle.done.wait()
        return handle.duration_ns

    def read_previous(self, pass_index: int) -> int | None:
        """Double-buffer read pattern: previous pass's slot at this pass."""
        if pass_index == 0:
            return None
        return self.read((pass_index - 1) % 2)
