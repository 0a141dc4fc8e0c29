"""Deterministic discrete-event kernel.

Single-threaded, virtual-time event loop. Execution order is strictly
(time, insertion sequence), so identical inputs replay identically; time
values may be ints or exact `fractions.Fraction`s (never floats), which is
what lets shared-resource math stay exact.

Processes are generators that yield requests:

    yield ("delay", dt)            resume dt later
    yield ("wait", event)          resume when the event fires
    yield ("wait_any", (e1, e2))   resume on the first to fire -> (event, value)

Channels provide blocking put/get with optional capacity (0 = rendezvous:
put completes only when a getter takes the item).
"""

from __future__ import annotations

import heapq
from collections import deque
from typing import Callable, Generator, Optional


class Event:
    """One-shot event; `fired`/`value` are set synchronously on fire."""

    __slots__ = ("_sim", "fired", "value", "_callbacks")

    def __init__(self, sim: "Sim"):
        self._sim = sim
        self.fired = False
        self.value = None
        self._callbacks: list[Callable] = []

    def fire(self, value=None) -> None:
        if self.fired:
            raise RuntimeError("event fired twice")
        self.fired = True
        self.value = value
        callbacks, self._callbacks = self._callbacks, []
        for cb in callbacks:
            self._sim.call_in(0, cb, value)

    def add_callback(self, cb: Callable) -> None:
        if self.fired:
            self._sim.call_in(0, cb, self.value)
        else:
            self._callbacks.append(cb)


class Sim:
    def __init__(self):
        self.now = 0
        self._heap: list = []
        self._seq = 0

    def event(self) -> Event:
        return Event(self)

    def call_in(self, delay, fn: Callable, *args) -> None:
        self.call_at(self.now + delay, fn, *args)

    def call_at(self, t, fn: Callable, *args) -> None:
        if t < self.now:
            raise ValueError(f"scheduling into the past: {t} < {self.now}")
        heapq.heappush(self._heap, (t, self._seq, fn, args))
        self._seq += 1

    def spawn(self, gen: Generator) -> None:
        self.call_in(0, self._resume, gen, None)

    def _resume(self, gen: Generator, value) -> None:
        try:
            request = gen.send(value)
        except StopIteration:
            return
        kind = request[0]
        if kind == "delay":
            self.call_in(request[1], self._resume, gen, None)
        elif kind == "wait":
            request[1].add_callback(lambda v, g=gen: self._resume(g, v))
        elif kind == "wait_any":
            events = request[1]
            state = {"done": False}

            def make_cb(ev):
                def cb(value):
                    if state["done"]:
                        return
                    state["done"] = True
                    self._resume(gen, (ev, value))
                return cb

            for ev in events:
                ev.add_callback(make_cb(ev))
        else:
            raise RuntimeError(f"unknown yield request {request!r}")

    def run(self, until=None) -> None:
        while self._heap:
            t, _, fn, args = self._heap[0]
            if until is not None and t > until:
                self.now = until
                return
            heapq.heappop(self._heap)
            self.now = t
            fn(*args)
        if until is not None:
            self.now = until


def delay(dt):
    return ("delay", dt)


def wait(event: Event):
    return ("wait", event)


def wait_any(*events: Event):
    return ("wait_any", events)


class Channel:
    """FIFO channel; capacity None = unbounded, 0 = rendezvous."""

    def __init__(self, sim: Sim, capacity: Optional[int] = None):
        self._sim = sim
        self.capacity = capacity
        self._buf: deque = deque()
        self._getters: deque[Event] = deque()
        self._putters: deque[tuple[object, Event]] = deque()

    def __len__(self) -> int:
        return len(self._buf)

    def put(self, item):
        """Generator; completes when the item is accepted."""
        while self._getters:
            getter = self._getters.popleft()
            if not getter.fired:  # may have been abandoned by a timeout
                getter.fire(item)
                return
        if self.capacity is None or len(self._buf) < self.capacity:
            self._buf.append(item)
            return
        done = self._sim.event()
        self._putters.append((item, done))
        yield wait(done)

    def put_nowait(self, item) -> None:
        """Non-blocking put; only valid on unbounded channels."""
        if self.capacity is not None:
            raise RuntimeError("put_nowait needs an unbounded channel")
        while self._getters:
            getter = self._getters.popleft()
            if not getter.fired:
                getter.fire(item)
                return
        self._buf.append(item)

    def put_latest(self, item) -> None:
        """Replace-don't-queue put (latest-wins mailbox of capacity 1)."""
        while self._getters:
            getter = self._getters.popleft()
            if not getter.fired:
                getter.fire(item)
                return
        self._buf.clear()
        self._buf.append(item)

    def _promote_putter(self) -> None:
        if self._putters and (self.capacity is None or len(self._buf) < self.capacity):
            item, done = self._putters.popleft()
            self._buf.append(item)
            done.fire()

    def get(self):
        """Generator; completes with the next item."""
        if self._buf:
            item = self._buf.popleft()
            self._promote_putter()
            return item
        if self._putters:  # rendezvous hand-off
            item, done = self._putters.popleft()
            done.fire()
            return item
        ev = self._sim.event()
        self._getters.append(ev)
        item = yield wait(ev)
        return item

    def get_until(self, deadline):
        """Generator; completes with an item or None at the deadline."""
        if self._buf:
            item = self._buf.popleft()
            self._promote_putter()
            return item
        if self._putters:
            item, done = self._putters.popleft()
            done.fire()
            return item
        ev = self._sim.event()
        self._getters.append(ev)
        timer = self._sim.event()
        self._sim.call_at(deadline, lambda: None if timer.fired else timer.fire(None))
        which, value = yield wait_any(ev, timer)
        if which is ev:
            return value
        if ev.fired:  # item handed over in the same instant as the timeout
            return ev.value
        self._getters.remove(ev)
        return None
