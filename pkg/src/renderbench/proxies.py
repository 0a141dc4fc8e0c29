"""Live client and server proxies over loopback (or LAN) stream sockets.

Connection setup: the client opens two stream connections per instance (one
per direction pair) and identifies each with a 6-byte hello
(magic "RB" | instance u16 LE | channel u8 | version u8); everything after
the hello is length-prefixed wire messages. The input connection also
carries the clock-sync handshake and RESIZE events; the frame connection is
server-to-client only.
"""

from __future__ import annotations

import hashlib
import socket
import struct
import threading
import time
from typing import Callable, Optional

from renderbench import wire
from renderbench.agents import AgentStats
from renderbench.clocks import ClockDomain, SyncRound, estimate_offset
from renderbench.codec import CodecId
from renderbench.core import (
    Clock,
    Frame,
    HookId,
    StageKind,
    StageSpan,
    TagAllocator,
    TaggedInput,
    extract_and_restore,
)
from renderbench.errors import TrackingError
from renderbench.trace import TraceCollector

HELLO = struct.Struct("<2sHBB")
MAGIC = b"RB"
CHANNEL_INPUT = 1
CHANNEL_FRAME = 2
HELLO_VERSION = 1

_SENTINEL = object()


def send_hello(sock: socket.socket, instance: int, channel: int) -> None:
    sock.sendall(HELLO.pack(MAGIC, instance, channel, HELLO_VERSION))


def read_hello(sock: socket.socket) -> tuple[int, int]:
    buf = b""
    while len(buf) < HELLO.size:
        chunk = sock.recv(HELLO.size - len(buf))
        if not chunk:
            raise ConnectionError("peer closed during hello")
        buf += chunk
    magic, instance, channel, version = HELLO.unpack(buf)
    if magic != MAGIC or version != HELLO_VERSION:
        raise ConnectionError(f"bad hello {buf!r}")
    return instance, channel


def pixel_digest(pixels: bytes) -> str:
    return hashlib.sha256(pixels).hexdigest()[:16]


class HandoffQueue:
    """Rendezvous handoff into the proxy frame path.

    put() blocks while a previous item has not been taken (the backpressure
    the sender sees when the proxy is still compressing); the returned event
    fires when the proxy actually accepts the item, which is where the AS
    span ends.
    """

    def __init__(self):
        self._cond = threading.Condition()
        self._item = None
        self._taken: Optional[threading.Event] = None
        self._full = False

    def put(self, item, stop: threading.Event) -> threading.Event:
        taken = threading.Event()
        with self._cond:
            while self._full:
                if stop.is_set():
                    taken.set()
                    return taken
                self._cond.wait(timeout=0.1)
            self._item = item
            self._taken = taken
            self._full = True
            self._cond.notify_all()
        return taken

    def get(self, stop: threading.Event):
        with self._cond:
            while not self._full:
                if stop.is_set():
                    return _SENTINEL
                self._cond.wait(timeout=0.1)
            item = self._item
            taken = self._taken
            self._item = None
            self._taken = None
            self._full = False
            self._cond.notify_all()
        taken.set()
        return item


class LatestMailbox:
    """Latest-wins frame mailbox feeding an agent."""

    def __init__(self):
        self._cond = threading.Condition()
        self._frame: Optional[Frame] = None

    def put(self, frame: Frame) -> None:
        with self._cond:
            self._frame = frame
            self._cond.notify_all()

    def get(self, timeout: float) -> Optional[Frame]:
        with self._cond:
            if self._frame is None:
                self._cond.wait(timeout=timeout)
            frame, self._frame = self._frame, None
            return frame


class ServerProxy:
    """Server-side proxy for one instance: input path and frame path."""

    def __init__(self, instance: int, trace: TraceCollector, clock: ClockDomain,
                 codec: CodecId, samplers: dict, pipeline_inbox: Callable,
                 on_resize: Callable, offset_holder: dict,
                 stop: threading.Event, on_error: Callable):
        self.instance = instance
        self.trace = trace
        self.clock = clock
        self.codec = codec
        self.samplers = samplers  # sp, ipc, net_down, cp
        self.pipeline_inbox = pipeline_inbox
        self.on_resize = on_resize
        self.offset_holder = offset_holder  # filled by the client after sync
        self.stop = stop
        self.on_error = on_error
        self.handoff = HandoffQueue()
        self.server_frames = 0
        self._input_sock: Optional[socket.socket] = None
        self._frame_sock: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []

    def attach(self, sock: socket.socket, channel: int) -> None:
        if channel == CHANNEL_INPUT:
            self._input_sock = sock
            self._spawn(self._input_loop, "sproxy-in")
        elif channel == CHANNEL_FRAME:
            self._frame_sock = sock
            self._spawn(self._frame_loop, "sproxy-frame")
        else:
            raise ConnectionError(f"unknown channel {channel}")

    def _spawn(self, fn, name: str) -> None:
        t = threading.Thread(target=self._guard, args=(fn,),
                             name=f"{name}-{self.instance}", daemon=True)
        t.start()
        self._threads.append(t)

    def _guard(self, fn) -> None:
        try:
            fn()
        except (ConnectionError, OSError):
            pass  # socket closed during shutdown
        except Exception as exc:  # hard failure, surfaced by the runner
            self.on_error(exc)

    # --- input path ---------------------------------------------------------

    def _input_loop(self) -> None:
        sock = self._input_sock
        while not self.stop.is_set():
            body = wire.read_message(sock)
            kind = wire.peek_kind(body)
            if kind == wire.MsgKind.SYNC:
                probe = wire.decode_sync(body)
                t2 = self.clock.now()
                reply = wire.SyncReply(round=probe.round, t1=probe.t1, t2=t2,
                                       t3=self.clock.now())
                wire.write_message(sock, wire.encode_sync_reply(reply))
            elif kind == wire.MsgKind.INPUT:
                inp = wire.decode_input(body)
                t2 = self.clock.now()
                self.trace.emit_hook(HookId.PROXY_INPUT_RECV, self.instance, t2,
                                     Clock.SERVER, tag=inp.tag)
                offset = self.offset_holder.get("estimate", 0)
                self.trace.emit_span(StageSpan(
                    stage=StageKind.CS, instance=self.instance, pass_index=-1,
                    tag=inp.tag, frame_seq=0,
                    t_start=int(inp.client_send_ts + offset), t_end=t2,
                    clock=Clock.SERVER,
                ))
                sp_cost = self.samplers["sp"]()
                if sp_cost:
                    time.sleep(sp_cost / 1e9)
                t3 = self.clock.now()
                self.trace.emit_span(StageSpan(
                    stage=StageKind.SP, instance=self.instance, pass_index=-1,
                    tag=inp.tag, frame_seq=0, t_start=t2, t_end=t3,
                    clock=Clock.SERVER,
                ))
                self.trace.emit_hook(HookId.PROXY_INPUT_FWD, self.instance, t3,
                                     Clock.SERVER, tag=inp.tag)
                ipc = self.samplers["ipc"]()
                if ipc:
                    time.sleep(ipc / 1e9)
                self.pipeline_inbox(inp.tag, t3)
            elif kind == wire.MsgKind.RESIZE:
                msg = wire.decode_resize(body)
                self.on_resize(msg.width, msg.height)
                self.trace.emit_meta("resize", self.clock.now(),
                                     instance=self.instance,
                                     width=msg.width, height=msg.height)
            else:
                raise TrackingError(f"unexpected message kind {kind} on input path")

    # --- frame path ---------------------------------------------------------

    def _frame_loop(self) -> None:
        sock = self._frame_sock
        while not self.stop.is_set():
            item = self.handoff.get(self.stop)
            if item is _SENTINEL or item is None:  # None = end of stream
                break
            frame, stash, sent_event = item
            t8 = self.clock.now()
            self.server_frames += 1
            if stash is not None:
                frame, tag = extract_and_restore(frame, stash)
                if tag != frame.primary_tag:
                    raise TrackingError(
                        f"instance {self.instance}: extracted tag {tag:#x} "
                        f"!= primary {frame.primary_tag:#x}"
                    )
                extracted = tag
            else:
                extracted = frame.primary_tag
            self.trace.emit_hook(HookId.PROXY_FRAME_RECV, self.instance, t8,
                                 Clock.SERVER, tag=extracted, frame=frame.seq)
            body = wire.encode_frame(frame, self.codec)  # real codec work
            cp_extra = self.samplers["cp"]()
            if cp_extra:
                time.sleep(cp_extra / 1e9)
            t_cp_end = self.clock.now()
            self.trace.emit_span(StageSpan(
                stage=StageKind.CP, instance=self.instance, pass_index=-1,
                tag=frame.primary_tag, frame_seq=frame.seq, t_start=t8,
                t_end=t_cp_end, clock=Clock.SERVER,
            ))
            delay = self.samplers["net_down"]()
            if delay:
                time.sleep(delay / 1e9)
            wire.write_message(sock, body)
            t9 = self.clock.now()
            self.trace.emit_span(StageSpan(
                stage=StageKind.SS, instance=self.instance, pass_index=-1,
                tag=frame.primary_tag, frame_seq=frame.seq, t_start=t_cp_end,
                t_end=t9, clock=Clock.SERVER,
            ))
            self.trace.emit_hook(HookId.PROXY_FRAME_SENT, self.instance, t9,
                                 Clock.SERVER, frame=frame.seq)
            if sent_event is not None:
                sent_event.set()
        try:
            sock.shutdown(socket.SHUT_WR)
        except OSError:
            pass

    def join(self, timeout: float = 5.0) -> None:
        for t in self._threads:
            t.join(timeout=timeout)


class ClientProxy:
    """Client-side proxy for one instance: tags inputs, matches frames."""

    def __init__(self, instance: int, host: str, port: int,
                 trace: TraceCollector, clock: ClockDomain, samplers: dict,
                 slow_motion: bool, stop: threading.Event, on_error: Callable):
        self.instance = instance
        self.trace = trace
        self.clock = clock
        self.samplers = samplers  # net_up
        self.slow_motion = slow_motion
        self.stop = stop
        self.on_error = on_error
        self.alloc = TagAllocator(instance + 1)
        self.outstanding: dict[int, int] = {}
        self.gate: list[bytes] = []
        self.unmatched = 0
        self.client_frames = 0
        self.stats = AgentStats()
        self.mailbox = LatestMailbox()
        self.offset_holder: dict = {}
        self._lock = threading.Lock()
        self._send_lock = threading.Lock()

        self._input_sock = socket.create_connection((host, port))
        self._input_sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_hello(self._input_sock, instance, CHANNEL_INPUT)
        self._frame_sock = socket.create_connection((host, port))
        self._frame_sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        send_hello(self._frame_sock, instance, CHANNEL_FRAME)
        self._frame_thread = threading.Thread(
            target=self._guard, args=(self._frame_loop,),
            name=f"cproxy-frame-{instance}", daemon=True,
        )

    def start(self) -> None:
        self._frame_thread.start()

    def _guard(self, fn) -> None:
        try:
            fn()
        except (ConnectionError, OSError):
            pass
        except Exception as exc:
            self.on_error(exc)

    def sync_clocks(self, rounds: int) -> float:
        """Two-way handshake; stores the min-RTT offset estimate."""
        observed = []
        for rnd in range(max(1, rounds)):
            t1 = self.clock.now()
            wire.write_message(self._input_sock,
                               wire.encode_sync(wire.SyncProbe(round=rnd, t1=t1)))
            reply = wire.decode_sync_reply(wire.read_message(self._input_sock))
            t4 = self.clock.now()
            observed.append(SyncRound(t1=reply.t1, t2=reply.t2, t3=reply.t3, t4=t4))
        estimate = estimate_offset(observed)
        self.offset_holder["estimate"] = int(estimate)
        return float(estimate)

    def send_action(self, action: bytes) -> None:
        with self._lock:
            if self.slow_motion and self.outstanding:
                self.gate.append(action)
                return
        self._do_send(action)

    def _do_send(self, action: bytes) -> None:
        with self._send_lock:
            tag = self.alloc.next()
            t1 = self.clock.now()
            with self._lock:
                self.outstanding[tag] = t1
            self.trace.emit_hook(HookId.CLIENT_INPUT_CAPTURE, self.instance, t1,
                                 Clock.CLIENT, tag=tag)
            self.stats.emitted += 1
            delay = self.samplers["net_up"]()
            if delay:
                time.sleep(delay / 1e9)
            wire.write_message(
                self._input_sock,
                wire.encode_input(TaggedInput(tag=tag, action=action,
                                              client_send_ts=t1)),
            )

    def send_resize(self, width: int, height: int) -> None:
        with self._send_lock:
            wire.write_message(self._input_sock,
                               wire.encode_resize(wire.Resize(width, height)))

    def _frame_loop(self) -> None:
        while not self.stop.is_set():
            body = wire.read_message(self._frame_sock)
            frame = wire.decode_frame(body)
            t10 = self.clock.now()
            self.client_frames += 1
            self.trace.emit_hook(HookId.CLIENT_FRAME_RECV, self.instance, t10,
                                 Clock.CLIENT, frame=frame.seq, tags=frame.tags)
            self.trace.emit_meta("frame_hash", t10, where="client",
                                 instance=self.instance, frame=frame.seq,
                                 sha=pixel_digest(frame.pixels))
            release = None
            with self._lock:
                for tag in frame.tags:
                    if tag in self.outstanding:
                        del self.outstanding[tag]
                    else:
                        self.unmatched += 1
                        self.trace.emit_meta("unmatched_tag", t10,
                                             instance=self.instance, tag=tag)
                if self.slow_motion and not self.outstanding and self.gate:
                    release = self.gate.pop(0)
            if release is not None:
                self._do_send(release)
            self.mailbox.put(frame)

    def outstanding_count(self) -> int:
        with self._lock:
            return len(self.outstanding)

    def close(self) -> None:
        for sock in (self._input_sock, self._frame_sock):
            try:
                sock.close()
            except OSError:
                pass

    def join(self, timeout: float = 5.0) -> None:
        if self._frame_thread.is_alive():
            self._frame_thread.join(timeout=timeout)
