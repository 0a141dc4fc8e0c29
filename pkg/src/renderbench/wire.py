"""Wire protocol between the client and server proxies.

Everything is little-endian. Each message body is self-delimiting and is
framed on the stream by a u32 total-body-length prefix. Message bodies:

  INPUT      0x01 | tag u64 | client_send_ts u64 | payload_len u16 | payload
  FRAME      0x02 | primary tag u64 | extra_count u16 | extras u64 each |
             seq u64 | width u16 | height u16 | codec u8 | payload_len u32 |
             payload = codec(pixels) || annotation block
  SYNC       0x03 | round u32 | t1 u64
  SYNC_REPLY 0x04 | round u32 | t1 u64 | t2 u64 | t3 u64
  RESIZE     0x05 | width u16 | height u16

The annotation block (when present) is: count u16, then per object
class_id u16 | x u16 | y u16 | instance u32.
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from enum import IntEnum

from renderbench import codec as codecs
from renderbench.core import AnnotationObject, Frame, TaggedInput
from renderbench.errors import BadKind, PixelLengthMismatch, Truncated


class MsgKind(IntEnum):
    INPUT = 0x01
    FRAME = 0x02
    SYNC = 0x03
    SYNC_REPLY = 0x04
    RESIZE = 0x05


@dataclass(frozen=True)
class SyncProbe:
    round: int
    t1: int


@dataclass(frozen=True)
class SyncReply:
    round: int
    t1: int
    t2: int
    t3: int


@dataclass(frozen=True)
class Resize:
    width: int
    height: int


def _need(buf: bytes, offset: int, n: int, what: str) -> None:
    if len(buf) < offset + n:
        raise Truncated(f"{what}: need {offset + n} bytes, have {len(buf)}")


def peek_kind(body: bytes) -> MsgKind:
    _need(body, 0, 1, "kind")
    try:
        return MsgKind(body[0])
    except ValueError:
        raise BadKind(f"unknown message kind 0x{body[0]:02x}") from None


def encode_input(inp: TaggedInput) -> bytes:
    return (
        struct.pack("<BQQH", MsgKind.INPUT, inp.tag, inp.client_send_ts, len(inp.action))
        + inp.action
    )


def decode_input(body: bytes) -> TaggedInput:
    if peek_kind(body) != MsgKind.INPUT:
        raise BadKind(f"expected INPUT, got {peek_kind(body).name}")
    _need(body, 1, 18, "input header")
    tag, ts, plen = struct.unpack_from("<QQH", body, 1)
    _need(body, 19, plen, "input payload")
    return TaggedInput(tag=tag, action=body[19 : 19 + plen], client_send_ts=ts)


def encode_annotation(objects: list[AnnotationObject]) -> bytes:
    parts = [struct.pack("<H", len(objects))]
    for obj in objects:
        parts.append(struct.pack("<HHHI", obj.class_id, obj.x, obj.y, obj.instance))
    return b"".join(parts)


def decode_annotation(buf: bytes) -> list[AnnotationObject]:
    _need(buf, 0, 2, "annotation count")
    (count,) = struct.unpack_from("<H", buf, 0)
    _need(buf, 2, 10 * count, "annotation entries")
    objects = []
    for i in range(count):
        class_id, x, y, inst = struct.unpack_from("<HHHI", buf, 2 + 10 * i)
        objects.append(AnnotationObject(class_id=class_id, x=x, y=y, instance=inst))
    return objects


def encode_frame(frame: Frame, codec: codecs.CodecId) -> bytes:
    extras = frame.tags[1:]
    payload = codecs.encode(codec, frame.pixels)
    if frame.annotation is not None:
        payload += encode_annotation(frame.annotation)
    head = struct.pack("<BQH", MsgKind.FRAME, frame.primary_tag, len(extras))
    head += b"".join(struct.pack("<Q", t) for t in extras)
    head += struct.pack(
        "<QHHBI", frame.seq, frame.width, frame.height, int(codec), len(payload)
    )
    return head + payload


def decode_frame(body: bytes) -> Frame:
    if peek_kind(body) != MsgKind.FRAME:
        raise BadKind(f"expected FRAME, got {peek_kind(body).name}")
    _need(body, 1, 10, "frame tag header")
    primary, extra_count = struct.unpack_from("<QH", body, 1)
    off = 11
    _need(body, off, 8 * extra_count, "extra tags")
    extras = [struct.unpack_from("<Q", body, off + 8 * i)[0] for i in range(extra_count)]
    off += 8 * extra_count
    _need(body, off, 17, "frame header")
    seq, width, height, codec_raw, plen = struct.unpack_from("<QHHBI", body, off)
    off += 17
    _need(body, off, plen, "frame payload")
    payload = body[off : off + plen]
    codec = codecs.parse_codec(codec_raw)

    pixel_len = width * height * 4
    pixels, consumed = codecs.decode_prefix(codec, payload, pixel_len)
    if len(pixels) != pixel_len:
        raise PixelLengthMismatch(
            f"decoded {len(pixels)} pixel bytes, header says {pixel_len}"
        )
    rest = payload[consumed:]
    annotation = decode_annotation(rest) if rest else None

    tags = ([primary] if primary else []) + extras
    return Frame(
        seq=seq, width=width, height=height, pixels=pixels, tags=tags,
        annotation=annotation,
    )


def encode_sync(probe: SyncProbe) -> bytes:
    return struct.pack("<BIQ", MsgKind.SYNC, probe.round, probe.t1)


def decode_sync(body: bytes) -> SyncProbe:
    if peek_kind(body) != MsgKind.SYNC:
        raise BadKind(f"expected SYNC, got {peek_kind(body).name}")
    _need(body, 1, 12, "sync body")
    rnd, t1 = struct.unpack_from("<IQ", body, 1)
    return SyncProbe(round=rnd, t1=t1)


def encode_sync_reply(reply: SyncReply) -> bytes:
    return struct.pack("<BIQQQ", MsgKind.SYNC_REPLY, reply.round, reply.t1, reply.t2, reply.t3)


def decode_sync_reply(body: bytes) -> SyncReply:
    if peek_kind(body) != MsgKind.SYNC_REPLY:
        raise BadKind(f"expected SYNC_REPLY, got {peek_kind(body).name}")
    _need(body, 1, 28, "sync reply body")
    rnd, t1, t2, t3 = struct.unpack_from("<IQQQ", body, 1)
    return SyncReply(round=rnd, t1=t1, t2=t2, t3=t3)


def encode_resize(msg: Resize) -> bytes:
    return struct.pack("<BHH", MsgKind.RESIZE, msg.width, msg.height)


def decode_resize(body: bytes) -> Resize:
    if peek_kind(body) != MsgKind.RESIZE:
        raise BadKind(f"expected RESIZE, got {peek_kind(body).name}")
    _need(body, 1, 4, "resize body")
    w, h = struct.unpack_from("<HH", body, 1)
    return Resize(width=w, height=h)


# --- stream framing -------------------------------------------------------

_LEN = struct.Struct("<I")


def write_message(sock: socket.socket, body: bytes) -> None:
    sock.sendall(_LEN.pack(len(body)) + body)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        chunk = sock.recv(remaining)
        if not chunk:
            raise ConnectionError("peer closed")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_message(sock: socket.socket) -> bytes:
    (length,) = _LEN.unpack(_recv_exact(sock, 4))
    return _recv_exact(sock, length)
