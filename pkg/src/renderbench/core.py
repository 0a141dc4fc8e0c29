"""Domain types: tags, frames, stages, hooks, and pixel tag embedding.

A tag is a 64-bit id minted at the client proxy and threaded through every
stage so an input can be matched with the frame it produced. Between the
app and the server proxy the tag survives the frame handoff by temporarily
overwriting the first 8 pixel bytes; the originals are stashed and restored
on extraction, so relayed frames are byte-identical to what was rendered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum, IntEnum
from typing import Optional

from renderbench.errors import FrameTooSmall, ReservedTag, StashMismatch

NO_TAG = 0
TAG_BYTES = 8
MAX_ACTION_BYTES = 256

DEFAULT_WIDTH = 1920
DEFAULT_HEIGHT = 1080


def make_tag(client_id: int, seq: int) -> int:
    """Pack (client_id, per-client seq) into one 64-bit tag.

    Client id occupies the high 16 bits, the sequence the low 48; the
    all-zero combination is reserved to mean "no tag".
    """
    if not 0 <= client_id < (1 << 16):
        raise ValueError(f"client_id {client_id} out of 16-bit range")
    if not 0 <= seq < (1 << 48):
        raise ValueError(f"seq {seq} out of 48-bit range")
    if client_id == 0 and seq == 0:
        raise ReservedTag("tag 0 is reserved for 'no tag'")
    return (client_id << 48) | seq


def tag_client(tag: int) -> int:
    return tag >> 48


def tag_seq(tag: int) -> int:
    return tag & ((1 << 48) - 1)


class TagAllocator:
    """Mints strictly increasing tags for one client."""

    def __init__(self, client_id: int):
        if not 1 <= client_id < (1 << 16):
            raise ValueError("client_id must be in [1, 2^16)")
        self.client_id = client_id
        self._next = 0

    def next(self) -> int:
        tag = make_tag(self.client_id, self._next)
        self._next += 1
        return tag


@dataclass(frozen=True)
class TaggedInput:
    """One user action with its tag and client-clock send timestamp."""

    tag: int
    action: bytes
    client_send_ts: int  # ns, client clock

    def __post_init__(self):
        if self.tag == NO_TAG:
            raise ValueError("TaggedInput requires a non-zero tag")
        if len(self.action) > MAX_ACTION_BYTES:
            raise ValueError(f"action payload {len(self.action)} > {MAX_ACTION_BYTES}")


@dataclass(frozen=True)
class AnnotationObject:
    class_id: int
    x: int
    y: int
    instance: int


@dataclass
class Frame:
    """A rendered frame: pixel buffer plus tracking metadata.

    `tags` lists every input consumed by the pass that produced the frame
    (possibly empty: games render whether or not input arrived). In DES mode
    `pixels` may be empty; the harness always carries real RGBA bytes.
    """

    seq: int
    width: int
    height: int
    pixels: bytes
    tags: list[int] = field(default_factory=list)
    annotation: Optional[list[AnnotationObject]] = None

    def __post_init__(self):
        if self.pixels and len(self.pixels) != self.width * self.height * 4:
            raise ValueError(
                f"pixel buffer is {len(self.pixels)} bytes, expected "
                f"{self.width}x{self.height}x4 = {self.width * self.height * 4}"
            )

    @property
    def primary_tag(self) -> int:
        return self.tags[0] if self.tags else NO_TAG


class StageKind(str, Enum):
    CS = "CS"          # client -> server input send
    SP = "SP"          # server proxy input processing
    PS = "PS"          # proxy -> app IPC (includes app-side queue wait)
    AL = "AL"          # application logic
    RD = "RD"          # GPU render (device clock)
    FC = "FC"          # blocking frame copy (baseline pipelines only)
    FC_START = "FCStart"  # two-step copy: non-blocking issue
    FC_END = "FCEnd"      # two-step copy: residual wait
    AS = "AS"          # app -> proxy frame IPC
    CP = "CP"          # proxy compression
    SS = "SS"          # server -> client frame send
    ATTR_QUERY = "ATTR_QUERY"  # window-attribute lookup before each copy


class HookId(IntEnum):
    """Fixed measurement points along the input/frame path."""

    CLIENT_INPUT_CAPTURE = 1   # client proxy tags + sends the input
    PROXY_INPUT_RECV = 2       # server proxy receives the input
    PROXY_INPUT_FWD = 3        # server proxy forwards it to the app
    APP_INPUT_RECV = 4         # app consumes the input (event-loop drain)
    RENDER_SUBMIT = 5          # start of GPU work
    READBACK_START = 6         # frame readback begins (tag embed point)
    APP_FRAME_PUSH = 7         # app pushes the frame toward the proxy
    PROXY_FRAME_RECV = 8       # proxy receives it (tag extract point)
    PROXY_FRAME_SENT = 9       # proxy finished compress + send
    CLIENT_FRAME_RECV = 10     # client proxy receives the frame (tag match)


class Clock(str, Enum):
    CLIENT = "CLIENT"
    SERVER = "SERVER"
    DEVICE = "DEVICE"


@dataclass(frozen=True)
class StageSpan:
    """One timed occurrence of a pipeline stage."""

    stage: StageKind
    instance: int
    pass_index: int
    tag: int
    frame_seq: int
    t_start: int
    t_end: int
    clock: Clock

    def __post_init__(self):
        if self.t_end < self.t_start:
            raise ValueError(f"{self.stage}: t_end {self.t_end} < t_start {self.t_start}")

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start


@dataclass(frozen=True)
class TagStash:
    """The 8 original pixel bytes displaced by an embedded tag."""

    frame_seq: int
    original_bytes: bytes

    def __post_init__(self):
        if len(self.original_bytes) != TAG_BYTES:
            raise ValueError("stash must hold exactly 8 bytes")


def embed_tag(frame: Frame, tag: int) -> tuple[Frame, TagStash]:
    """Overwrite pixel bytes [0, 8) with the little-endian tag.

    Returns the tagged frame and a stash holding the displaced bytes; the
    stash travels out-of-band (in-process), never on the wire.
    """
    if tag == NO_TAG:
        raise ValueError("cannot embed the reserved tag 0")
    if len(frame.pixels) < TAG_BYTES:
        raise FrameTooSmall(f"{len(frame.pixels)} pixel bytes < {TAG_BYTES}")
    stash = TagStash(frame_seq=frame.seq, original_bytes=frame.pixels[:TAG_BYTES])
    tagged = Frame(
        seq=frame.seq,
        width=frame.width,
        height=frame.height,
        pixels=tag.to_bytes(TAG_BYTES, "little") + frame.pixels[TAG_BYTES:],
        tags=frame.tags,
        annotation=frame.annotation,
    )
    return tagged, stash


def extract_and_restore(frame: Frame, stash: TagStash) -> tuple[Frame, int]:
    """Inverse of embed_tag: recover the tag and the original pixel bytes."""
    if stash.frame_seq != frame.seq:
        raise StashMismatch(f"stash for frame {stash.frame_seq}, got frame {frame.seq}")
    if len(frame.pixels) < TAG_BYTES:
        raise FrameTooSmall(f"{len(frame.pixels)} pixel bytes < {TAG_BYTES}")
    tag = int.from_bytes(frame.pixels[:TAG_BYTES], "little")
    restored = Frame(
        seq=frame.seq,
        width=frame.width,
        height=frame.height,
        pixels=stash.original_bytes + frame.pixels[TAG_BYTES:],
        tags=frame.tags,
        annotation=frame.annotation,
    )
    return restored, tag
