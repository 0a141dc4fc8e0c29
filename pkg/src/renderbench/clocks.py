"""Clock domains and the two-way clock-offset handshake.

A simplified PTP exchange: per round the client records t1 (send) and t4
(receive), the server stamps t2 (receive) and t3 (reply send). The round's
offset estimate is ((t2 - t1) + (t3 - t4)) / 2 and is exact when the two
directions delay equally; with asymmetric delays d1 != d2 the estimate is
biased by (d1 - d2) / 2. The handshake keeps the offset from the
minimum-RTT round.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence


@dataclass(frozen=True)
class SyncRound:
    t1: int
    t2: int
    t3: int
    t4: int

    @property
    def offset(self) -> Fraction:
        return Fraction((self.t2 - self.t1) + (self.t3 - self.t4), 2)

    @property
    def rtt(self):
        return (self.t4 - self.t1) - (self.t3 - self.t2)


def estimate_offset(rounds: Sequence[SyncRound]) -> Fraction:
    """Offset (server clock minus client clock) of the minimum-RTT round."""
    if not rounds:
        raise ValueError("need at least one sync round")
    best = min(rounds, key=lambda r: r.rtt)
    return best.offset


class ClockDomain:
    """Monotonic nanosecond clock with a fixed configured offset.

    The harness runs client and server in one process; a nonzero offset
    makes the cross-clock correction machinery observable in tests.
    """

    def __init__(self, offset_ns: int = 0):
        self.offset_ns = offset_ns

    def now(self) -> int:
        return time.monotonic_ns() + self.offset_ns
