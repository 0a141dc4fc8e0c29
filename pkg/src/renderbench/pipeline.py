"""Pipeline variants and the closed-form steady-state period oracle.

Per pass, the main application thread runs: input drain, application logic
(AL), render submission, the window-attribute query, then the frame copy of
an earlier frame. AL and the copy share that thread, so they can never
overlap; every other stage pair can. The copy discipline is what the
variants change:

  BASELINE     blocking copy of frame i-1 (wait for its render + transfer)
  OPT_MEMO     baseline copy, but the attribute query is memoized
  OPT_TWOSTEP  copy split into issue (frame i-1) + finish (frame i-2), so
               the PCIe transfer overlaps the next pass's AL
  OPT_FULL     both optimizations

With constant stage costs a (AL), q (attribute query), x (copy transfer),
r (render), a single uncontended instance settles into an exact period:

  BASELINE     max(a + q + x, r)
  OPT_MEMO     max(a + x, r)
  OPT_TWOSTEP  max(a + q, r, x)
  OPT_FULL     max(a, r, x)

assuming the post-copy stages (AS/CP/SS) are not the bottleneck. The DES
twin reproduces these periods exactly in virtual time; the live harness
approaches them within scheduler noise.
"""

from __future__ import annotations

from enum import Enum

from renderbench.costs import Dist
from renderbench.errors import NonConstantCosts


class PipelineVariant(str, Enum):
    BASELINE = "BASELINE"
    OPT_MEMO = "OPT_MEMO"
    OPT_TWOSTEP = "OPT_TWOSTEP"
    OPT_FULL = "OPT_FULL"

    @property
    def memoized(self) -> bool:
        return self in (PipelineVariant.OPT_MEMO, PipelineVariant.OPT_FULL)

    @property
    def twostep(self) -> bool:
        return self in (PipelineVariant.OPT_TWOSTEP, PipelineVariant.OPT_FULL)


def steady_state_period(al, attr, copy, rd, variant: PipelineVariant):
    """Exact steady-state pass period for constant costs (ns in, ns out)."""
    for name, v in (("al", al), ("attr", attr), ("copy", copy), ("rd", rd)):
        if v < 0:
            raise ValueError(f"{name} cost {v} < 0")
    q = 0 if variant.memoized else attr
    if variant.twostep:
        return max(al + q, rd, copy)
    return max(al + q + copy, rd)


def steady_state_period_from_dists(al: Dist, attr: Dist, copy_ns, rd: Dist,
                                   variant: PipelineVariant):
    """Dist-level wrapper; rejects non-constant distributions."""
    for name, d in (("al", al), ("attr", attr), ("rd", rd)):
        if not d.is_constant:
            raise NonConstantCosts(f"{name} is {d.kind}, need constant")
    return steady_state_period(
        al.constant_value, attr.constant_value, copy_ns, rd.constant_value, variant
    )


def copy_time_ns(frame_bytes: int, bandwidth_bytes_per_s: int, latency_ns: int,
                 concurrency: int = 1):
    """Uncontended (or fixed-k processor-shared) PCIe transfer time.

    Exact when bandwidth divides the byte-nanosecond product; returns an int
    in that case, else a float (closed-form checks use exact configurations).
    """
    num = frame_bytes * concurrency * 1_000_000_000
    if num % bandwidth_bytes_per_s == 0:
        return latency_ns + num // bandwidth_bytes_per_s
    return latency_ns + num / bandwidth_bytes_per_s
