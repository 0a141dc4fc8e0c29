"""Pure-Python byte kernels (fallback when the Cython extension is absent).

Correctness-identical to ``_speedups``; an order of magnitude slower on
multi-megabyte buffers. See benchmarks/bench_kernels.py.
"""

from __future__ import annotations

import re

from renderbench.errors import BadRun, OddLength

# Longest-match runs, capped at 255 so the count fits one byte.
_RUN = re.compile(rb"(.)\1{0,254}", re.DOTALL)


def rle_encode(data: bytes) -> bytes:
    """Encode byte-level maximal runs as (count u8 in [1,255], value u8) pairs."""
    return b"".join(
        bytes((len(m.group(0)),)) + m.group(1) for m in _RUN.finditer(data)
    )


def rle_decode(data: bytes) -> bytes:
    """Inverse of rle_encode over a whole buffer."""
    if len(data) % 2:
        raise OddLength(f"RLE buffer length {len(data)} is odd")
    parts = []
    for i in range(0, len(data), 2):
        count = data[i]
        if count == 0:
            raise BadRun(f"zero run count at offset {i}")
        parts.append(data[i + 1 : i + 2] * count)
    return b"".join(parts)


def rle_decode_prefix(data: bytes, limit: int) -> tuple[bytes, int]:
    """Decode whole pairs until at least `limit` bytes are produced.

    Returns (decoded, consumed). The decoded length may overshoot `limit`
    if the final run crosses it, or undershoot if `data` runs out; callers
    decide whether either is an error.
    """
    parts = []
    produced = 0
    i = 0
    while produced < limit and i + 1 < len(data):
        count = data[i]
        if count == 0:
            raise BadRun(f"zero run count at offset {i}")
        parts.append(data[i + 1 : i + 2] * count)
        produced += count
        i += 2
    return b"".join(parts), i


def equal_fraction(a: bytes, b: bytes) -> float:
    """Fraction of byte positions at which `a` and `b` agree."""
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if not a:
        return 1.0
    # XOR via big ints keeps this at C speed despite being stdlib-only:
    # equal positions become zero bytes, which bytes.count can tally.
    diff = int.from_bytes(a, "little") ^ int.from_bytes(b, "little")
    return diff.to_bytes(len(a), "little").count(0) / len(a)
