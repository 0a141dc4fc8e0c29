# cython: language_level=3str, boundscheck=False, wraparound=False
"""Cython byte kernels: RLE codec and byte-equality scan.

These are the hot inner loops of the live harness (frame compression and
replay-agent frame comparison run over every pixel of every frame).
"""

from renderbench.errors import BadRun, OddLength


def rle_encode(data: bytes) -> bytes:
    """Encode byte-level maximal runs as (count u8 in [1,255], value u8) pairs."""
    cdef const unsigned char[:] src = data
    cdef Py_ssize_t n = src.shape[0]
    if n == 0:
        return b""
    out = bytearray(2 * n)
    cdef unsigned char[:] dst = out
    cdef Py_ssize_t i = 0, j = 0, run
    cdef unsigned char value
    while i < n:
        value = src[i]
        run = 1
        while i + run < n and run < 255 and src[i + run] == value:
            run += 1
        dst[j] = <unsigned char> run
        dst[j + 1] = value
        j += 2
        i += run
    return bytes(out[:j])


def rle_decode(data: bytes) -> bytes:
    """Inverse of rle_encode over a whole buffer."""
    cdef const unsigned char[:] src = data
    cdef Py_ssize_t n = src.shape[0]
    if n % 2:
        raise OddLength(f"RLE buffer length {n} is odd")
    cdef Py_ssize_t i, total = 0
    for i in range(0, n, 2):
        if src[i] == 0:
            raise BadRun(f"zero run count at offset {i}")
        total += src[i]
    out = bytearray(total)
    cdef unsigned char[:] dst = out
    cdef Py_ssize_t j = 0, k
    cdef unsigned char value
    for i in range(0, n, 2):
        value = src[i + 1]
        for k in range(src[i]):
            dst[j] = value
            j += 1
    return bytes(out)


def rle_decode_prefix(data: bytes, limit: Py_ssize_t) -> tuple:
    """Decode whole pairs until at least `limit` bytes are produced.

    Returns (decoded, consumed). May overshoot `limit` if the final run
    crosses it, or undershoot if `data` runs out.
    """
    cdef const unsigned char[:] src = data
    cdef Py_ssize_t n = src.shape[0]
    cdef Py_ssize_t i = 0, produced = 0
    while produced < limit and i + 1 < n:
        if src[i] == 0:
            raise BadRun(f"zero run count at offset {i}")
        produced += src[i]
        i += 2
    out = bytearray(produced)
    cdef unsigned char[:] dst = out
    cdef Py_ssize_t p = 0, j, k
    cdef unsigned char value
    for j in range(0, i, 2):
        value = src[j + 1]
        for k in range(src[j]):
            dst[p] = value
            p += 1
    return bytes(out), i


def equal_fraction(a: bytes, b: bytes) -> float:
    """Fraction of byte positions at which `a` and `b` agree."""
    cdef const unsigned char[:] x = a
    cdef const unsigned char[:] y = b
    cdef Py_ssize_t n = x.shape[0]
    if n != y.shape[0]:
        raise ValueError(f"length mismatch: {n} vs {y.shape[0]}")
    if n == 0:
        return 1.0
    cdef Py_ssize_t i, same = 0
    for i in range(n):
        if x[i] == y[i]:
            same += 1
    return same / <double> n
