"""Byte-kernel backend selection.

Prefers the compiled ``_speedups`` extension; falls back to the pure-Python
implementation when it is missing or when RENDERBENCH_PURE_PY=1 is set.
"""

import os

if os.environ.get("RENDERBENCH_PURE_PY", "0") not in ("", "0"):
    from renderbench.kernels import pure as _impl

    BACKEND = "pure"
else:
    try:
        from renderbench.kernels import _speedups as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from renderbench.kernels import pure as _impl

        BACKEND = "pure"

rle_encode = _impl.rle_encode
rle_decode = _impl.rle_decode
rle_decode_prefix = _impl.rle_decode_prefix
equal_fraction = _impl.equal_fraction

__all__ = [
    "BACKEND",
    "rle_encode",
    "rle_decode",
    "rle_decode_prefix",
    "equal_fraction",
]
