"""Frame payload codecs: RAW passthrough and byte-level RLE.

RLE stands in for the Tight-encoding class of remote-framebuffer
compressors; decoder(encoder(x)) == x for every byte string.
"""

from __future__ import annotations

from enum import IntEnum

from renderbench import kernels
from renderbench.errors import BadCodec


class CodecId(IntEnum):
    RAW = 0
    RLE = 1


def encode(codec: CodecId, data: bytes) -> bytes:
    if codec == CodecId.RAW:
        return data
    if codec == CodecId.RLE:
        return kernels.rle_encode(data)
    raise BadCodec(f"unknown codec {codec}")


def decode_prefix(codec: CodecId, data: bytes, pixel_len: int) -> tuple[bytes, int]:
    """Decode exactly the pixel portion of a payload.

    Returns (pixels, bytes_consumed); anything after `bytes_consumed` is the
    caller's (the annotation block). Length validation is the caller's job.
    """
    if codec == CodecId.RAW:
        return data[:pixel_len], min(pixel_len, len(data))
    if codec == CodecId.RLE:
        return kernels.rle_decode_prefix(data, pixel_len)
    raise BadCodec(f"unknown codec {codec}")


def parse_codec(value) -> CodecId:
    if isinstance(value, CodecId):
        return value
    if isinstance(value, str):
        try:
            return CodecId[value.upper()]
        except KeyError:
            raise BadCodec(f"unknown codec {value!r}") from None
    try:
        return CodecId(value)
    except ValueError:
        raise BadCodec(f"unknown codec {value!r}") from None
