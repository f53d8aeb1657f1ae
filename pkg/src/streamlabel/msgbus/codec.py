"""Wire format for frame messages.

All fields little-endian::

    frame_id    int32
    width       uint16
    height      uint16
    pixel_count uint32   (== width * height)
    pixels      int32 * pixel_count

Over TCP every encoded message is preceded by a uint32 byte length.
"""

from __future__ import annotations

import struct
import sys
from array import array
from dataclasses import dataclass
from typing import Sequence

HEADER = struct.Struct("<iHHI")
LENGTH_PREFIX = struct.Struct("<I")

_SWAP = sys.byteorder != "little"


class CodecError(ValueError):
    pass


class TruncatedHeader(CodecError):
    pass


class TruncatedPayload(CodecError):
    pass


class PixelCountMismatch(CodecError):
    pass


class TrailingBytes(CodecError):
    pass


@dataclass(frozen=True)
class FrameMessage:
    frame_id: int
    width: int
    height: int
    pixels: tuple[int, ...]

    def __post_init__(self):
        if not isinstance(self.pixels, tuple):
            object.__setattr__(self, "pixels", tuple(self.pixels))
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixels length {len(self.pixels)} != {self.width}x{self.height}"
            )


def _int32_array(values: Sequence[int]) -> array:
    arr = array("i", values)
    if arr.itemsize != 4:  # pragma: no cover - exotic platforms
        raise CodecError("platform int is not 32-bit")
    return arr


def encode_message(msg: FrameMessage) -> bytes:
    n = msg.width * msg.height
    if len(msg.pixels) != n:
        raise CodecError(f"pixels length {len(msg.pixels)} != width*height {n}")
    try:
        header = HEADER.pack(msg.frame_id, msg.width, msg.height, n)
        arr = _int32_array(msg.pixels)
    except (struct.error, OverflowError) as exc:
        raise CodecError(f"field out of range: {exc}") from None
    if _SWAP:  # pragma: no cover
        arr.byteswap()
    return header + arr.tobytes()


def decode_message(data: bytes) -> FrameMessage:
    if len(data) < HEADER.size:
        raise TruncatedHeader(f"truncated header: {len(data)} < {HEADER.size} bytes")
    frame_id, width, height, count = HEADER.unpack_from(data, 0)
    if count != width * height:
        raise PixelCountMismatch(f"pixel_count {count} != width*height {width * height}")
    end = HEADER.size + 4 * count
    if len(data) < end:
        raise TruncatedPayload(
            f"truncated payload: need {4 * count} bytes, have {len(data) - HEADER.size}"
        )
    if len(data) > end:
        raise TrailingBytes(f"{len(data) - end} trailing bytes after payload")
    arr = array("i")
    arr.frombytes(bytes(data[HEADER.size:end]))
    if _SWAP:  # pragma: no cover
        arr.byteswap()
    return FrameMessage(frame_id, width, height, tuple(arr))


def frame(payload: bytes) -> bytes:
    """Add the TCP length prefix."""
    return LENGTH_PREFIX.pack(len(payload)) + payload
