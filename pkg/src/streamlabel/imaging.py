"""Image ingestion, binarization and rendering.

Everything here is row-major with a top-left origin. Decoders work on raw
``bytes`` and never read past the end of the buffer; malformed input raises
a subclass of :class:`ImageFormatError`.
"""

from __future__ import annotations

import random
import re
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

MAX_DIM = 65535


class ImageFormatError(ValueError):
    """Base class for decoder errors."""


class UnsupportedMagic(ImageFormatError):
    pass


class MalformedHeader(ImageFormatError):
    pass


class TruncatedData(ImageFormatError):
    pass


class UnsupportedMaxval(ImageFormatError):
    pass


class UnsupportedBMP(ImageFormatError):
    pass


def _check_dims(width: int, height: int) -> None:
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise ValueError(f"image dimensions {width}x{height} outside 1..{MAX_DIM}")


@dataclass(frozen=True)
class GrayImage:
    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        _check_dims(self.width, self.height)
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixel count {len(self.pixels)} != {self.width}x{self.height}"
            )


@dataclass(frozen=True)
class BinaryImage:
    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        _check_dims(self.width, self.height)
        if len(self.pixels) != self.width * self.height:
            raise ValueError(
                f"pixel count {len(self.pixels)} != {self.width}x{self.height}"
            )
        if self.pixels.translate(None, b"\x00\xff"):
            raise ValueError("binary image pixels must be 0 or 255")

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]]) -> "BinaryImage":
        """Build from nested rows; any nonzero value is treated as white."""
        height = len(rows)
        width = len(rows[0]) if height else 0
        if any(len(r) != width for r in rows):
            raise ValueError("ragged rows")
        flat = bytes(255 if v else 0 for r in rows for v in r)
        return cls(width, height, flat)

    def rows(self) -> list[list[int]]:
        w = self.width
        return [list(self.pixels[y * w:(y + 1) * w]) for y in range(self.height)]


@dataclass(frozen=True)
class LabelImage:
    width: int
    height: int
    labels: tuple[int, ...]

    def __post_init__(self):
        _check_dims(self.width, self.height)
        if len(self.labels) != self.width * self.height:
            raise ValueError(
                f"label count {len(self.labels)} != {self.width}x{self.height}"
            )

    def rows(self) -> list[list[int]]:
        w = self.width
        return [list(self.labels[y * w:(y + 1) * w]) for y in range(self.height)]

    def component_count(self) -> int:
        return len(set(self.labels) - {0})

    def matches_background(self, img: BinaryImage) -> bool:
        """True when label 0 appears exactly where ``img`` is black."""
        if (img.width, img.height) != (self.width, self.height):
            return False
        return all((lab == 0) == (pix == 0) for lab, pix in zip(self.labels, img.pixels))


# --- PGM -------------------------------------------------------------------

_PNM_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _pnm_header(data: bytes, fields: int) -> tuple[list[int], int]:
    """Parse ``fields`` integer tokens after the magic; return them and the
    offset of the first payload byte."""
    pos = 2
    values = []
    for _ in range(fields):
        m = _PNM_TOKEN.match(data, pos)
        if m is None:
            raise MalformedHeader("header ends before all fields are present")
        tok = m.group(1)
        if not tok.isdigit():
            raise MalformedHeader(f"non-numeric header field {tok[:16]!r}")
        values.append(int(tok))
        pos = m.start(1) + len(tok)
    if pos >= len(data) or data[pos:pos + 1] not in (b" ", b"\t", b"\n", b"\r"):
        raise MalformedHeader("missing whitespace after header")
    return values, pos + 1


def load_pgm(data: bytes) -> GrayImage:
    if len(data) < 2 or data[:2] != b"P5":
        raise UnsupportedMagic(f"unsupported magic {data[:2]!r}")
    (width, height, maxval), offset = _pnm_header(data, 3)
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if not 1 <= maxval <= 255:
        raise UnsupportedMaxval(f"unsupported maxval {maxval}")
    n = width * height
    payload = data[offset:offset + n]
    if len(payload) < n:
        raise TruncatedData(f"truncated payload: need {n} bytes, have {len(payload)}")
    return GrayImage(width, height, bytes(payload))


def encode_pgm(img: GrayImage | BinaryImage) -> bytes:
    return b"P5\n%d %d\n255\n" % (img.width, img.height) + bytes(img.pixels)


# --- BMP -------------------------------------------------------------------

def _luma(r: int, g: int, b: int) -> int:
    return (77 * r + 150 * g + 29 * b) >> 8


def load_bmp(data: bytes) -> GrayImage:
    if len(data) < 2 or data[:2] != b"BM":
        raise UnsupportedMagic(f"unsupported magic {data[:2]!r}")
    if len(data) < 14 + 40:
        raise TruncatedData("truncated BMP header")
    (pixel_offset,) = struct.unpack_from("<I", data, 10)
    (dib_size,) = struct.unpack_from("<I", data, 14)
    if dib_size < 40:
        raise UnsupportedBMP(f"unsupported BMP variant: DIB header size {dib_size}")
    width, height, planes, bpp, compression = struct.unpack_from("<iiHHI", data, 18)
    (colors_used,) = struct.unpack_from("<I", data, 46)
    if compression != 0 or bpp not in (8, 24) or planes != 1:
        raise UnsupportedBMP(
            f"unsupported BMP variant: bpp={bpp} compression={compression}"
        )
    top_down = height < 0
    height = abs(height)
    if not (1 <= width <= MAX_DIM and 1 <= height <= MAX_DIM):
        raise MalformedHeader(f"bad dimensions {width}x{height}")

    palette = None
    if bpp == 8:
        ncolors = colors_used or 256
        if ncolors > 256:
            raise MalformedHeader(f"palette too large ({ncolors})")
        pal_start = 14 + dib_size
        pal_end = pal_start + 4 * ncolors
        if pal_end > len(data):
            raise TruncatedData("truncated BMP palette")
        palette = [
            _luma(data[i + 2], data[i + 1], data[i])
            for i in range(pal_start, pal_end, 4)
        ]

    bytes_pp = bpp // 8
    stride = (width * bytes_pp + 3) & ~3
    if pixel_offset + stride * (height - 1) + width * bytes_pp > len(data):
        raise TruncatedData("truncated BMP pixel data")

    out = bytearray(width * height)
    for row in range(height):
        y = row if top_down else height - 1 - row
        base = pixel_offset + row * stride
        dst = y * width
        if palette is not None:
            for x in range(width):
                idx = data[base + x]
                if idx >= len(palette):
                    raise MalformedHeader(f"palette index {idx} out of range")
                out[dst + x] = palette[idx]
        else:
            for x in range(width):
                p = base + 3 * x
                out[dst + x] = _luma(data[p + 2], data[p + 1], data[p])
    return GrayImage(width, height, bytes(out))


def encode_bmp24(img: GrayImage | BinaryImage) -> bytes:
    """Encode a gray image as an uncompressed bottom-up 24-bit BMP."""
    w, h = img.width, img.height
    stride = (3 * w + 3) & ~3
    pad = b"\x00" * (stride - 3 * w)
    rows = []
    for y in range(h - 1, -1, -1):
        line = img.pixels[y * w:(y + 1) * w]
        rows.append(bytes(v for v in line for _ in range(3)) + pad)
    payload = b"".join(rows)
    header = struct.pack("<2sIHHI", b"BM", 54 + len(payload), 0, 0, 54)
    dib = struct.pack("<IiiHHIIiiII", 40, w, h, 1, 24, 0, len(payload), 2835, 2835, 0, 0)
    return header + dib + payload


def load_image(data: bytes) -> GrayImage:
    """Dispatch on magic bytes."""
    if data[:2] == b"P5":
        return load_pgm(data)
    if data[:2] == b"BM":
        return load_bmp(data)
    raise UnsupportedMagic(f"unsupported magic {data[:2]!r}")


def read_image(path: str | Path) -> GrayImage:
    return load_image(Path(path).read_bytes())


# --- binarize / render -----------------------------------------------------

def binarize(img: GrayImage | BinaryImage, threshold: int = 128) -> BinaryImage:
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold {threshold} outside 0..255")
    table = bytes(255 if v >= threshold else 0 for v in range(256))
    return BinaryImage(img.width, img.height, bytes(img.pixels).translate(table))


# odd multiplier => bijection on 24-bit values, so labels 1..2^24-1 never
# collide and never map to black
_PALETTE_MULT = 0x9E3779B1


def label_color(label: int) -> tuple[int, int, int]:
    if label == 0:
        return (0, 0, 0)
    v = (label * _PALETTE_MULT) & 0xFFFFFF
    return (v >> 16, (v >> 8) & 0xFF, v & 0xFF)


def render_labels(lbl: LabelImage) -> bytes:
    """Render a label image as a binary PPM (P6)."""
    cache: dict[int, bytes] = {}
    body = bytearray()
    for lab in lbl.labels:
        rgb = cache.get(lab)
        if rgb is None:
            rgb = cache[lab] = bytes(label_color(lab))
        body += rgb
    return b"P6\n%d %d\n255\n" % (lbl.width, lbl.height) + bytes(body)


# --- generated patterns ----------------------------------------------------

def random_binary(width: int, height: int, density: float, seed: int | None = None) -> BinaryImage:
    rng = random.Random(seed)
    return BinaryImage(
        width, height, bytes(255 if rng.random() < density else 0 for _ in range(width * height))
    )


def make_pattern(spec: str) -> BinaryImage:
    """Build a synthetic frame from a ``kind:WxH[:args]`` string.

    Kinds: ``black``, ``white``, ``checker``, ``diagonal``,
    ``random:WxH:density:seed`` and ``blobs:WxH`` (a handful of filled
    rectangles and a ring, few enough components for 8-bit labels).
    """
    parts = spec.split(":")
    kind = parts[0]
    try:
        w, h = (int(v) for v in parts[1].lower().split("x"))
    except (IndexError, ValueError):
        raise ValueError(f"bad pattern {spec!r}; expected kind:WxH[:...]") from None
    _check_dims(w, h)
    if kind == "black":
        return BinaryImage(w, h, bytes(w * h))
    if kind == "white":
        return BinaryImage(w, h, b"\xff" * (w * h))
    if kind == "checker":
        return BinaryImage(w, h, bytes(255 if (x + y) % 2 else 0 for y in range(h) for x in range(w)))
    if kind == "diagonal":
        return BinaryImage(w, h, bytes(255 if x == y else 0 for y in range(h) for x in range(w)))
    if kind == "random":
        density = float(parts[2]) if len(parts) > 2 else 0.5
        seed = int(parts[3]) if len(parts) > 3 else 0
        return random_binary(w, h, density, seed)
    if kind == "blobs":
        return _blobs(w, h)
    raise ValueError(f"unknown pattern kind {kind!r}")


def _blobs(w: int, h: int) -> BinaryImage:
    buf = bytearray(w * h)

    def fill(x0, y0, x1, y1):
        x0, x1 = max(0, x0), min(w, x1)
        for y in range(max(0, y0), min(h, y1)):
            buf[y * w + x0:y * w + x1] = b"\xff" * max(0, x1 - x0)

    fill(w // 10, h // 10, w // 4, h // 3)
    fill(w // 2, h // 8, w // 2 + w // 6, h // 8 + h // 5)
    # ring: outer square minus inner square
    cx0, cy0, cx1, cy1 = w // 3, h // 2, w // 3 + w // 5, h // 2 + h // 3
    fill(cx0, cy0, cx1, cy1)
    bw = max(1, min(w, h) // 40)
    for y in range(cy0 + bw, cy1 - bw):
        lo, hi = cx0 + bw, cx1 - bw
        if hi > lo:
            buf[y * w + lo:y * w + hi] = bytes(hi - lo)
    # a V shape, which splits into two provisional labels on a raster scan
    vx, vy, vh = (3 * w) // 4, (2 * h) // 3, h // 4
    for d in range(vh):
        for x in (vx - vh + d, vx + vh - d):
            if 0 <= x < w and 0 <= vy + d < h:
                buf[(vy + d) * w + x] = 255
                if x + 1 < w:
                    buf[(vy + d) * w + x + 1] = 255
    return BinaryImage(w, h, bytes(buf))
