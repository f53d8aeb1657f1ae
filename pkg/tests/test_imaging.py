import struct

import pytest
from hypothesis import given, settings, strategies as st

from streamlabel.imaging import (
    BinaryImage,
    GrayImage,
    ImageFormatError,
    LabelImage,
    MalformedHeader,
    TruncatedData,
    UnsupportedBMP,
    UnsupportedMagic,
    UnsupportedMaxval,
    binarize,
    encode_bmp24,
    encode_pgm,
    label_color,
    load_bmp,
    load_image,
    load_pgm,
    make_pattern,
    render_labels,
)


def test_pgm_minimal():
    assert load_pgm(b"P5\n2 1\n255\n" + bytes([0, 255])) == GrayImage(2, 1, bytes([0, 255]))


def test_pgm_single_pixel():
    assert load_pgm(b"P5\n1 1\n255\n" + bytes([7])) == GrayImage(1, 1, bytes([7]))


def test_pgm_comments_and_whitespace():
    data = b"P5 # a comment\n# another\n 3\t2\n255\n" + bytes(range(6))
    img = load_pgm(data)
    assert (img.width, img.height) == (3, 2)
    assert img.pixels == bytes(range(6))


def test_pgm_wrong_magic():
    with pytest.raises(UnsupportedMagic, match="unsupported magic"):
        load_pgm(b"P6\n1 1\n255\n\x00\x00\x00")


@pytest.mark.parametrize(
    "data, exc",
    [
        (b"P5\n2 1\n255\n\x00", TruncatedData),
        (b"P5\n2 1\n", MalformedHeader),
        (b"P5\n2 x\n255\n\x00\x00", MalformedHeader),
        (b"P5\n0 1\n255\n", MalformedHeader),
        (b"P5\n1 1\n65535\n\x00\x00", UnsupportedMaxval),
        (b"P5\n1 1\n0\n\x00", UnsupportedMaxval),
        (b"P5\n1 1\n255", MalformedHeader),
    ],
)
def test_pgm_errors(data, exc):
    with pytest.raises(exc):
        load_pgm(data)


def test_pgm_roundtrip():
    img = GrayImage(3, 2, bytes([1, 2, 3, 4, 5, 6]))
    assert load_pgm(encode_pgm(img)) == img


def _bmp24(width, height, rgb_rows, top_down=False):
    """Hand-built 24-bit BMP; rgb_rows given top row first."""
    stride = (3 * width + 3) & ~3
    rows = rgb_rows if top_down else rgb_rows[::-1]
    payload = b""
    for row in rows:
        line = b"".join(bytes((b, g, r)) for r, g, b in row)
        payload += line + b"\x00" * (stride - len(line))
    h = -height if top_down else height
    head = struct.pack("<2sIHHI", b"BM", 54 + len(payload), 0, 0, 54)
    dib = struct.pack("<IiiHHIIiiII", 40, width, h, 1, 24, 0, len(payload), 0, 0, 0, 0)
    return head + dib + payload


def test_bmp_white_2x2():
    data = _bmp24(2, 2, [[(255, 255, 255)] * 2] * 2)
    assert load_bmp(data) == GrayImage(2, 2, b"\xff" * 4)


def test_bmp_black_pixel():
    assert load_bmp(_bmp24(1, 1, [[(0, 0, 0)]])) == GrayImage(1, 1, b"\x00")


def test_bmp_rows_flipped_to_top_left_origin():
    rows = [[(255, 255, 255), (0, 0, 0)], [(0, 0, 0), (0, 0, 0)]]
    assert load_bmp(_bmp24(2, 2, rows)).pixels == bytes([255, 0, 0, 0])
    assert load_bmp(_bmp24(2, 2, rows, top_down=True)).pixels == bytes([255, 0, 0, 0])


def test_bmp_integer_luma():
    img = load_bmp(_bmp24(3, 1, [[(255, 0, 0), (0, 255, 0), (0, 0, 255)]]))
    assert list(img.pixels) == [(77 * 255) >> 8, (150 * 255) >> 8, (29 * 255) >> 8]


def test_bmp_8bit_palette():
    palette = bytes([0, 0, 0, 0, 255, 255, 255, 0])  # black, white (BGRA)
    width, height = 3, 1
    payload = bytes([1, 0, 1, 0])  # padded to 4
    off = 14 + 40 + len(palette)
    head = struct.pack("<2sIHHI", b"BM", off + len(payload), 0, 0, off)
    dib = struct.pack("<IiiHHIIiiII", 40, width, height, 1, 8, 0, len(payload), 0, 0, 2, 0)
    img = load_bmp(head + dib + palette + payload)
    assert img.pixels == bytes([255, 0, 255])


def test_bmp_rle_rejected():
    data = bytearray(_bmp24(1, 1, [[(0, 0, 0)]]))
    data[30:34] = struct.pack("<I", 1)  # BI_RLE8
    with pytest.raises(UnsupportedBMP, match="unsupported BMP variant"):
        load_bmp(bytes(data))


def test_bmp_other_depth_rejected():
    data = bytearray(_bmp24(1, 1, [[(0, 0, 0)]]))
    data[28:30] = struct.pack("<H", 16)
    with pytest.raises(UnsupportedBMP):
        load_bmp(bytes(data))


def test_bmp_truncated():
    data = _bmp24(4, 4, [[(1, 2, 3)] * 4] * 4)
    with pytest.raises(TruncatedData):
        load_bmp(data[:-1])


def test_bmp_encoder_roundtrip():
    img = GrayImage(5, 3, bytes(range(15)))
    assert load_bmp(encode_bmp24(img)) == img


def test_load_image_dispatch():
    assert load_image(b"P5\n1 1\n255\n\x09").pixels == b"\x09"
    with pytest.raises(UnsupportedMagic):
        load_image(b"GIF89a")


def test_binarize_threshold_split():
    assert binarize(GrayImage(1, 2, bytes([10, 200])), 128) == BinaryImage(1, 2, bytes([0, 255]))


def test_binarize_zero_threshold_all_white():
    assert binarize(GrayImage(2, 1, bytes([0, 3])), 0).pixels == b"\xff\xff"


def test_binarize_255_boundary():
    assert binarize(GrayImage(3, 1, bytes([254] * 3)), 255).pixels == bytes(3)


@given(st.binary(min_size=1, max_size=64))
def test_binarize_idempotent_on_binary(bits):
    img = BinaryImage(len(bits), 1, bytes(255 if b & 1 else 0 for b in bits))
    assert binarize(img, 128) == img


def test_binary_image_rejects_gray_values():
    with pytest.raises(ValueError):
        BinaryImage(1, 1, b"\x01")


def test_render_all_zero_black():
    out = render_labels(LabelImage(2, 2, (0, 0, 0, 0)))
    assert out == b"P6\n2 2\n255\n" + bytes(12)


def test_render_distinct_and_stable():
    lbl = LabelImage(2, 1, (1, 2))
    a = render_labels(lbl)
    assert a == render_labels(lbl)
    body = a[len(b"P6\n2 1\n255\n"):]
    assert body[:3] != body[3:]
    assert label_color(1) == label_color(1)


def test_palette_never_black_and_injective_on_small_labels():
    colors = {label_color(n) for n in range(1, 5000)}
    assert len(colors) == 4999
    assert (0, 0, 0) not in colors


@settings(max_examples=300)
@given(st.binary(max_size=80))
def test_decoders_only_raise_format_errors_on_fuzz(data):
    for prefix in (b"", b"P5", b"P5\n", b"BM"):
        try:
            load_image(prefix + data)
        except ImageFormatError:
            pass


@given(st.integers(1, 6), st.integers(1, 6), st.data())
def test_truncated_pgm_always_rejected(w, h, data):
    full = encode_pgm(GrayImage(w, h, bytes(w * h)))
    cut = data.draw(st.integers(0, len(full) - 1))
    with pytest.raises(ImageFormatError):
        load_pgm(full[:cut])


def test_patterns():
    assert make_pattern("black:3x2").pixels == bytes(6)
    assert make_pattern("white:2x2").pixels == b"\xff" * 4
    assert make_pattern("diagonal:2x2").pixels == bytes([255, 0, 0, 255])
    assert make_pattern("random:8x8:0.5:3") == make_pattern("random:8x8:0.5:3")
    with pytest.raises(ValueError):
        make_pattern("nope:2x2")
    with pytest.raises(ValueError):
        make_pattern("black")
