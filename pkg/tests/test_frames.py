import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virtglove.frames import (
    BinaryMask,
    DecodeError,
    DepthFrame,
    PairingError,
    RgbdFrame,
    RgbFrame,
    decode_depth,
    decode_gray,
    decode_rgb,
    encode_depth,
    encode_gray,
    encode_rgb,
    load_frame_pair,
)


def test_decode_two_pixel_rgb():
    data = b"P6\n2 1\n255\n" + bytes([1, 2, 3, 4, 5, 6])
    f = decode_rgb(data)
    assert (f.height, f.width) == (1, 2)
    assert f.pixels[0, 0].tolist() == [1, 2, 3]
    assert f.pixels[0, 1].tolist() == [4, 5, 6]


def test_decode_with_header_comment():
    data = b"P6\n# a comment\n2 1\n255\n" + bytes(6)
    assert decode_rgb(data).width == 2


def test_truncated_payload_reports_offset():
    data = b"P6\n2 1\n255\n" + bytes(5)
    with pytest.raises(DecodeError) as info:
        decode_rgb(data)
    assert info.value.payload_offset == 5
    assert "file offset" in str(info.value)


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n000", b"P6\n1 x\n255\n000", b"P6\n1 1\n65535\n" + bytes(6), b""])
def test_malformed_rgb(data):
    with pytest.raises(DecodeError):
        decode_rgb(data)


def test_encode_black_pixel():
    f = RgbFrame(np.zeros((1, 1, 3), np.uint8))
    assert encode_rgb(f) == b"P6\n1 1\n255\n\x00\x00\x00"


def test_encode_2x2_payload_length():
    f = RgbFrame(np.zeros((2, 2, 3), np.uint8))
    data = encode_rgb(f)
    assert len(data) - len(b"P6\n2 2\n255\n") == 12


def test_depth_sample_is_big_endian_mm():
    f = decode_depth(b"P5\n1 1\n65535\n\x01\xf4")
    assert int(f.depths[0, 0]) == 500


def test_depth_requires_16_bit():
    with pytest.raises(DecodeError, match="16-bit depth required"):
        decode_depth(b"P5\n1 1\n255\n\x00")


def test_pairing_size_mismatch():
    c = RgbFrame(np.zeros((480, 640, 3), np.uint8))
    d = DepthFrame(np.zeros((240, 320), np.uint16))
    with pytest.raises(PairingError, match="640x480.*320x240|320x240.*640x480"):
        RgbdFrame(c, d)


def test_load_pair(tmp_path):
    c = RgbFrame(np.zeros((480, 640, 3), np.uint8))
    d = DepthFrame(np.full((480, 640), 400, np.uint16))
    (tmp_path / "c.ppm").write_bytes(encode_rgb(c))
    (tmp_path / "d.pgm").write_bytes(encode_depth(d))
    f = load_frame_pair(tmp_path / "c.ppm", tmp_path / "d.pgm", frame_id=7)
    assert (f.width, f.height, f.frame_id) == (640, 480, 7)
    with pytest.raises(FileNotFoundError):
        load_frame_pair(tmp_path / "c.ppm", tmp_path / "missing.pgm")


def test_frames_are_read_only_copies():
    px = np.zeros((2, 2, 3), np.uint8)
    f = RgbFrame(px)
    px[0, 0, 0] = 9
    assert f.pixels[0, 0, 0] == 0
    with pytest.raises(ValueError):
        f.pixels[0, 0, 0] = 1


def test_mask_count_and_gray_dump():
    m = BinaryMask(np.array([[1, 0], [1, 1]]))
    assert m.count() == 3
    g = decode_gray(encode_gray(m.bits * 255))
    assert g.tolist() == [[255, 0], [255, 255]]


dims = st.tuples(st.integers(1, 12), st.integers(1, 12))


@settings(max_examples=60, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_rgb_round_trip(shape, seed):
    rng = np.random.default_rng(seed)
    f = RgbFrame(rng.integers(0, 256, (*shape, 3), dtype=np.uint8))
    data = encode_rgb(f)
    assert decode_rgb(data) == f
    assert encode_rgb(decode_rgb(data)) == data


@settings(max_examples=60, deadline=None)
@given(dims, st.integers(0, 2**32 - 1))
def test_depth_round_trip(shape, seed):
    rng = np.random.default_rng(seed)
    f = DepthFrame(rng.integers(0, 65536, shape, dtype=np.uint16))
    data = encode_depth(f)
    assert decode_depth(data) == f
    assert encode_depth(decode_depth(data)) == data
