"""Frame containers and Netpbm codecs for colour, depth and mask grids.

Colour frames travel as binary PPM (P6, maxval 255) and depth frames as
binary PGM (P5, maxval 65535, big-endian millimetres).  Masks can be dumped
as 8-bit PGM with 0/255 values for inspection.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

__all__ = [
    "DecodeError",
    "PairingError",
    "RgbFrame",
    "DepthFrame",
    "RgbdFrame",
    "BinaryMask",
    "decode_rgb",
    "encode_rgb",
    "decode_depth",
    "encode_depth",
    "decode_gray",
    "encode_gray",
    "load_frame_pair",
]


class DecodeError(ValueError):
    """Malformed or truncated Netpbm payload."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (file offset {offset})")
        self.offset = offset
        self.payload_offset: int | None = None


class PairingError(ValueError):
    """Colour and depth frames that cannot be paired."""


def _frozen(array: np.ndarray, dtype) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RgbFrame:
    pixels: np.ndarray  # (height, width, 3) uint8

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"RGB pixels must have shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("frame dimensions must be positive")
        object.__setattr__(self, "pixels", _frozen(px, np.uint8))

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def __eq__(self, other):
        if not isinstance(other, RgbFrame):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


@dataclass(frozen=True, eq=False)
class DepthFrame:
    depths: np.ndarray  # (height, width) uint16 millimetres, 0 = no reading

    def __post_init__(self):
        d = np.asarray(self.depths)
        if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
            raise ValueError(f"depth grid must be a non-empty 2-D array, got {d.shape}")
        if d.dtype != np.uint16:
            if d.size and (d.min() < 0 or d.max() > 0xFFFF):
                raise ValueError("depth values must fit in 16 bits")
        object.__setattr__(self, "depths", _frozen(d, np.uint16))

    @property
    def height(self) -> int:
        return self.depths.shape[0]

    @property
    def width(self) -> int:
        return self.depths.shape[1]

    def __eq__(self, other):
        if not isinstance(other, DepthFrame):
            return NotImplemented
        return np.array_equal(self.depths, other.depths)


@dataclass(frozen=True, eq=False)
class RgbdFrame:
    color: RgbFrame
    depth: DepthFrame
    frame_id: int = 0

    def __post_init__(self):
        cs = (self.color.width, self.color.height)
        ds = (self.depth.width, self.depth.height)
        if cs != ds:
            raise PairingError(
                f"colour frame is {cs[0]}x{cs[1]} but depth frame is {ds[0]}x{ds[1]}"
            )

    @property
    def height(self) -> int:
        return self.color.height

    @property
    def width(self) -> int:
        return self.color.width

    def __eq__(self, other):
        if not isinstance(other, RgbdFrame):
            return NotImplemented
        return (
            self.frame_id == other.frame_id
            and self.color == other.color
            and self.depth == other.depth
        )


@dataclass(frozen=True, eq=False)
class BinaryMask:
    bits: np.ndarray  # (height, width) uint8 in {0, 1}

    def __post_init__(self):
        b = np.asarray(self.bits)
        if b.ndim != 2 or b.shape[0] < 1 or b.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D array, got {b.shape}")
        if b.dtype != np.bool_ and b.size and not np.isin(b, (0, 1)).all():
            raise ValueError("mask values must be 0 or 1")
        object.__setattr__(self, "bits", _frozen(b, np.uint8))

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other):
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return np.array_equal(self.bits, other.bits)


# --- Netpbm --------------------------------------------------------------

_WHITESPACE = b" \t\n\r\x0b\x0c"


def _parse_header(data: bytes, magic: bytes):
    """Return (width, height, maxval, payload_offset)."""
    if len(data) < 2 or data[:2] != magic:
        raise DecodeError(f"expected magic {magic.decode()}", 0)
    pos = 2
    fields = []
    while len(fields) < 3:
        # whitespace and comments between header tokens
        while pos < len(data) and (data[pos] in _WHITESPACE or data[pos] == 0x23):
            if data[pos] == 0x23:
                while pos < len(data) and data[pos] not in b"\r\n":
                    pos += 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and 0x30 <= data[pos] <= 0x39:
            pos += 1
        if pos == start:
            raise DecodeError("malformed header: expected a decimal integer", pos)
        fields.append(int(data[start:pos]))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise DecodeError("malformed header: missing whitespace after maxval", pos)
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DecodeError(f"invalid dimensions {width}x{height}", start)
    return width, height, maxval, pos


def _payload(data: bytes, offset: int, nbytes: int) -> bytes:
    end = offset + nbytes
    if len(data) < end:
        got = len(data) - offset
        err = DecodeError(
            f"truncated payload: expected {nbytes} bytes, payload ends at byte {got}",
            len(data),
        )
        err.payload_offset = got
        raise err
    return data[offset:end]


def decode_rgb(data: bytes) -> RgbFrame:
    """Decode a binary P6 file with maxval 255."""
    width, height, maxval, offset = _parse_header(data, b"P6")
    if maxval != 255:
        raise DecodeError(f"unsupported maxval {maxval}, 8-bit colour required", offset - 1)
    raw = _payload(data, offset, width * height * 3)
    return RgbFrame(np.frombuffer(raw, dtype=np.uint8).reshape(height, width, 3))


def encode_rgb(frame: RgbFrame) -> bytes:
    header = f"P6\n{frame.width} {frame.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(frame.pixels).tobytes()


def decode_depth(data: bytes) -> DepthFrame:
    """Decode a binary P5 file with maxval 65535 (big-endian millimetres)."""
    width, height, maxval, offset = _parse_header(data, b"P5")
    if maxval != 65535:
        raise DecodeError(f"16-bit depth required, file has maxval {maxval}", offset - 1)
    raw = _payload(data, offset, width * height * 2)
    return DepthFrame(np.frombuffer(raw, dtype=">u2").reshape(height, width).astype(np.uint16))


def encode_depth(frame: DepthFrame) -> bytes:
    header = f"P5\n{frame.width} {frame.height}\n65535\n".encode("ascii")
    return header + frame.depths.astype(">u2").tobytes()


def encode_gray(values: np.ndarray) -> bytes:
    """8-bit P5 dump of a 2-D grid; values are clamped to 0..255."""
    grid = np.clip(np.asarray(values), 0, 255).astype(np.uint8)
    header = f"P5\n{grid.shape[1]} {grid.shape[0]}\n255\n".encode("ascii")
    return header + grid.tobytes()


def decode_gray(data: bytes) -> np.ndarray:
    width, height, maxval, offset = _parse_header(data, b"P5")
    if maxval != 255:
        raise DecodeError(f"8-bit grey required, file has maxval {maxval}", offset - 1)
    raw = _payload(data, offset, width * height)
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def load_frame_pair(color_path, depth_path, frame_id: int = 0) -> RgbdFrame:
    """Read and pair a colour PPM with a depth PGM.

    Raises FileNotFoundError for missing files, DecodeError for bad payloads
    and PairingError when the two grids differ in size.
    """
    with open(os.fspath(color_path), "rb") as fh:
        color = decode_rgb(fh.read())
    with open(os.fspath(depth_path), "rb") as fh:
        depth = decode_depth(fh.read())
    return RgbdFrame(color, depth, frame_id)
