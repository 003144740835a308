"""Plaintext payload formats carried inside envelopes.

Three self-describing little formats cover all six modalities:
  'I' 8-bit image   (RGB frames)
  'D' 16-bit depth  (depth frames, millimetres)
  'S' float series  (accel/EMG batches, noise/light samples)
Layouts are documented in docs/envelope-format.md.
"""

from __future__ import annotations

import struct

import numpy as np

from .types import BedwatchError

_IMG_HDR = struct.Struct(">cHHB")
_DEPTH_HDR = struct.Struct(">cHH")
_SERIES_HDR = struct.Struct(">cBfI")


class PayloadFormatError(BedwatchError):
    pass


def encode_image(pixels: np.ndarray) -> bytes:
    """pixels: (h, w) or (h, w, ch) uint8."""
    if pixels.dtype != np.uint8:
        raise PayloadFormatError("image pixels must be uint8")
    if pixels.ndim == 2:
        pixels = pixels[:, :, None]
    h, w, ch = pixels.shape
    return _IMG_HDR.pack(b"I", w, h, ch) + pixels.tobytes()


def decode_image(data: bytes) -> np.ndarray:
    if len(data) < _IMG_HDR.size or data[:1] != b"I":
        raise PayloadFormatError("not an image payload")
    _, w, h, ch = _IMG_HDR.unpack_from(data)
    body = data[_IMG_HDR.size :]
    if len(body) != w * h * ch:
        raise PayloadFormatError(f"image body length {len(body)} != {w}x{h}x{ch}")
    arr = np.frombuffer(body, dtype=np.uint8).reshape(h, w, ch)
    return arr[:, :, 0] if ch == 1 else arr


def encode_depth(depth_mm: np.ndarray) -> bytes:
    """depth_mm: (h, w) uint16."""
    if depth_mm.dtype != np.uint16 or depth_mm.ndim != 2:
        raise PayloadFormatError("depth must be 2-D uint16")
    h, w = depth_mm.shape
    return _DEPTH_HDR.pack(b"D", w, h) + depth_mm.astype("<u2").tobytes()


def decode_depth(data: bytes) -> np.ndarray:
    if len(data) < _DEPTH_HDR.size or data[:1] != b"D":
        raise PayloadFormatError("not a depth payload")
    _, w, h = _DEPTH_HDR.unpack_from(data)
    body = data[_DEPTH_HDR.size :]
    if len(body) != w * h * 2:
        raise PayloadFormatError(f"depth body length {len(body)} != {w}x{h}x2")
    return np.frombuffer(body, dtype="<u2").reshape(h, w).astype(np.uint16)


def encode_series(samples: np.ndarray, rate_hz: float) -> bytes:
    """samples: (count,) or (count, channels) float32."""
    arr = np.asarray(samples, dtype=np.float32)
    if arr.ndim == 1:
        arr = arr[:, None]
    count, ch = arr.shape
    return _SERIES_HDR.pack(b"S", ch, rate_hz, count) + arr.astype("<f4").tobytes()


def decode_series(data: bytes) -> tuple[np.ndarray, float]:
    """Returns (samples (count, channels), rate_hz)."""
    if len(data) < _SERIES_HDR.size or data[:1] != b"S":
        raise PayloadFormatError("not a series payload")
    _, ch, rate, count = _SERIES_HDR.unpack_from(data)
    body = data[_SERIES_HDR.size :]
    if len(body) != count * ch * 4:
        raise PayloadFormatError(f"series body length {len(body)} != {count}x{ch}x4")
    return np.frombuffer(body, dtype="<f4").reshape(count, ch).astype(np.float32), rate
