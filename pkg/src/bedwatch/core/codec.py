"""Canonical binary encoding of record envelopes.

This is the wire and at-rest format. The layout is versioned,
length-prefixed and fixed-order so that one value has exactly one byte
sequence; dedup digests and bit-exact audits rely on that. Byte layout is
documented in docs/envelope-format.md.
"""

from __future__ import annotations

import struct

from .types import (
    PAYLOAD_HASH_LEN,
    BedwatchError,
    CipherInfo,
    InvariantError,
    Modality,
    RecordEnvelope,
    RecordKey,
)

ENVELOPE_VERSION = 1

# Fixed modality wire codes. Appending is allowed; renumbering is not.
_MODALITY_CODE = {
    Modality.RGB_FRAME: 1,
    Modality.DEPTH_FRAME: 2,
    Modality.ACCEL: 3,
    Modality.EMG: 4,
    Modality.NOISE: 5,
    Modality.LIGHT: 6,
}
_CODE_MODALITY = {v: k for k, v in _MODALITY_CODE.items()}

_MAX_STR = 0xFFFF
_MAX_PAYLOAD = 0xFFFFFFFF


class EnvelopeDecodeError(BedwatchError):
    """Input bytes are not a well-formed envelope encoding."""


def _pack_str(value: str) -> bytes:
    raw = value.encode("utf-8")
    if len(raw) > _MAX_STR:
        raise InvariantError(f"string field too long: {len(raw)} bytes")
    return struct.pack(">H", len(raw)) + raw


def encode_envelope(env: RecordEnvelope) -> bytes:
    """Serialize an envelope to its canonical byte sequence."""
    if len(env.cipher.nonce) > 0xFF:
        raise InvariantError("nonce longer than 255 bytes")
    if len(env.payload) > _MAX_PAYLOAD:
        raise InvariantError("payload longer than 4 GiB")
    parts = [
        struct.pack(">B", ENVELOPE_VERSION),
        _pack_str(env.key.cart_id),
        _pack_str(env.key.sensor_id),
        struct.pack(">Q", env.key.seq),
        struct.pack(">q", env.capture_ts),
        _pack_str(env.room_id),
        struct.pack(">B", _MODALITY_CODE[env.modality]),
        _pack_str(env.codec_id),
        _pack_str(env.cipher.key_id),
        struct.pack(">B", len(env.cipher.nonce)),
        env.cipher.nonce,
        env.payload_hash,
        struct.pack(">I", len(env.payload)),
        env.payload,
    ]
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise EnvelopeDecodeError(
                f"truncated input: need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack(">H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self.take(8))[0]

    def i64(self) -> int:
        return struct.unpack(">q", self.take(8))[0]

    def string(self) -> str:
        raw = self.take(self.u16())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise EnvelopeDecodeError(f"invalid utf-8 in string field: {exc}") from None

    def done(self) -> bool:
        return self.pos == len(self.data)


def decode_envelope(data: bytes) -> RecordEnvelope:
    """Parse a canonical envelope encoding.

    Raises EnvelopeDecodeError on truncated, trailing or malformed input;
    never returns a partial value.
    """
    r = _Reader(data)
    version = r.u8()
    if version != ENVELOPE_VERSION:
        raise EnvelopeDecodeError(f"unsupported envelope version {version}")
    cart_id = r.string()
    sensor_id = r.string()
    seq = r.u64()
    capture_ts = r.i64()
    room_id = r.string()
    mod_code = r.u8()
    modality = _CODE_MODALITY.get(mod_code)
    if modality is None:
        raise EnvelopeDecodeError(f"unknown modality code {mod_code}")
    codec_id = r.string()
    key_id = r.string()
    nonce = r.take(r.u8())
    payload_hash = r.take(PAYLOAD_HASH_LEN)
    payload = r.take(r.u32())
    if not r.done():
        raise EnvelopeDecodeError(f"{len(data) - r.pos} trailing bytes after envelope")
    try:
        return RecordEnvelope(
            key=RecordKey(cart_id=cart_id, sensor_id=sensor_id, seq=seq),
            capture_ts=capture_ts,
            room_id=room_id,
            modality=modality,
            codec_id=codec_id,
            cipher=CipherInfo(key_id=key_id, nonce=nonce),
            payload=payload,
            payload_hash=payload_hash,
        )
    except InvariantError as exc:
        raise EnvelopeDecodeError(f"decoded fields violate invariants: {exc}") from None
