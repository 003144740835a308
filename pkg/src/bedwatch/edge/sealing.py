"""Payload sealing: lossless compression followed by authenticated encryption.

Compression keeps image-heavy streams cheap on the wire; AES-256-GCM makes
any bit flip detectable before the payload hash is even checked. Nonces are
built deterministically from (sensor_index, seq) per the standard
deterministic-IV construction: the pair never repeats for a given cart key
because seq never repeats per sensor.
"""

from __future__ import annotations

import hashlib
import struct
import zlib

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from ..core.types import BedwatchError, CipherInfo, RecordEnvelope

CODEC_RAW = "raw"
CODEC_ZLIB = "zlib"
PLAINTEXT_KEY_ID = ""

NONCE_LEN = 12


class SealError(BedwatchError):
    pass


class UnsealError(BedwatchError):
    """Wrong key, tampered ciphertext, or corrupt plaintext."""


def deterministic_nonce(sensor_index: int, seq: int) -> bytes:
    if not (0 <= sensor_index < 2**32):
        raise SealError(f"sensor_index out of range: {sensor_index}")
    return struct.pack(">IQ", sensor_index, seq)


def _compress(plain: bytes, codec_id: str) -> bytes:
    if codec_id == CODEC_ZLIB:
        return zlib.compress(plain, level=6)
    if codec_id == CODEC_RAW:
        return plain
    raise SealError(f"unknown codec_id {codec_id!r}")


def _decompress(data: bytes, codec_id: str) -> bytes:
    if codec_id == CODEC_ZLIB:
        try:
            return zlib.decompress(data)
        except zlib.error as exc:
            raise UnsealError(f"decompression failed: {exc}") from None
    if codec_id == CODEC_RAW:
        return data
    raise UnsealError(f"unknown codec_id {codec_id!r}")


def seal_payload(
    plain: bytes, codec_id: str, key: bytes, key_id: str, nonce: bytes
) -> tuple[bytes, bytes, CipherInfo]:
    """Compress then encrypt; returns (payload, payload_hash, cipher)."""
    if len(key) != 32:
        raise SealError("sealing key must be 32 bytes")
    if len(nonce) != NONCE_LEN:
        raise SealError(f"nonce must be {NONCE_LEN} bytes")
    if not key_id:
        raise SealError("key_id must be non-empty for sealed payloads")
    compressed = _compress(plain, codec_id)
    sealed = AESGCM(key).encrypt(nonce, compressed, None)
    return sealed, hashlib.sha256(plain).digest(), CipherInfo(key_id=key_id, nonce=nonce)


def seal_envelope(env: RecordEnvelope, codec_id: str, key: bytes, key_id: str, nonce: bytes) -> RecordEnvelope:
    """Seal an unsealed (plaintext) envelope in place of its payload."""
    if env.sealed:
        raise SealError("envelope is already sealed")
    payload, payload_hash, cipher = seal_payload(env.payload, codec_id, key, key_id, nonce)
    if payload_hash != env.payload_hash:
        raise SealError("envelope payload_hash does not match its payload")
    return env.with_payload(payload, codec_id, cipher)


def unseal_payload(env: RecordEnvelope, key: bytes) -> bytes:
    """Decrypt, decompress, and verify the plaintext digest."""
    if not env.sealed:
        raise UnsealError("envelope is not sealed")
    if len(key) != 32:
        raise UnsealError("sealing key must be 32 bytes")
    try:
        compressed = AESGCM(key).decrypt(env.cipher.nonce, env.payload, None)
    except InvalidTag:
        raise UnsealError(
            f"authentication failed for {env.key}: wrong key or tampered payload"
        ) from None
    plain = _decompress(compressed, env.codec_id)
    if hashlib.sha256(plain).digest() != env.payload_hash:
        raise UnsealError(f"payload digest mismatch for {env.key}")
    return plain
