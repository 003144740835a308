"""Shared domain types used by every stage of the pipeline.

All values here are immutable and safe to share across threads. Invariants
are enforced at construction time so that anything downstream can trust a
constructed object without re-validating.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

PAYLOAD_HASH_LEN = 32

PAN_MIN, PAN_MAX = -180.0, 180.0
TILT_MIN, TILT_MAX = -90.0, 90.0
ZOOM_MIN, ZOOM_MAX = 1.0, 10.0


class BedwatchError(Exception):
    """Base class for all package errors."""


class InvariantError(BedwatchError):
    """A domain invariant was violated at construction time."""


class Modality(enum.Enum):
    """The six sensor stream kinds a cart produces.

    ``nominal_rate_hz`` is the per-sample rate of the underlying sensor.
    High-rate time series (ACCEL, EMG) are batched one second per envelope,
    so their envelope cadence is 1/s regardless of sample rate.
    """

    RGB_FRAME = ("RGB_FRAME", 1.0)
    DEPTH_FRAME = ("DEPTH_FRAME", 1.0)
    ACCEL = ("ACCEL", 30.0)  # 30 or 100 Hz depending on the device; 30 is the default
    EMG = ("EMG", 512.0)
    NOISE = ("NOISE", 1.0)
    LIGHT = ("LIGHT", 1.0)

    def __new__(cls, name: str, rate: float):
        obj = object.__new__(cls)
        obj._value_ = name
        obj.nominal_rate_hz = rate
        return obj

    nominal_rate_hz: float

    @property
    def is_batched(self) -> bool:
        """True when one envelope carries one second of samples."""
        return self in (Modality.ACCEL, Modality.EMG)

    @property
    def envelope_rate_hz(self) -> float:
        """Envelopes emitted per second for this modality."""
        return 1.0 if self.is_batched else self.nominal_rate_hz


class RecordingState(enum.Enum):
    RECORDING = "recording"
    PAUSED = "paused"
    STOPPED = "stopped"


@dataclass(frozen=True, order=True)
class RecordKey:
    """Globally unique identity of one sensor record.

    ``seq`` strictly increases per (cart_id, sensor_id); combined with those
    ids it is the dedup identity the ingest side keys on.
    """

    cart_id: str
    sensor_id: str
    seq: int

    def __post_init__(self):
        if not self.cart_id or not self.sensor_id:
            raise InvariantError("cart_id and sensor_id must be non-empty")
        if not (1 <= self.seq <= 2**64 - 1):
            raise InvariantError(f"seq out of range: {self.seq}")


@dataclass(frozen=True)
class CipherInfo:
    """Material needed to unseal a payload. Empty key_id means plaintext."""

    key_id: str = ""
    nonce: bytes = b""


@dataclass(frozen=True)
class RecordEnvelope:
    """One timestamped, tagged, sealed sensor sample or frame.

    The unit of queueing, delivery and storage. ``payload_hash`` is the
    SHA-256 digest of the *plaintext* payload, verified after unsealing.
    """

    key: RecordKey
    capture_ts: int  # UTC milliseconds, signed 64-bit
    room_id: str
    modality: Modality
    codec_id: str
    cipher: CipherInfo
    payload: bytes
    payload_hash: bytes

    def __post_init__(self):
        if not self.room_id:
            raise InvariantError("room_id must be non-empty")
        if not self.codec_id:
            raise InvariantError("codec_id must be non-empty")
        if not (-(2**63) <= self.capture_ts < 2**63):
            raise InvariantError("capture_ts outside signed 64-bit range")
        if len(self.payload_hash) != PAYLOAD_HASH_LEN:
            raise InvariantError(
                f"payload_hash must be {PAYLOAD_HASH_LEN} bytes, got {len(self.payload_hash)}"
            )

    @property
    def sealed(self) -> bool:
        return bool(self.cipher.key_id)

    def with_payload(self, payload: bytes, codec_id: str, cipher: CipherInfo) -> "RecordEnvelope":
        return replace(self, payload=payload, codec_id=codec_id, cipher=cipher)


def _clamp(value: float, lo: float, hi: float) -> float:
    return lo if value < lo else hi if value > hi else value


@dataclass(frozen=True)
class CartState:
    """Recording state plus camera orientation; the object the control UI steers.

    Orientation is always within bounds: construction clamps rather than
    rejects, mirroring how PTZ commands are applied.
    """

    recording: RecordingState = RecordingState.STOPPED
    pan_deg: float = 0.0
    tilt_deg: float = 0.0
    zoom: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "pan_deg", _clamp(self.pan_deg, PAN_MIN, PAN_MAX))
        object.__setattr__(self, "tilt_deg", _clamp(self.tilt_deg, TILT_MIN, TILT_MAX))
        object.__setattr__(self, "zoom", _clamp(self.zoom, ZOOM_MIN, ZOOM_MAX))

    def to_dict(self) -> dict:
        return {
            "recording": self.recording.value,
            "pan_deg": self.pan_deg,
            "tilt_deg": self.tilt_deg,
            "zoom": self.zoom,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CartState":
        return cls(
            recording=RecordingState(d["recording"]),
            pan_deg=float(d["pan_deg"]),
            tilt_deg=float(d["tilt_deg"]),
            zoom=float(d["zoom"]),
        )


@dataclass(frozen=True)
class PatientSession:
    """One patient's stay in one room, bounded by admission and discharge.

    ``study_id`` is the keyed pseudonym under which the patient's records
    are stored; the raw ``patient_id`` never reaches the storage tree.
    """

    patient_id: str
    study_id: str
    room_id: str
    cart_id: str
    admission_ts: int
    discharge_ts: int

    def __post_init__(self):
        if self.admission_ts >= self.discharge_ts:
            raise InvariantError("admission_ts must precede discharge_ts")

    def covers(self, ts: int) -> bool:
        """Admission inclusive, discharge exclusive."""
        return self.admission_ts <= ts < self.discharge_ts
