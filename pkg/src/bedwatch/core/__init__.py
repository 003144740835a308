from .clock import Clock, SimClock, SkewedClock, WallClock
from .codec import ENVELOPE_VERSION, EnvelopeDecodeError, decode_envelope, encode_envelope
from .counters import CounterStorageError, SeqCounter
from .recordlog import LogCorruptError, RecordLog
from .types import (
    BedwatchError,
    CartState,
    CipherInfo,
    InvariantError,
    Modality,
    PatientSession,
    RecordEnvelope,
    RecordKey,
    RecordingState,
)

__all__ = [
    "BedwatchError",
    "CartState",
    "CipherInfo",
    "Clock",
    "CounterStorageError",
    "ENVELOPE_VERSION",
    "EnvelopeDecodeError",
    "InvariantError",
    "LogCorruptError",
    "Modality",
    "PatientSession",
    "RecordEnvelope",
    "RecordKey",
    "RecordLog",
    "RecordingState",
    "SeqCounter",
    "SimClock",
    "SkewedClock",
    "WallClock",
    "decode_envelope",
    "encode_envelope",
]
