from .agent import ChannelDown, ClockRegressionError, EdgeAgent, tag_metadata
from .control import ControlCommand, apply_control
from .outbox import Outbox, OutboxEntry, OutboxError
from .sealing import (
    CODEC_RAW,
    CODEC_ZLIB,
    SealError,
    UnsealError,
    deterministic_nonce,
    seal_envelope,
    seal_payload,
    unseal_payload,
)
from .sim import Scenario, SensorSimConfig, generate_tick, scripted_face_centers, scripted_person_centers

__all__ = [
    "CODEC_RAW",
    "CODEC_ZLIB",
    "ChannelDown",
    "ClockRegressionError",
    "ControlCommand",
    "EdgeAgent",
    "Outbox",
    "OutboxEntry",
    "OutboxError",
    "Scenario",
    "SealError",
    "SensorSimConfig",
    "UnsealError",
    "apply_control",
    "deterministic_nonce",
    "generate_tick",
    "scripted_face_centers",
    "scripted_person_centers",
    "seal_envelope",
    "seal_payload",
    "tag_metadata",
    "unseal_payload",
]
