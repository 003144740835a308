"""Routing keys: one queue per (cart, modality) data stream.

System traffic (heartbeats, control) uses distinct prefixes so data-queue
tooling never has to special-case it.
"""

from __future__ import annotations

from ..core.types import BedwatchError, Modality, RecordEnvelope

DATA_PREFIX = "cart"
HEARTBEAT_PREFIX = "sys"
CONTROL_PREFIX = "ctl"


class RoutingKeyError(BedwatchError):
    pass


def route(envelope: RecordEnvelope) -> str:
    return data_key(envelope.key.cart_id, envelope.modality)


def data_key(cart_id: str, modality: Modality) -> str:
    if "." in cart_id:
        raise RoutingKeyError(f"cart_id may not contain '.': {cart_id!r}")
    return f"{DATA_PREFIX}.{cart_id}.{modality.value}"


def parse_data_key(key: str) -> tuple[str, Modality]:
    parts = key.split(".")
    if len(parts) != 3 or parts[0] != DATA_PREFIX:
        raise RoutingKeyError(f"not a data routing key: {key!r}")
    try:
        return parts[1], Modality(parts[2])
    except ValueError:
        raise RoutingKeyError(f"unknown modality in routing key: {key!r}") from None


def heartbeat_key(cart_id: str) -> str:
    return f"{HEARTBEAT_PREFIX}.{cart_id}.heartbeat"


def command_key(cart_id: str) -> str:
    return f"{CONTROL_PREFIX}.{cart_id}.cmd"


def response_key(cart_id: str) -> str:
    return f"{CONTROL_PREFIX}.{cart_id}.resp"
