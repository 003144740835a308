from .broker import BrokerCore, Delivery, ProtocolViolation
from .routing import (
    command_key,
    data_key,
    heartbeat_key,
    parse_data_key,
    response_key,
    route,
    RoutingKeyError,
)
from .service import BrokerClient, BrokerService, BrokerTimeout, authorize_publish, authorize_subscribe
from .tlschan import ChannelAuthError, connect, generate_credentials, peer_identity

__all__ = [
    "BrokerClient",
    "BrokerCore",
    "BrokerService",
    "BrokerTimeout",
    "ChannelAuthError",
    "Delivery",
    "ProtocolViolation",
    "RoutingKeyError",
    "authorize_publish",
    "authorize_subscribe",
    "command_key",
    "connect",
    "data_key",
    "generate_credentials",
    "heartbeat_key",
    "parse_data_key",
    "peer_identity",
    "response_key",
    "route",
]
