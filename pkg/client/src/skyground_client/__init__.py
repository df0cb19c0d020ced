"""Adapter exposing the simulation wire protocol as an episodic
environment with fixed-width numpy observations and bounded actions."""
from .client import EXPECTED_PROTOCOL, ClientConfig, SimClient
from .encoding import (
    ActionBounds,
    decode_action,
    encode_action,
    encode_observation,
    feature_width,
    neutral_action,
)
from .errors import (
    ActionOutOfSchema,
    ClientError,
    ConnectionLost,
    ProtocolVersionMismatch,
    ServerFault,
    Timeout,
)

__all__ = [
    "ActionBounds",
    "ActionOutOfSchema",
    "ClientConfig",
    "ClientError",
    "ConnectionLost",
    "EXPECTED_PROTOCOL",
    "ProtocolVersionMismatch",
    "ServerFault",
    "SimClient",
    "Timeout",
    "decode_action",
    "encode_action",
    "encode_observation",
    "feature_width",
    "neutral_action",
]
