"""Failure modes of the client adapter."""


class ClientError(Exception):
    """Base class for adapter failures."""


class ConnectionLost(ClientError):
    """The server closed the stream or the transport broke mid-request."""


class ProtocolVersionMismatch(ClientError):
    """The server speaks a protocol version this adapter does not."""


class Timeout(ClientError):
    """No response arrived within the configured timeout."""


class ActionOutOfSchema(ClientError):
    """An action vector has the wrong shape or non-finite entries."""


class ServerFault(ClientError):
    """The server answered with an error frame."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message
