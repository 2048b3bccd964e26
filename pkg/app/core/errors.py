"""
HomodyneQKD — Errors
Exception hierarchy shared by the physics modules, the classical protocol
and the harness.
"""


class SimulatorError(Exception):
    """Root of every error raised by the simulator."""


class ConfigError(SimulatorError, ValueError):
    """A parameter or configuration violates a precondition."""


# ── Classical channel ────────────────────────────────────────────────────────
class ProtocolError(SimulatorError):
    """Classical-channel failure. `kind` is stable and goes into Abort reasons."""

    kind = "protocol"

    @property
    def reason(self) -> str:
        return f"{self.kind}: {self}"


class FramingError(ProtocolError):
    kind = "framing"


class MalformedMessageError(ProtocolError):
    kind = "malformed"


class UnknownMessageTypeError(ProtocolError):
    kind = "unknown_type"


class NonMonotoneSlotsError(ProtocolError):
    kind = "non_monotone"


class LengthMismatchError(ProtocolError):
    kind = "length_mismatch"


class EmptySampleError(ProtocolError):
    kind = "empty_sample"


class TransportClosedError(ProtocolError):
    kind = "transport"


class UnexpectedMessageError(ProtocolError):
    kind = "unexpected"


class SessionAborted(SimulatorError):
    """A session ended without a key. `reason` is what went over the wire."""

    def __init__(self, reason: str, remote: bool = False):
        super().__init__(reason)
        self.reason = reason
        self.remote = remote
