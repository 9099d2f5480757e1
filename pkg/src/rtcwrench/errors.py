"""Exception types shared across the engine."""

from __future__ import annotations


class RtcWrenchError(Exception):
    """Base class for all engine errors."""


# --- category engine ---------------------------------------------------------

class UnknownBuiltin(RtcWrenchError):
    pass


class InvalidParams(RtcWrenchError):
    pass


class StrictViolation(RtcWrenchError):
    """Non-strict-safe builtin installed while strict mode is on."""


class UnknownCategory(RtcWrenchError):
    pass


# --- controls bus -------------------------------------------------------------

class InvalidType(RtcWrenchError):
    """Control values must be string, boolean or number."""


# --- SDP / ICE ----------------------------------------------------------------

class MalformedLine(RtcWrenchError):
    def __init__(self, line_no: int, line: str, reason: str = ""):
        self.line_no = line_no
        self.line = line
        msg = f"line {line_no}: {line!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class MissingMandatory(RtcWrenchError):
    """Input lacks the v=/o=/m= SDP skeleton."""


class MalformedCandidate(RtcWrenchError):
    pass


class InvalidAddress(RtcWrenchError):
    pass


class InvalidValue(RtcWrenchError):
    pass


# --- media config -------------------------------------------------------------

class InvalidServerUrl(RtcWrenchError):
    pass


# --- stats --------------------------------------------------------------------

class UnknownMetric(RtcWrenchError):
    pass


class InvalidInput(RtcWrenchError):
    pass


class SinkUnreachable(RtcWrenchError):
    pass


# --- proxy --------------------------------------------------------------------

class UnknownSession(RtcWrenchError):
    pass


class UpstreamConnectFailed(RtcWrenchError):
    pass


class UpstreamTimeout(RtcWrenchError):
    pass


# --- harness ------------------------------------------------------------------

class WrongState(RtcWrenchError):
    pass


class NoViablePair(RtcWrenchError):
    pass


class ChannelVetoed(RtcWrenchError):
    pass


class NotOpen(RtcWrenchError):
    pass


class StepFailed(RtcWrenchError):
    def __init__(self, index: int, cause: BaseException | str):
        self.index = index
        self.cause = cause
        super().__init__(f"step {index} failed: {cause}")


# --- service ------------------------------------------------------------------

class ConfigError(RtcWrenchError):
    """Configuration failed validation; message lists every problem found."""

    def __init__(self, problems: list[str]):
        self.problems = problems
        super().__init__("; ".join(problems))


class PlatformUnsupported(RtcWrenchError):
    pass
