"""Exception hierarchy shared by every part of the engine."""

from __future__ import annotations

from typing import Any


class CosmosError(Exception):
    """Base class for all engine errors."""


class ValidationError(CosmosError):
    """A record violates one of its invariants."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


class EncodingError(CosmosError):
    """A RunResult could not be encoded because it is invalid."""

    def __init__(self, field: str, message: str):
        super().__init__(f"cannot encode, invalid {field}: {message}")
        self.field = field


class TrajectoryParseError(CosmosError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class SpecError(CosmosError):
    """Malformed server spec, task suite, bench config or judge file."""


class SimulationError(CosmosError):
    """The world model could not produce a simulated observation."""


class UnknownToolError(SimulationError):
    pass


class PlanningError(CosmosError):
    """Planning aborted; the partial world-model trajectory is attached."""

    def __init__(self, message: str, partial: Any = None):
        super().__init__(message)
        self.partial = partial


class PlanValidationError(CosmosError):
    """A selected plan contains an action that was never simulated."""


class EnvironmentUnavailable(CosmosError):
    """The environment cannot be reached at all (as opposed to a failed call)."""


class RunError(CosmosError):
    """A run ended abnormally; ``partial`` holds whatever was recorded."""

    def __init__(self, message: str, partial: Any = None, phase: str | None = None):
        super().__init__(f"[{phase}] {message}" if phase else message)
        self.partial = partial
        self.phase = phase


class ProtocolError(CosmosError):
    """The wire peer sent something that is not valid JSON-RPC for our request."""

    def __init__(self, message: str, raw: Any = None):
        super().__init__(message)
        self.raw = raw


class MetricError(CosmosError):
    """A metric is undefined for its inputs or an input is out of domain."""


class ChatError(CosmosError):
    """Transport or format failure talking to a remote chat-completions endpoint."""
