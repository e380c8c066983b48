"""Domain records shared by the planner, executor, environment and metrics.

All records are frozen dataclasses. Sequences are stored as tuples so a
record never changes after construction; builders create new records.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping, Sequence, Union

from cosmos.errors import ValidationError

Status = Literal["success", "failure"]
Fidelity = Literal["summary", "exemplar", "synthetic-data", "consequence"]
Termination = Literal["policy-stop", "max-steps"]

FIDELITIES: tuple[str, ...] = ("summary", "exemplar", "synthetic-data", "consequence")
TERMINATIONS: tuple[str, ...] = ("policy-stop", "max-steps")


def _nonneg_int(name: str, value: Any) -> None:
    if isinstance(value, bool) or not isinstance(value, int) or value < 0:
        raise ValidationError(name, f"expected non-negative integer, got {value!r}")


@dataclass(frozen=True)
class TokenUsage:
    prompt: int = 0
    output: int = 0
    total: int | None = None

    def __post_init__(self):
        _nonneg_int("tokens.prompt", self.prompt)
        _nonneg_int("tokens.output", self.output)
        if self.total is None:
            object.__setattr__(self, "total", self.prompt + self.output)
        _nonneg_int("tokens.total", self.total)
        if self.total != self.prompt + self.output:
            raise ValidationError(
                "tokens.total",
                f"{self.total} != prompt {self.prompt} + output {self.output}",
            )

    def __add__(self, other: TokenUsage) -> TokenUsage:
        return TokenUsage(self.prompt + other.prompt, self.output + other.output)

    @classmethod
    def sum(cls, usages: Sequence[TokenUsage]) -> TokenUsage:
        total = cls()
        for u in usages:
            total = total + u
        return total

    def to_dict(self) -> dict[str, int]:
        return {"prompt": self.prompt, "output": self.output, "total": self.total}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> TokenUsage:
        return cls(prompt=d["prompt"], output=d["output"], total=d["total"])


@dataclass(frozen=True)
class Task:
    id: str
    instruction: str
    server_ids: tuple[str, ...]
    difficulty: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "server_ids", tuple(self.server_ids))
        if not self.id:
            raise ValidationError("task.id", "must be non-empty")
        if not self.server_ids:
            raise ValidationError("task.server_ids", f"task {self.id} has no servers")
        if self.difficulty is None:
            object.__setattr__(self, "difficulty", len(self.server_ids))
        if self.difficulty != len(self.server_ids):
            raise ValidationError(
                "task.difficulty",
                f"{self.difficulty} != number of servers {len(self.server_ids)}",
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "instruction": self.instruction,
            "server_ids": list(self.server_ids),
            "difficulty": self.difficulty,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Task:
        return cls(
            id=d["id"],
            instruction=d.get("instruction", ""),
            server_ids=tuple(d.get("server_ids", ())),
            difficulty=d.get("difficulty"),
        )


@dataclass(frozen=True)
class ToolCall:
    call_id: str
    server: str
    tool_name: str
    arguments: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.call_id:
            raise ValidationError("call.call_id", "must be non-empty")
        if not self.tool_name:
            raise ValidationError("call.tool_name", "must be non-empty")

    def signature(self) -> str:
        """Identity of the action ignoring its call id."""
        return f"{self.server}.{self.tool_name}({canonical_json(self.arguments)})"

    def render(self) -> str:
        args = ", ".join(
            f"{k}={json.dumps(v, sort_keys=True, ensure_ascii=False)}"
            for k, v in sorted(self.arguments.items())
        )
        return f"{self.server}.{self.tool_name}({args})"

    def with_id(self, call_id: str) -> ToolCall:
        return ToolCall(call_id, self.server, self.tool_name, dict(self.arguments))

    def to_dict(self) -> dict[str, Any]:
        return {
            "call_id": self.call_id,
            "server": self.server,
            "tool_name": self.tool_name,
            "arguments": self.arguments,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ToolCall:
        return cls(d["call_id"], d["server"], d["tool_name"], dict(d.get("arguments") or {}))


@dataclass(frozen=True)
class Observation:
    call_id: str
    status: Status
    payload: Any
    latency_ms: float = 0.0
    tokens: TokenUsage = field(default_factory=TokenUsage)

    def __post_init__(self):
        if self.status not in ("success", "failure"):
            raise ValidationError("observation.status", f"unknown status {self.status!r}")
        if self.status == "failure" and not (isinstance(self.payload, str) and self.payload):
            raise ValidationError("observation.payload", "failure needs non-empty error text")
        if self.latency_ms < 0:
            raise ValidationError("observation.latency_ms", "must be >= 0")

    @property
    def ok(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict[str, Any]:
        return {
            "call_id": self.call_id,
            "status": self.status,
            "payload": self.payload,
            "latency_ms": self.latency_ms,
            "tokens": self.tokens.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> Observation:
        return cls(
            call_id=d["call_id"],
            status=d["status"],
            payload=d["payload"],
            latency_ms=d.get("latency_ms", 0.0),
            tokens=TokenUsage.from_dict(d["tokens"]),
        )


@dataclass(frozen=True)
class SimulatedObservation:
    call_id: str
    payload: Any
    fidelity: Fidelity

    def __post_init__(self):
        if self.payload is None or self.payload == "" or self.payload == {}:
            raise ValidationError("simulated.payload", "must be non-empty")
        if self.fidelity not in FIDELITIES:
            raise ValidationError("simulated.fidelity", f"unknown fidelity {self.fidelity!r}")

    def to_dict(self) -> dict[str, Any]:
        return {"call_id": self.call_id, "payload": self.payload, "fidelity": self.fidelity}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SimulatedObservation:
        return cls(d["call_id"], d["payload"], d["fidelity"])


AnyObservation = Union[SimulatedObservation, Observation, None]


@dataclass(frozen=True)
class AgentState:
    """Task plus the ordered (action, observation) history seen so far.

    The observation slot is ``None`` when the planner withholds simulated
    feedback from the policy.
    """

    task: Task
    history: tuple[tuple[ToolCall, AnyObservation], ...] = ()
    step: int = 0

    def __post_init__(self):
        object.__setattr__(self, "history", tuple(self.history))
        if self.step != len(self.history):
            raise ValidationError("state.step", f"{self.step} != history length {len(self.history)}")

    @property
    def last(self) -> tuple[ToolCall, AnyObservation] | None:
        return self.history[-1] if self.history else None

    def render(self, mode: str = "full") -> str:
        """Plain-text view of the history used as world-model context."""
        if mode == "none" or not self.history:
            return ""
        pairs = self.history if mode == "full" else self.history[-1:]
        lines = []
        for call, obs in pairs:
            shown = "(withheld)" if obs is None else canonical_json(obs.payload)
            lines.append(f"{call.render()} -> {shown}")
        return "\n".join(lines)


@dataclass(frozen=True)
class WMTrajectory:
    entries: tuple[tuple[ToolCall, SimulatedObservation], ...] = ()
    terminated_by: Termination = "policy-stop"

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.terminated_by not in TERMINATIONS:
            raise ValidationError("wm.terminated_by", f"unknown value {self.terminated_by!r}")

    @property
    def actions(self) -> list[ToolCall]:
        return [call for call, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Plan:
    """Ordered steps; the calls inside one step may run in parallel."""

    steps: tuple[tuple[ToolCall, ...], ...] = ()

    def __post_init__(self):
        steps = tuple(tuple(s) for s in self.steps)
        object.__setattr__(self, "steps", steps)
        seen: set[str] = set()
        for i, step in enumerate(steps):
            if not step:
                raise ValidationError("plan.steps", f"step {i} is empty")
            for call in step:
                if call.call_id in seen:
                    raise ValidationError("plan.steps", f"call_id {call.call_id} repeats")
                seen.add(call.call_id)

    @classmethod
    def linear(cls, calls: Sequence[ToolCall]) -> Plan:
        return cls(tuple((c,) for c in calls))

    @property
    def calls(self) -> list[ToolCall]:
        return [c for step in self.steps for c in step]

    def __len__(self) -> int:
        return len(self.steps)

    def to_list(self) -> list[list[dict[str, Any]]]:
        return [[c.to_dict() for c in step] for step in self.steps]

    @classmethod
    def from_list(cls, data: Sequence[Sequence[Mapping[str, Any]]]) -> Plan:
        return cls(tuple(tuple(ToolCall.from_dict(c) for c in step) for step in data))


@dataclass(frozen=True)
class ExecutionTrajectory:
    entries: tuple[tuple[ToolCall, Observation], ...] = ()
    failed_entries: tuple[tuple[ToolCall, Observation], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        object.__setattr__(self, "failed_entries", tuple(self.failed_entries))
        for call, obs in self.entries:
            if not obs.ok:
                raise ValidationError("trajectory.entries", f"{call.call_id} has failure status")
        for call, obs in self.failed_entries:
            if obs.ok:
                raise ValidationError("trajectory.failed_entries", f"{call.call_id} has success status")

    @property
    def attempted(self) -> int:
        return len(self.entries) + len(self.failed_entries)

    @property
    def succeeded(self) -> int:
        return len(self.entries)

    def all_observations(self) -> list[Observation]:
        return [obs for _, obs in self.entries] + [obs for _, obs in self.failed_entries]


@dataclass(frozen=True)
class RunResult:
    task_id: str
    agent_config: dict[str, Any]
    answer: str
    plan: Plan = field(default_factory=Plan)
    trajectory: ExecutionTrajectory = field(default_factory=ExecutionTrajectory)
    wm_trajectory: WMTrajectory | None = None
    tokens: TokenUsage = field(default_factory=TokenUsage)
    rounds: int = 0

    def validate(self) -> RunResult:
        """Check the cross-record invariants; raise ValidationError naming the field."""
        if not self.task_id:
            raise ValidationError("task_id", "must be non-empty")
        if not isinstance(self.answer, str) or not self.answer:
            raise ValidationError("answer", "must be non-empty text")
        _nonneg_int("rounds", self.rounds)
        expected = TokenUsage.sum([o.tokens for o in self.trajectory.all_observations()])
        if self.tokens != expected:
            raise ValidationError(
                "tokens", f"{self.tokens.to_dict()} != sum over calls {expected.to_dict()}"
            )
        if self.wm_trajectory is not None and not isinstance(self.wm_trajectory, WMTrajectory):
            raise ValidationError("wm_trajectory", "must be a WMTrajectory")
        return self

    @property
    def attempted_calls(self) -> int:
        return self.trajectory.attempted


class CallIdGen:
    """Deterministic "<seed>-<n>" call id factory."""

    def __init__(self, seed: int | str = 0, start: int = 1):
        self.seed = seed
        self._counter = itertools.count(start)

    def __call__(self) -> str:
        return f"{self.seed}-{next(self._counter)}"


def canonical_json(value: Any) -> str:
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
