"""In-process simulated multi-server environment."""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass
from typing import Any, Iterable, Protocol, Sequence, runtime_checkable

from cosmos.simenv.spec import (
    FailurePolicy,
    ServerSpec,
    ToolExecutionError,
    ToolSpec,
    evaluate_tool,
    load_server_spec,
)
from cosmos.types import Observation, TokenUsage, ToolCall, canonical_json


@runtime_checkable
class Environment(Protocol):
    """Anything that can list and execute tools for real."""

    shareable: bool

    def list_tools(self) -> list[tuple[str, ToolSpec]]: ...

    def call_tool(self, call: ToolCall) -> Observation: ...

    def counters(self) -> dict[str, dict[str, int]]: ...


def payload_text(payload: Any) -> str:
    return payload if isinstance(payload, str) else canonical_json(payload)


def charge_tokens(payload: Any) -> TokenUsage:
    """Synthetic accounting: one token per four payload characters, rounded up."""
    return TokenUsage(prompt=0, output=math.ceil(len(payload_text(payload)) / 4))


@dataclass
class _Counter:
    calls: int = 0
    failures: int = 0
    tokens: int = 0

    def as_dict(self) -> dict[str, int]:
        return {"calls": self.calls, "failures": self.failures, "tokens": self.tokens}


class SimEnvironment:
    """Deterministic environment backed by server spec behaviors.

    Given the same specs, failure policy and ordered call sequence, every
    observation is identical. Safe to share between threads; counter updates
    and failure-policy decisions are serialized.
    """

    shareable = True

    def __init__(
        self,
        specs: Iterable[ServerSpec],
        failure_policy: FailurePolicy | None = None,
        timeout_ms: float | None = None,
    ):
        self.specs: dict[str, ServerSpec] = {}
        for spec in specs:
            if spec.server_id in self.specs:
                raise ValueError(f"server {spec.server_id!r} loaded twice")
            self.specs[spec.server_id] = spec
        self.failure_policy = failure_policy or FailurePolicy()
        self.timeout_ms = timeout_ms
        self._lock = threading.Lock()
        self._n = 0
        self._stats = {sid: _Counter() for sid in self.specs}

    @classmethod
    def from_refs(cls, refs: Sequence[str], **kwargs) -> SimEnvironment:
        return cls([load_server_spec(r) for r in refs], **kwargs)

    def list_tools(self) -> list[tuple[str, ToolSpec]]:
        return sorted(
            ((sid, tool) for sid, spec in self.specs.items() for tool in spec.tools),
            key=lambda pair: (pair[0], pair[1].name),
        )

    def find_tool(self, server: str, name: str) -> ToolSpec | None:
        spec = self.specs.get(server)
        return spec.tool(name) if spec else None

    def call_tool(self, call: ToolCall) -> Observation:
        with self._lock:
            self._n += 1
            obs = self._dispatch(call, self._n)
            stats = self._stats.setdefault(call.server, _Counter())
            stats.calls += 1
            stats.failures += 0 if obs.ok else 1
            stats.tokens += obs.tokens.total
        return obs

    def _dispatch(self, call: ToolCall, n: int) -> Observation:
        spec = self.specs.get(call.server)
        if spec is None:
            return self._fail(call, f"unknown server {call.server!r}")
        tool = spec.tool(call.tool_name)
        if tool is None:
            return self._fail(call, f"unknown tool {call.tool_name!r} on server {call.server!r}")
        problem = tool.validate_arguments(call.arguments)
        if problem:
            return self._fail(call, problem, tool.latency_ms)
        if self.timeout_ms is not None and tool.latency_ms > self.timeout_ms:
            return self._fail(call, f"timeout after {self.timeout_ms} ms", self.timeout_ms)
        if self.failure_policy.should_fail(n, call.server, call.tool_name):
            return self._fail(call, f"injected failure ({self.failure_policy.mode}) on call {n}", tool.latency_ms)
        try:
            payload = evaluate_tool(tool, spec.server_id, call.arguments, spec.seed)
        except ToolExecutionError as exc:
            return self._fail(call, f"tool error: {exc}", tool.latency_ms)
        problem = tool.validate_output(payload)
        if problem:
            return self._fail(call, f"output {problem}", tool.latency_ms)
        return Observation(call.call_id, "success", payload, tool.latency_ms, charge_tokens(payload))

    @staticmethod
    def _fail(call: ToolCall, text: str, latency: float = 0.0) -> Observation:
        return Observation(call.call_id, "failure", text, latency, charge_tokens(text))

    def counters(self) -> dict[str, dict[str, int]]:
        with self._lock:
            return {sid: c.as_dict() for sid, c in sorted(self._stats.items())}

    @property
    def calls_made(self) -> int:
        return self._n


def list_tools(env: Environment) -> list[tuple[str, ToolSpec]]:
    return env.list_tools()


def call_tool(env: Environment, call: ToolCall) -> Observation:
    return env.call_tool(call)


def env_counters(env: Environment) -> dict[str, dict[str, int]]:
    return env.counters()
