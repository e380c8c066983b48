"""Pluggable world models: predict a tool call's outcome without executing it.

Three kinds ship:

* ``echo`` renders the call itself (an exemplar of what was asked).
* ``schema-oracle`` replays a sim server's own behavior under its own seed,
  so fidelity is perfect when the seeds match the environment's and degraded
  otherwise.
* ``remote`` asks a chat-completions endpoint to predict the tool output.

No world model ever touches an Environment.
"""

from __future__ import annotations

import json
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Literal, Mapping

from cosmos.errors import ChatError, SimulationError, SpecError, UnknownToolError
from cosmos.llm import ChatClient, load_template
from cosmos.simenv.spec import ServerSpec, ToolExecutionError, ToolSpec, evaluate_tool, load_server_spec
from cosmos.types import SimulatedObservation, ToolCall, canonical_json

KINDS = ("echo", "schema-oracle", "remote")
SECRET_KEYS = {"api_key", "token", "authorization", "password", "secret"}
REDACTED = "***"
DEFAULT_CONTEXT_BUDGET = 8192


@dataclass(frozen=True)
class WorldModelDescriptor:
    kind: Literal["echo", "schema-oracle", "remote"]
    model_name: str = ""
    params: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "model_name": self.model_name, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> WorldModelDescriptor:
        params = dict(d.get("params") or {})
        # flat form: {"kind": "schema-oracle", "server_spec": "math"}
        for k, v in d.items():
            if k not in ("kind", "model_name", "params"):
                params.setdefault(k, v)
        return cls(kind=d["kind"], model_name=d.get("model_name", ""), params=params)


def truncate_context(context: str | None, budget: int = DEFAULT_CONTEXT_BUDGET) -> str:
    """Keep at most ``budget`` characters, dropping the oldest text first."""
    if not context:
        return ""
    return context if len(context) <= budget else context[-budget:]


class WorldModel(ABC):
    """Simulator for P(next state | state, tool call)."""

    def __init__(self, descriptor: WorldModelDescriptor):
        self.descriptor = descriptor
        self.model_name = descriptor.model_name
        self.context_budget = int(descriptor.params.get("context_budget", DEFAULT_CONTEXT_BUDGET))

    @abstractmethod
    def simulate(self, tool_call: ToolCall, user_request: str, context: str | None = None) -> SimulatedObservation:
        """Predict the observation for ``tool_call``."""

    def describe(self) -> WorldModelDescriptor:
        return self.descriptor

    def to_dict(self) -> dict[str, Any]:
        return self.describe().to_dict()

    def __repr__(self) -> str:
        return f"{type(self).__name__}(kind={self.descriptor.kind!r}, model_name={self.model_name!r})"


class EchoWorldModel(WorldModel):
    def simulate(self, tool_call, user_request, context=None):
        return SimulatedObservation(tool_call.call_id, f"would call {tool_call.render()}", "exemplar")


class SchemaOracleWorldModel(WorldModel):
    """Evaluates the declared tool behaviors of one or more server specs."""

    def __init__(self, descriptor: WorldModelDescriptor, specs: list[ServerSpec]):
        super().__init__(descriptor)
        self.specs = {s.server_id: s for s in specs}
        self.seed = descriptor.params.get("seed")

    def find_tool(self, tool_call: ToolCall) -> tuple[ServerSpec, ToolSpec]:
        spec = self.specs.get(tool_call.server)
        if spec is not None and spec.tool(tool_call.tool_name) is not None:
            return spec, spec.tool(tool_call.tool_name)
        raise UnknownToolError(f"{tool_call.server}.{tool_call.tool_name} is not declared in {sorted(self.specs)}")

    def simulate(self, tool_call, user_request, context=None):
        spec, tool = self.find_tool(tool_call)
        seed = spec.seed if self.seed is None else int(self.seed)
        problem = tool.validate_arguments(tool_call.arguments)
        if problem:
            return SimulatedObservation(tool_call.call_id, {"error": problem}, "synthetic-data")
        try:
            payload = evaluate_tool(tool, spec.server_id, tool_call.arguments, seed)
        except ToolExecutionError as exc:
            return SimulatedObservation(tool_call.call_id, {"error": f"tool error: {exc}"}, "synthetic-data")
        if payload in (None, "", {}):
            payload = {"result": payload}
        return SimulatedObservation(tool_call.call_id, payload, "synthetic-data")


class RemoteWorldModel(WorldModel):
    """Chat-completions model asked to predict a tool's output.

    Keeps a per-instance memo so repeated identical prompts within a run are
    not re-sent.
    """

    def __init__(self, descriptor: WorldModelDescriptor, client: ChatClient, specs: list[ServerSpec]):
        super().__init__(descriptor)
        self.client = client
        self.template = load_template(descriptor.params.get("template", "wm_simulate"))
        self.specs = {s.server_id: s for s in specs}
        self._memo: dict[str, SimulatedObservation] = {}
        self._memo_lock = threading.Lock()

    def describe(self) -> WorldModelDescriptor:
        d = self.descriptor
        params = {k: (REDACTED if k.lower() in SECRET_KEYS else v) for k, v in d.params.items()}
        return WorldModelDescriptor(d.kind, d.model_name, params)

    def _schema_for(self, call: ToolCall) -> str:
        spec = self.specs.get(call.server)
        tool = spec.tool(call.tool_name) if spec else None
        if tool is None:
            return "(schema unavailable)"
        return canonical_json({"input": tool.param_schema, "output": tool.output_schema})

    def simulate(self, tool_call, user_request, context=None):
        prompt = self.template.safe_substitute(
            user_request=user_request,
            context=truncate_context(context, self.context_budget) or "(none)",
            tool_schema=self._schema_for(tool_call),
            tool_call=tool_call.render(),
        )
        with self._memo_lock:
            hit = self._memo.get(prompt)
        if hit is not None:
            return SimulatedObservation(tool_call.call_id, hit.payload, hit.fidelity)
        try:
            reply = self.client.complete([{"role": "user", "content": prompt}]).strip()
        except ChatError as exc:
            raise SimulationError(str(exc)) from None
        if not reply:
            raise SimulationError("world model returned an empty prediction")
        try:
            payload = json.loads(reply)
        except json.JSONDecodeError:
            payload = reply
        if payload in (None, "", {}, []):
            payload = reply
        obs = SimulatedObservation(tool_call.call_id, payload, "summary")
        with self._memo_lock:
            self._memo[prompt] = obs
        return obs


def _spec_refs(value: Any) -> list[str]:
    if value is None:
        return []
    return [value] if isinstance(value, str) else list(value)


def make_world_model(descriptor: WorldModelDescriptor | Mapping[str, Any]) -> WorldModel:
    if not isinstance(descriptor, WorldModelDescriptor):
        descriptor = WorldModelDescriptor.from_dict(descriptor)
    kind = descriptor.kind
    params = descriptor.params
    if kind == "echo":
        return EchoWorldModel(descriptor)
    if kind == "schema-oracle":
        refs = _spec_refs(params.get("server_spec"))
        if not refs:
            raise SpecError("schema-oracle world model requires param 'server_spec'")
        return SchemaOracleWorldModel(descriptor, [load_server_spec(r) for r in refs])
    if kind == "remote":
        if not params.get("endpoint"):
            raise SpecError("remote world model requires param 'endpoint'")
        client = ChatClient(
            endpoint=params["endpoint"],
            model=descriptor.model_name or params.get("model", ""),
            timeout_s=float(params.get("timeout_s", 60.0)),
            max_in_flight=int(params.get("max_in_flight", 4)),
            api_key=params.get("api_key"),
        )
        specs = [load_server_spec(r) for r in _spec_refs(params.get("server_spec"))]
        return RemoteWorldModel(descriptor, client, specs)
    raise SpecError(f"unknown world model kind {kind!r}; expected one of {KINDS}")


def simulate(wm: WorldModel, tool_call: ToolCall, user_request: str, context: str | None = None) -> SimulatedObservation:
    return wm.simulate(tool_call, user_request, context)


def describe(wm: WorldModel) -> WorldModelDescriptor:
    return wm.describe()
