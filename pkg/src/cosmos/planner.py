"""Phase 1: generate actions with a policy and simulate each with a world model."""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from string import Template
from typing import Any, Literal, Protocol, Sequence, Union

from cosmos.errors import PlanningError, SimulationError
from cosmos.llm import ChatClient, load_template
from cosmos.simenv.spec import ToolSpec
from cosmos.types import (
    AgentState,
    AnyObservation,
    CallIdGen,
    Observation,
    Task,
    ToolCall,
    WMTrajectory,
    canonical_json,
)
from cosmos.worldmodel import WorldModel

log = logging.getLogger(__name__)


class _Stop:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "STOP"


STOP = _Stop()

Decision = Union[ToolCall, Sequence[ToolCall], _Stop]


class PlannerPolicy(Protocol):
    def next_action(self, state: AgentState) -> Decision: ...


def propose(policy: PlannerPolicy, state: AgentState) -> list[ToolCall]:
    """Candidate actions at ``state``; policies without ``propose`` offer their next action."""
    if hasattr(policy, "propose"):
        return list(policy.propose(state))
    decision = policy.next_action(state)
    if decision is STOP:
        return []
    return [decision] if isinstance(decision, ToolCall) else list(decision)


@dataclass(frozen=True)
class PlannerConfig:
    max_steps: int = 15
    revise_on_simulation: bool = True
    on_simulation_error: Literal["abort", "skip"] = "abort"
    context_mode: Literal["full", "last", "none"] = "full"

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.on_simulation_error not in ("abort", "skip"):
            raise ValueError(f"unknown on_simulation_error {self.on_simulation_error!r}")


def update_state(state: AgentState, pair: tuple[ToolCall, AnyObservation]) -> AgentState:
    return AgentState(task=state.task, history=state.history + (tuple(pair),), step=state.step + 1)


def plan_with_simulation(
    task: Task, policy: PlannerPolicy, wm: WorldModel, cfg: PlannerConfig = PlannerConfig()
) -> WMTrajectory:
    state = AgentState(task)
    entries = []
    while state.step < cfg.max_steps:
        decision = policy.next_action(state)
        if decision is STOP:
            return WMTrajectory(tuple(entries), "policy-stop")
        batch = [decision] if isinstance(decision, ToolCall) else list(decision)
        for action in batch:
            if state.step >= cfg.max_steps:
                break
            try:
                sim = wm.simulate(action, task.instruction, state.render(cfg.context_mode))
            except SimulationError as exc:
                if cfg.on_simulation_error == "abort":
                    raise PlanningError(
                        f"simulation failed at step {state.step}: {exc}",
                        partial=WMTrajectory(tuple(entries), "policy-stop"),
                    ) from exc
                log.warning("skipping unsimulated action %s: %s", action.call_id, exc)
                state = update_state(state, (action, None))
                continue
            entries.append((action, sim))
            state = update_state(state, (action, sim if cfg.revise_on_simulation else None))
    return WMTrajectory(tuple(entries), "max-steps")


# ── policies ─────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class ScriptedPolicy:
    """Emits the script in order, one call per step, then stops."""

    script: tuple[ToolCall, ...] = ()

    def next_action(self, state: AgentState) -> Decision:
        return self.script[state.step] if state.step < len(self.script) else STOP

    def propose(self, state: AgentState) -> list[ToolCall]:
        action = self.next_action(state)
        return [] if action is STOP else [action]


def scripted_policy(script: Sequence[ToolCall]) -> ScriptedPolicy:
    return ScriptedPolicy(tuple(script))


def looks_failed(obs: AnyObservation) -> bool:
    """True for a failed real observation or a simulated one predicting an error."""
    if obs is None:
        return False
    if isinstance(obs, Observation):
        return not obs.ok
    payload = obs.payload
    if isinstance(payload, dict):
        return "error" in payload
    return isinstance(payload, str) and payload.lower().startswith("error")


@dataclass(frozen=True)
class RetryingPolicy:
    """Works through a script, re-issuing a call until it succeeds.

    Each script item is a call or a sequence of variants; attempt ``k`` of an
    item uses variant ``min(k, len - 1)``, so a fixture can model an agent that
    corrects its arguments after each failure. Works on real and simulated
    observations alike.
    """

    script: tuple[ToolCall | tuple[ToolCall, ...], ...] = ()
    max_attempts: int | None = None

    def next_action(self, state: AgentState) -> Decision:
        done = sum(1 for _, obs in state.history if obs is not None and not looks_failed(obs))
        if done >= len(self.script):
            return STOP
        item = self.script[done]
        variants = (item,) if isinstance(item, ToolCall) else tuple(item)
        attempts = 0
        for _, obs in reversed(state.history):
            if not looks_failed(obs):
                break
            attempts += 1
        if self.max_attempts is not None and attempts >= self.max_attempts:
            return STOP
        call = variants[min(attempts, len(variants) - 1)]
        return call if attempts == 0 else call.with_id(f"{call.call_id}.r{attempts}")


@dataclass(frozen=True)
class ToolsetPolicy:
    """Proposes the same candidate calls at every state (for tree search)."""

    candidates: tuple[ToolCall, ...] = ()

    def propose(self, state: AgentState) -> list[ToolCall]:
        return list(self.candidates)

    def next_action(self, state: AgentState) -> Decision:
        return self.candidates[0] if self.candidates else STOP


_TAGGED = re.compile(r"<tool_call>\s*(.*?)\s*</tool_call>", re.S)
_FENCED = re.compile(r"```(?:json)?\s*(\{.*?\})\s*```", re.S)


def parse_policy_reply(text: str, tools: Sequence[tuple[str, ToolSpec]], call_id: str) -> ToolCall | _Stop | None:
    """Turn a model reply into a ToolCall, STOP, or None when it cannot be parsed."""
    m = _TAGGED.search(text) or _FENCED.search(text)
    if m is None:
        return STOP if "FINISH" in text.upper() else None
    try:
        obj = json.loads(m.group(1))
    except json.JSONDecodeError:
        return None
    if not isinstance(obj, dict):
        return None
    name = obj.get("tool") or obj.get("tool_name") or obj.get("name")
    args = obj.get("arguments", {})
    if not isinstance(name, str) or not isinstance(args, dict):
        return None
    server = obj.get("server")
    owners = [sid for sid, t in tools if t.name == name and (server is None or sid == server)]
    if tools and not owners:
        return None
    if server is None:
        if len(owners) != 1:
            return None
        server = owners[0]
    return ToolCall(call_id, server, name, args)


@dataclass
class RemotePolicy:
    """Chat model that proposes the next call given the planning state."""

    client: ChatClient
    template: Template
    tools: list[tuple[str, ToolSpec]]
    parse_attempts: int = 2
    id_gen: CallIdGen = field(default_factory=CallIdGen)
    warnings: list[str] = field(default_factory=list)

    def _render(self, state: AgentState) -> str:
        tools = "\n".join(f"{sid}.{t.name}: {canonical_json(t.param_schema)}" for sid, t in self.tools)
        return self.template.safe_substitute(
            user_request=state.task.instruction,
            tools=tools or "(none)",
            history=state.render("full") or "(nothing yet)",
        )

    def next_action(self, state: AgentState) -> Decision:
        messages: list[dict[str, Any]] = [{"role": "user", "content": self._render(state)}]
        for attempt in range(self.parse_attempts):
            reply = self.client.complete(messages)
            decision = parse_policy_reply(reply, self.tools, call_id="pending")
            if decision is STOP:
                return STOP
            if decision is not None:
                return decision.with_id(self.id_gen())
            messages += [
                {"role": "assistant", "content": reply},
                {"role": "user", "content": "Could not parse that. Reply with one <tool_call> JSON block or FINISH."},
            ]
        warning = f"step {state.step}: unparseable reply after {self.parse_attempts} attempts; stopping"
        self.warnings.append(warning)
        log.warning(warning)
        return STOP


def remote_policy(
    endpoint: str,
    model: str,
    tools: Sequence[tuple[str, ToolSpec]],
    template: str = "plan_step",
    parse_attempts: int = 2,
    seed: int | str = 0,
    **client_kwargs,
) -> RemotePolicy:
    client = ChatClient(endpoint=endpoint, model=model, **client_kwargs)
    return RemotePolicy(client, load_template(template), list(tools), parse_attempts, CallIdGen(seed))
