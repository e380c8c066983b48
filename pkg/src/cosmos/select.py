"""Turn world-model explorations into one committed Plan.

Strategies: ``passthrough`` keeps every explored call in order;
``judge-policy`` lets a judge pick a subset/reordering, which is validated
against the exploration; :func:`mcts_select` runs UCT tree search over
simulated rollouts.
"""

from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

from cosmos.errors import ChatError, PlanValidationError, SimulationError
from cosmos.llm import ChatClient, load_template
from cosmos.planner import STOP, PlannerPolicy, looks_failed, propose, update_state
from cosmos.refs import references
from cosmos.simenv.spec import ToolSpec
from cosmos.types import AgentState, Plan, SimulatedObservation, Task, ToolCall, WMTrajectory, canonical_json
from cosmos.worldmodel import WorldModel

Judge = Callable[[WMTrajectory], Sequence[str]]
Conformance = Callable[[ToolCall, SimulatedObservation], bool]


# ── plan selection from a linear exploration ─────────────────────────────


def conformance_judge(traj: WMTrajectory) -> list[str]:
    """Keep the explored calls whose simulated outcome is not an error."""
    return [call.call_id for call, sim in traj.entries if not looks_failed(sim)]


@dataclass
class RemoteJudge:
    """Chat model asked which explored calls to execute for real."""

    client: ChatClient
    user_request: str
    template_ref: str = "judge_select"

    def __call__(self, traj: WMTrajectory) -> list[str]:
        listing = "\n".join(
            f"{call.call_id}: {call.render()} -> {canonical_json(sim.payload)}" for call, sim in traj.entries
        )
        prompt = load_template(self.template_ref).safe_substitute(
            user_request=self.user_request, trajectory=listing or "(none)"
        )
        reply = self.client.complete([{"role": "user", "content": prompt}])
        m = re.search(r"\[.*?\]", reply, re.S)
        try:
            ids = json.loads(m.group(0)) if m else None
        except json.JSONDecodeError:
            ids = None
        if not isinstance(ids, list):
            raise ChatError(f"judge reply is not a list of call ids: {reply[:200]!r}")
        return [str(i) for i in ids]


def select_optimal_plan(
    traj: WMTrajectory,
    strategy: Literal["passthrough", "judge-policy"] = "passthrough",
    judge: Judge | None = None,
) -> Plan:
    if strategy == "passthrough":
        return Plan.linear(traj.actions)
    if strategy != "judge-policy":
        raise ValueError(f"unknown selection strategy {strategy!r}")
    chosen = list((judge or conformance_judge)(traj))
    by_id = {call.call_id: call for call in traj.actions}
    unknown = [cid for cid in chosen if cid not in by_id]
    if unknown:
        raise PlanValidationError(f"judge selected calls that were never simulated: {unknown}")
    if len(set(chosen)) != len(chosen):
        raise PlanValidationError(f"judge selected a call twice: {chosen}")
    return Plan.linear([by_id[cid] for cid in chosen])


def group_parallel(plan: Plan) -> Plan:
    """Merge adjacent calls into parallel steps unless one references another."""
    steps: list[list[ToolCall]] = []
    for call in plan.calls:
        refs = references(call.arguments)
        if steps and not refs & {c.call_id for c in steps[-1]}:
            steps[-1].append(call)
        else:
            steps.append([call])
    return Plan(tuple(tuple(s) for s in steps))


# ── reward ───────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class MctsConfig:
    iterations: int = 128
    max_depth: int = 3
    exploration_c: float = math.sqrt(2)
    seed: int = 0
    length_penalty: float = 0.05

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if self.exploration_c <= 0:
            raise ValueError("exploration_c must be positive")
        if self.length_penalty < 0:
            raise ValueError("length_penalty must be >= 0")

    @classmethod
    def from_dict(cls, d: dict, **defaults) -> MctsConfig:
        """Accepts the short keys ``c`` and ``depth`` as well as the field names."""
        aliases = {"c": "exploration_c", "depth": "max_depth"}
        kwargs = dict(defaults)
        for k, v in d.items():
            kwargs[aliases.get(k, k)] = v
        return cls(**kwargs)


def default_conformance(call: ToolCall, sim: SimulatedObservation) -> bool:
    return not looks_failed(sim)


def schema_conformance(tools: Sequence[tuple[str, ToolSpec]]) -> Conformance:
    """Non-error and, when the tool declares one, valid against its output schema."""
    lookup = {(sid, t.name): t for sid, t in tools}

    def check(call: ToolCall, sim: SimulatedObservation) -> bool:
        if looks_failed(sim):
            return False
        tool = lookup.get((call.server, call.tool_name))
        return tool is None or tool.validate_output(sim.payload) is None

    return check


def plan_reward(
    plan_actions: Sequence[ToolCall],
    sims: Sequence[SimulatedObservation],
    cfg: MctsConfig = MctsConfig(),
    judge: Conformance = default_conformance,
) -> float:
    """Fraction of conformant simulations minus a per-step length penalty."""
    if len(plan_actions) != len(sims):
        raise ValueError("plan_actions and sims differ in length")
    if not plan_actions:
        return 0.0
    ok = sum(1 for a, s in zip(plan_actions, sims) if judge(a, s))
    return ok / len(plan_actions) - cfg.length_penalty * len(plan_actions)


# ── MCTS ─────────────────────────────────────────────────────────────────


@dataclass(eq=False)
class MctsNode:
    state: AgentState
    action_taken: ToolCall | None = None
    sim: SimulatedObservation | None = None
    parent: MctsNode | None = None
    visits: int = 0
    total_reward: float = 0.0
    children: list[MctsNode] = field(default_factory=list)
    untried: list | None = None
    is_stop: bool = False
    dead: bool = False

    @property
    def depth(self) -> int:
        return self.state.step

    @property
    def mean(self) -> float:
        return self.total_reward / self.visits if self.visits else 0.0

    def path(self) -> list[MctsNode]:
        nodes, node = [], self
        while node is not None and node.action_taken is not None:
            nodes.append(node)
            node = node.parent
        return nodes[::-1]

    def uct(self, c: float) -> float:
        if self.visits == 0:
            return math.inf
        return self.mean + c * math.sqrt(math.log(self.parent.visits) / self.visits)


def mcts_select(
    task: Task,
    policy: PlannerPolicy,
    wm: WorldModel,
    cfg: MctsConfig = MctsConfig(),
    judge: Conformance = default_conformance,
) -> tuple[Plan, WMTrajectory]:
    """UCT search over simulated plans; returns the most-visited path and its simulations.

    Each tree edge is a proposed call or STOP. A rollout continues from the
    new leaf with uniformly random proposals until STOP or ``max_depth``, and
    is scored with :func:`plan_reward`. A rollout whose simulation fails
    scores 0.
    """
    rng = random.Random(cfg.seed)
    root = MctsNode(AgentState(task))
    if not propose(policy, root.state):
        return Plan(), WMTrajectory((), "policy-stop")

    def simulate(state: AgentState, action: ToolCall) -> SimulatedObservation:
        return wm.simulate(action, task.instruction, state.render("full"))

    def options(node: MctsNode) -> list:
        if node.is_stop or node.dead or node.depth >= cfg.max_depth:
            return []
        return propose(policy, node.state) + [STOP]

    def terminal(node: MctsNode) -> bool:
        return node.is_stop or node.dead or node.depth >= cfg.max_depth

    def expand(node: MctsNode) -> MctsNode:
        choice = node.untried.pop(rng.randrange(len(node.untried)))
        if choice is STOP:
            child = MctsNode(node.state, action_taken=None, parent=node, is_stop=True)
        else:
            try:
                sim = simulate(node.state, choice)
            except SimulationError:
                child = MctsNode(node.state, choice, None, node, dead=True)
            else:
                child = MctsNode(update_state(node.state, (choice, sim)), choice, sim, node)
        node.children.append(child)
        return child

    def rollout(node: MctsNode) -> float:
        if node.dead:
            return 0.0
        base = node.parent if node.is_stop else node
        chain = base.path()
        actions = [n.action_taken for n in chain]
        sims = [n.sim for n in chain]
        state = base.state
        if not node.is_stop:
            while len(actions) < cfg.max_depth:
                choice = rng.choice(propose(policy, state) + [STOP])
                if choice is STOP:
                    break
                try:
                    sim = simulate(state, choice)
                except SimulationError:
                    return 0.0
                actions.append(choice)
                sims.append(sim)
                state = update_state(state, (choice, sim))
        return plan_reward(actions, sims, cfg, judge)

    for _ in range(cfg.iterations):
        node = root
        while True:
            if node.untried is None:
                node.untried = options(node)
            if terminal(node) or node.untried or not node.children:
                break
            node = max(node.children, key=lambda ch: ch.uct(cfg.exploration_c))
        if not terminal(node) and node.untried:
            node = expand(node)
        reward = rollout(node)
        while node is not None:
            node.visits += 1
            node.total_reward += reward
            node = node.parent

    chosen: list[MctsNode] = []
    node = root
    terminated = "policy-stop"
    while node.children:
        best = max(node.children, key=lambda ch: (ch.visits, ch.mean))
        if best.is_stop or best.dead:
            break
        chosen.append(best)
        node = best
    if chosen and chosen[-1].depth >= cfg.max_depth:
        terminated = "max-steps"

    seen: dict[str, int] = {}
    pairs = []
    for n in chosen:
        call = n.action_taken
        k = seen.get(call.call_id, 0)
        seen[call.call_id] = k + 1
        if k:
            call = call.with_id(f"{call.call_id}.{k}")
        sim = SimulatedObservation(call.call_id, n.sim.payload, n.sim.fidelity)
        pairs.append((call, sim))
    return Plan.linear([c for c, _ in pairs]), WMTrajectory(tuple(pairs), terminated)
