"""Phase 2: execute a committed plan for real, plus the ReAct baseline loop."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, TimeoutError as FutureTimeout
from dataclasses import dataclass
from typing import Any, Callable, Literal, Protocol, Sequence

from cosmos.errors import ChatError, CosmosError, EnvironmentUnavailable, PlanningError, RunError
from cosmos.llm import ChatClient, load_template
from cosmos.planner import STOP, PlannerConfig, PlannerPolicy, plan_with_simulation, update_state
from cosmos.refs import UnresolvedReference, references, resolve
from cosmos.select import Conformance, Judge, MctsConfig, default_conformance, group_parallel, mcts_select
from cosmos.select import select_optimal_plan
from cosmos.simenv.env import Environment, charge_tokens
from cosmos.types import (
    AgentState,
    ExecutionTrajectory,
    Observation,
    Plan,
    RunResult,
    Task,
    TokenUsage,
    ToolCall,
    WMTrajectory,
    canonical_json,
)
from cosmos.worldmodel import WorldModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExecOptions:
    adjust_on_failure: bool = False
    parallel: bool = True
    per_call_timeout_ms: int = 30_000
    max_width: int = 8

    def __post_init__(self):
        if self.per_call_timeout_ms < 1:
            raise ValueError("per_call_timeout_ms must be >= 1")


class AnswerSynthesizer(Protocol):
    def synthesize(self, task: Task, trajectory: ExecutionTrajectory) -> str: ...


class TemplateSynthesizer:
    """Deterministic answer: task id followed by one digest line per successful call."""

    def __init__(self, width: int = 80):
        self.width = width

    def synthesize(self, task: Task, trajectory: ExecutionTrajectory) -> str:
        if not trajectory.entries:
            return f"{task.id}: no actions taken"
        lines = [f"{task.id}:"]
        for call, obs in trajectory.entries:
            digest = canonical_json(obs.payload)
            if len(digest) > self.width:
                digest = digest[: self.width - 3] + "..."
            lines.append(f"- {call.tool_name} -> {digest}")
        return "\n".join(lines)


class RemoteSynthesizer:
    """Chat model summarizing the successful tool results into an answer."""

    def __init__(self, client: ChatClient, template: str = "synthesize"):
        self.client = client
        self.template = load_template(template)
        self.fallback = TemplateSynthesizer()

    def synthesize(self, task: Task, trajectory: ExecutionTrajectory) -> str:
        results = "\n".join(f"{c.render()} -> {canonical_json(o.payload)}" for c, o in trajectory.entries)
        prompt = self.template.safe_substitute(user_request=task.instruction, results=results or "(none)")
        text = self.client.complete([{"role": "user", "content": prompt}]).strip()
        return text or self.fallback.synthesize(task, trajectory)


Adjuster = Callable[[Plan, tuple[ToolCall, Observation]], Plan]


class AdjusterUnavailable(CosmosError):
    pass


def drop_dependents(remaining: Plan, failed_call_id: str) -> Plan:
    """Remove every remaining call that depends, directly or transitively, on the failed call."""
    dropped = {failed_call_id}
    steps = []
    for step in remaining.steps:
        kept = []
        for call in step:
            if references(call.arguments) & dropped:
                dropped.add(call.call_id)
            else:
                kept.append(call)
        if kept:
            steps.append(tuple(kept))
    return Plan(tuple(steps))


def adjust_plan(
    remaining: Plan, failure: tuple[ToolCall, Observation], adjuster: Adjuster | None = None
) -> Plan:
    call, obs = failure
    if obs.ok:
        raise ValueError("adjust_plan needs a failed observation")
    if adjuster is not None:
        try:
            return adjuster(remaining, failure)
        except (AdjusterUnavailable, ChatError) as exc:
            log.warning("plan adjuster unavailable (%s); dropping dependents instead", exc)
    return drop_dependents(remaining, call.call_id)


class _Recorder:
    """Single writer for one run's trajectory."""

    def __init__(self):
        self.entries: list[tuple[ToolCall, Observation]] = []
        self.failed: list[tuple[ToolCall, Observation]] = []
        self.payloads: dict[str, Any] = {}

    def commit(self, call: ToolCall, obs: Observation) -> None:
        if obs.ok:
            self.entries.append((call, obs))
            self.payloads[call.call_id] = obs.payload
        else:
            self.failed.append((call, obs))

    def trajectory(self) -> ExecutionTrajectory:
        return ExecutionTrajectory(tuple(self.entries), tuple(self.failed))

    def tokens(self) -> TokenUsage:
        return TokenUsage.sum([o.tokens for o in self.trajectory().all_observations()])


def _failure(call: ToolCall, text: str, latency: float = 0.0) -> Observation:
    return Observation(call.call_id, "failure", text, latency, charge_tokens(text))


def _run_call(env: Environment, call: ToolCall, payloads: dict[str, Any]) -> tuple[ToolCall, Observation]:
    """Resolve references and execute. Returns the call as recorded (its original arguments)."""
    try:
        args = resolve(call.arguments, payloads)
    except UnresolvedReference as exc:
        return call, _failure(call, f"unresolved reference: {exc}")
    obs = env.call_tool(ToolCall(call.call_id, call.server, call.tool_name, args))
    return call, obs


def _run_step(
    env: Environment, step: Sequence[ToolCall], rec: _Recorder, opts: ExecOptions, pool: ThreadPoolExecutor | None
) -> list[tuple[ToolCall, Observation]]:
    payloads = dict(rec.payloads)
    if pool is None or len(step) == 1:
        results = []
        for call in step:
            results.append(_run_call(env, call, payloads))
    else:
        futures = [(call, pool.submit(_run_call, env, call, payloads)) for call in step]
        results = []
        for call, fut in futures:
            try:
                results.append(fut.result(timeout=opts.per_call_timeout_ms / 1000.0))
            except FutureTimeout:
                results.append((call, _failure(call, f"timeout after {opts.per_call_timeout_ms} ms",
                                               float(opts.per_call_timeout_ms))))  # fmt: skip
    return sorted(results, key=lambda pair: pair[0].call_id)


def execute_plan(
    task: Task,
    plan: Plan,
    env: Environment,
    opts: ExecOptions = ExecOptions(),
    synth: AnswerSynthesizer | None = None,
    adjuster: Adjuster | None = None,
    agent_config: dict[str, Any] | None = None,
    wm_trajectory: WMTrajectory | None = None,
) -> RunResult:
    """Run the plan step by step; calls inside a step run concurrently when ``opts.parallel``.

    Failed calls go to ``failed_entries`` and execution continues. With
    ``adjust_on_failure`` the remaining steps are rewritten after each failure.
    """
    synth = synth or TemplateSynthesizer()
    rec = _Recorder()
    remaining = list(plan.steps)
    rounds = 0
    pool = ThreadPoolExecutor(max_workers=opts.max_width) if opts.parallel else None
    try:
        while remaining:
            step = remaining.pop(0)
            rounds += 1
            try:
                results = _run_step(env, step, rec, opts, pool)
            except EnvironmentUnavailable as exc:
                raise RunError(str(exc), partial=_result(task, plan, rec, synth, rounds, agent_config, wm_trajectory)) from exc
            for call, obs in results:
                rec.commit(call, obs)
            if opts.adjust_on_failure:
                for failed in [(c, o) for c, o in results if not o.ok]:
                    remaining = list(adjust_plan(Plan(tuple(remaining)), failed, adjuster).steps)
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    return _result(task, plan, rec, synth, rounds, agent_config, wm_trajectory)


def _result(task, plan, rec, synth, rounds, agent_config, wm_trajectory) -> RunResult:
    trajectory = rec.trajectory()
    return RunResult(
        task_id=task.id,
        agent_config=dict(agent_config or {}),
        answer=synth.synthesize(task, trajectory),
        plan=plan,
        trajectory=trajectory,
        wm_trajectory=wm_trajectory,
        tokens=rec.tokens(),
        rounds=rounds,
    )


def _fresh_id(call: ToolCall, used: dict[str, int]) -> ToolCall:
    # a policy may repeat a call id across rounds; recorded ids must stay unique
    k = used.get(call.call_id, 0)
    used[call.call_id] = k + 1
    return call.with_id(f"{call.call_id}.{k}") if k else call


def run_react_baseline(
    task: Task,
    env: Environment,
    policy: PlannerPolicy,
    max_rounds: int = 15,
    synth: AnswerSynthesizer | None = None,
    agent_config: dict[str, Any] | None = None,
    parallel: bool = True,
) -> RunResult:
    """Interleave policy decisions with real calls, feeding real observations back.

    A policy may return several calls in one round; they run as one parallel step.
    """
    if max_rounds < 1:
        raise ValueError("max_rounds must be >= 1")
    synth = synth or TemplateSynthesizer()
    opts = ExecOptions(parallel=parallel)
    rec = _Recorder()
    state = AgentState(task)
    executed: list[tuple[ToolCall, ...]] = []
    used: dict[str, int] = {}
    pool = ThreadPoolExecutor(max_workers=opts.max_width) if parallel else None
    try:
        for _ in range(max_rounds):
            decision = policy.next_action(state)
            if decision is STOP:
                break
            batch = (decision,) if isinstance(decision, ToolCall) else tuple(decision)
            if not batch:
                break
            batch = tuple(_fresh_id(call, used) for call in batch)
            executed.append(batch)
            try:
                results = _run_step(env, batch, rec, opts, pool)
            except EnvironmentUnavailable as exc:
                partial = _result(task, Plan(tuple(executed)), rec, synth, len(executed), agent_config, None)
                raise RunError(str(exc), partial=partial) from exc
            for call, obs in results:
                rec.commit(call, obs)
                state = update_state(state, (call, obs))
    finally:
        if pool is not None:
            pool.shutdown(wait=False)
    return _result(task, Plan(tuple(executed)), rec, synth, len(executed), agent_config, None)


def run_wm_agent(
    task: Task,
    policy: PlannerPolicy,
    wm: WorldModel,
    env: Environment,
    *,
    strategy: Literal["passthrough", "judge-policy", "mcts"] = "passthrough",
    planner_cfg: PlannerConfig = PlannerConfig(),
    mcts_cfg: MctsConfig = MctsConfig(),
    judge: Judge | None = None,
    conformance: Conformance = default_conformance,
    parallelize: bool = False,
    opts: ExecOptions = ExecOptions(),
    synth: AnswerSynthesizer | None = None,
    adjuster: Adjuster | None = None,
    agent_config: dict[str, Any] | None = None,
) -> RunResult:
    """Plan in simulation, select a plan, execute it for real.

    Errors from a phase are re-raised as RunError tagged with the phase name.
    """
    try:
        if strategy == "mcts":
            plan, wm_traj = mcts_select(task, policy, wm, mcts_cfg, conformance)
        else:
            wm_traj = plan_with_simulation(task, policy, wm, planner_cfg)
    except PlanningError as exc:
        raise RunError(str(exc), partial=exc.partial, phase="plan") from exc
    except CosmosError as exc:
        raise RunError(str(exc), phase="plan") from exc
    if strategy != "mcts":
        try:
            plan = select_optimal_plan(wm_traj, strategy, judge)
        except (CosmosError, ValueError) as exc:
            raise RunError(str(exc), partial=wm_traj, phase="select") from exc
    if parallelize:
        plan = group_parallel(plan)
    try:
        return execute_plan(task, plan, env, opts, synth, adjuster, agent_config, wm_traj)
    except RunError as exc:
        raise RunError(str(exc), partial=exc.partial, phase="execute") from exc


class WMInfusedAgent:
    """Object wrapper over :func:`run_wm_agent` holding its dependencies."""

    def __init__(
        self,
        policy: PlannerPolicy,
        max_iterations: int,
        execute_w_revision: bool,
        world_model: WorldModel,
        env: Environment,
        **kwargs,
    ):
        self.policy = policy
        self.world_model = world_model
        self.env = env
        self.planner_cfg = PlannerConfig(max_steps=max_iterations)
        self.opts = ExecOptions(adjust_on_failure=execute_w_revision)
        self.kwargs = kwargs

    def execute(self, task: Task) -> dict[str, Any]:
        result = run_wm_agent(
            task, self.policy, self.world_model, self.env,
            planner_cfg=self.planner_cfg, opts=self.opts, **self.kwargs,
        )  # fmt: skip
        return {
            "solution": result.answer,
            "plan": result.plan,
            "trajectory": result.trajectory,
            "wm_trajectory": result.wm_trajectory,
            "result": result,
        }


def calls_per_round(result: RunResult) -> float:
    if result.rounds == 0:
        return math.nan
    return result.attempted_calls / result.rounds
