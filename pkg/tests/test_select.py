from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosmos.errors import ChatError, PlanValidationError
from cosmos.llm import ChatClient
from cosmos.planner import ToolsetPolicy, scripted_policy
from cosmos.select import (
    MctsConfig,
    RemoteJudge,
    conformance_judge,
    group_parallel,
    mcts_select,
    plan_reward,
    schema_conformance,
    select_optimal_plan,
)
from cosmos.simenv import SimEnvironment
from cosmos.types import Plan, SimulatedObservation, Task, ToolCall, WMTrajectory
from cosmos.worldmodel import make_world_model

TASK = Task("t", "compute", ("math",))
A = ToolCall("A", "math", "add", {"a": 1, "b": 1})
B = ToolCall("B", "math", "div", {"a": 1, "b": 0})
C = ToolCall("C", "math", "mul", {"a": "$ref:A#result", "b": 2})
ORACLE = make_world_model({"kind": "schema-oracle", "server_spec": "math"})


def sim(call, payload):
    return SimulatedObservation(call.call_id, payload, "synthetic-data")


TRAJ = WMTrajectory(((A, sim(A, {"result": 2})), (B, sim(B, {"error": "div by zero"})), (C, sim(C, {"result": 4}))), "policy-stop")


def test_passthrough_keeps_exploration_order():
    assert select_optimal_plan(TRAJ).calls == [A, B, C]
    assert select_optimal_plan(WMTrajectory((), "policy-stop")) == Plan()


def test_judge_policy_subset_and_validation():
    assert select_optimal_plan(TRAJ, "judge-policy").calls == [A, C]
    assert conformance_judge(TRAJ) == ["A", "C"]
    assert select_optimal_plan(TRAJ, "judge-policy", judge=lambda t: ["C", "A"]).calls == [C, A]
    with pytest.raises(PlanValidationError):
        select_optimal_plan(TRAJ, "judge-policy", judge=lambda t: ["A", "Z"])
    with pytest.raises(PlanValidationError):
        select_optimal_plan(TRAJ, "judge-policy", judge=lambda t: ["A", "A"])
    with pytest.raises(ValueError):
        select_optimal_plan(TRAJ, "vibes")


def test_group_parallel_respects_references():
    independent = ToolCall("D", "math", "add", {"a": 2, "b": 2})
    grouped = group_parallel(Plan.linear([A, independent, C]))
    assert grouped.steps == ((A, independent), (C,))
    assert group_parallel(Plan()) == Plan()


def test_plan_reward_examples():
    ok = sim(A, {"result": 2})
    bad = sim(B, {"error": "x"})
    cfg = MctsConfig(length_penalty=0.05)
    assert plan_reward([A], [ok], cfg) == pytest.approx(1 - 0.05)
    assert plan_reward([A, B], [ok, bad], cfg) == pytest.approx(0.5 - 0.10)
    assert plan_reward([], [], cfg) == 0.0
    with pytest.raises(ValueError):
        plan_reward([A], [], cfg)


def test_schema_conformance_checks_output_schema():
    check = schema_conformance(SimEnvironment.from_refs(["math"]).list_tools())
    assert check(A, sim(A, {"result": 2}))
    assert not check(A, sim(A, {"value": 2}))
    assert not check(B, sim(B, {"error": "x"}))


def test_mcts_config_aliases_and_validation():
    cfg = MctsConfig.from_dict({"c": 0.5, "depth": 2}, seed=9)
    assert (cfg.exploration_c, cfg.max_depth, cfg.seed) == (0.5, 2, 9)
    with pytest.raises(ValueError):
        MctsConfig(iterations=0)


def test_mcts_single_iteration_returns_a_valid_plan():
    plan, traj = mcts_select(TASK, ToolsetPolicy((A, B)), ORACLE, MctsConfig(iterations=1))
    assert len(plan.calls) <= 1
    assert [c for c, _ in traj.entries] == plan.calls


def test_mcts_empty_policy():
    plan, traj = mcts_select(TASK, scripted_policy([]), ORACLE)
    assert plan == Plan() and traj.terminated_by == "policy-stop"


def test_mcts_prefers_conformant_short_plans():
    plan, traj = mcts_select(TASK, ToolsetPolicy((A, B)), ORACLE, MctsConfig(iterations=200, seed=1))
    assert plan.calls == [A]
    assert traj.entries[0][1].payload == {"result": 2}


def test_mcts_renames_repeated_calls():
    cfg = MctsConfig(iterations=200, max_depth=3, length_penalty=0.0)
    plan, _ = mcts_select(TASK, ToolsetPolicy((A,)), ORACLE, cfg)
    ids = [c.call_id for c in plan.calls]
    assert len(ids) == len(set(ids))
    assert all(i.startswith("A") for i in ids)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 40), st.integers(1, 4))
def test_mcts_is_seed_deterministic_and_depth_bounded(seed, iterations, depth):
    cfg = MctsConfig(iterations=iterations, max_depth=depth, seed=seed)
    first = mcts_select(TASK, ToolsetPolicy((A, B)), ORACLE, cfg)
    second = mcts_select(TASK, ToolsetPolicy((A, B)), ORACLE, cfg)
    assert first == second
    assert len(first[0].calls) <= depth


def test_remote_judge(chat_stub):
    stub = chat_stub(['I would run ["A", "C"].', "no list here"])
    judge = RemoteJudge(ChatClient(stub.url, "judge"), "compute")
    assert select_optimal_plan(TRAJ, "judge-policy", judge=judge).calls == [A, C]
    assert "A: math.add(a=1, b=1)" in stub.requests[0]["messages"][0]["content"]
    with pytest.raises(ChatError):
        judge(TRAJ)
