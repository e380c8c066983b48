"""Plan tool calls in simulation with a world model, then execute them over MCP-style tool servers.

Phase 1 explores tool calls against a world model; a selector commits a
Plan; phase 2 executes it against a real (or simulated) environment. The
package also ships a deterministic simulated tool ecosystem, a JSON-RPC wire
client, Execution Quality metrics and a benchmark harness.
"""

from cosmos.codec import decode_trajectory, encode_trajectory
from cosmos.executor import (
    ExecOptions,
    TemplateSynthesizer,
    WMInfusedAgent,
    adjust_plan,
    execute_plan,
    run_react_baseline,
    run_wm_agent,
)
from cosmos.planner import STOP, PlannerConfig, plan_with_simulation, remote_policy, scripted_policy, update_state
from cosmos.select import MctsConfig, mcts_select, plan_reward, select_optimal_plan
from cosmos.types import (
    AgentState,
    ExecutionTrajectory,
    Observation,
    Plan,
    RunResult,
    SimulatedObservation,
    Task,
    TokenUsage,
    ToolCall,
    WMTrajectory,
)
from cosmos.worldmodel import WorldModel, WorldModelDescriptor, describe, make_world_model, simulate

__version__ = "0.1.0"

__all__ = [
    "STOP",
    "AgentState",
    "ExecOptions",
    "ExecutionTrajectory",
    "MctsConfig",
    "Observation",
    "Plan",
    "PlannerConfig",
    "RunResult",
    "SimulatedObservation",
    "Task",
    "TemplateSynthesizer",
    "TokenUsage",
    "ToolCall",
    "WMInfusedAgent",
    "WMTrajectory",
    "WorldModel",
    "WorldModelDescriptor",
    "adjust_plan",
    "decode_trajectory",
    "describe",
    "encode_trajectory",
    "execute_plan",
    "make_world_model",
    "mcts_select",
    "plan_reward",
    "plan_with_simulation",
    "remote_policy",
    "run_react_baseline",
    "run_wm_agent",
    "scripted_policy",
    "select_optimal_plan",
    "simulate",
    "update_state",
]
