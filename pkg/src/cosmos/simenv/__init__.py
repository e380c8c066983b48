"""Deterministic simulated tool servers and a JSON-RPC wire client."""

from cosmos.simenv.env import Environment, SimEnvironment, call_tool, env_counters, list_tools
from cosmos.simenv.spec import (
    FailurePolicy,
    ServerSpec,
    ToolSpec,
    evaluate_tool,
    load_server_spec,
    parse_server_spec,
)
from cosmos.simenv.wire import WireEnvironment, loopback_command, wire_client_connect

__all__ = [
    "Environment",
    "FailurePolicy",
    "ServerSpec",
    "SimEnvironment",
    "ToolSpec",
    "WireEnvironment",
    "call_tool",
    "env_counters",
    "evaluate_tool",
    "list_tools",
    "load_server_spec",
    "loopback_command",
    "parse_server_spec",
    "wire_client_connect",
]
