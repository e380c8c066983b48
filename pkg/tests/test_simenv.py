from __future__ import annotations

import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosmos.errors import SpecError
from cosmos.simenv import FailurePolicy, SimEnvironment, load_server_spec, parse_server_spec
from cosmos.simenv.env import charge_tokens
from cosmos.simenv.spec import ToolExecutionError, evaluate_expression
from cosmos.types import ToolCall


def spec(tools, server_id="s"):
    return {"format": "cosmos-spec/1", "server_id": server_id, "tools": tools}


def echo_tool(name="echo", **extra):
    return {"name": name, "behavior": "table-lookup", "reference": {"key": "k", "table": {}, "default": {"ok": True}}, **extra}


def call(cid, server, tool, **args):
    return ToolCall(cid, server, tool, args)


def test_bundled_specs_load():
    math_spec = load_server_spec("math")
    assert [t.name for t in math_spec.tools] == ["add", "mul", "div", "stats"]
    assert load_server_spec("unit-converter").server_id == "unit-converter"


def test_spec_errors():
    with pytest.raises(SpecError, match="duplicate tool name"):
        parse_server_spec(spec([echo_tool(), echo_tool()]))
    with pytest.raises(SpecError, match="format"):
        parse_server_spec({"server_id": "s", "tools": []})
    with pytest.raises(SpecError, match="behavior"):
        parse_server_spec(spec([{"name": "x", "behavior": "magic"}]))
    with pytest.raises(SpecError, match="disallowed"):
        parse_server_spec(spec([{"name": "x", "behavior": "pure-function", "reference": {"outputs": {"r": "a.__class__"}}}]))
    with pytest.raises(SpecError, match="not found"):
        load_server_spec("/nonexistent/spec.json")


def test_spec_with_no_tools_lists_nothing():
    env = SimEnvironment([parse_server_spec(spec([]))])
    assert env.list_tools() == []


def test_list_tools_is_sorted_and_stable():
    env = SimEnvironment.from_refs(["unit-converter", "math"])
    listed = [(sid, t.name) for sid, t in env.list_tools()]
    assert listed == sorted(listed)
    assert listed[0][0] == "math"
    assert listed == [(sid, t.name) for sid, t in env.list_tools()]
    assert SimEnvironment([]).list_tools() == []


def test_pure_function_matches_python_arithmetic():
    env = SimEnvironment.from_refs(["math"])
    obs = env.call_tool(call("c1", "math", "add", a=2, b=3))
    assert obs.ok and obs.payload == {"result": 5}
    assert obs.tokens.output == math.ceil(len('{"result":5}') / 4)
    stats = env.call_tool(call("c2", "math", "stats", values=[1, 2, 6]))
    assert stats.payload == {"mean": 3.0, "min": 1, "max": 6}


@settings(max_examples=60, deadline=None)
@given(st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_add_and_mul_agree_with_python(a, b):
    env = SimEnvironment.from_refs(["math"])
    assert env.call_tool(call("x", "math", "add", a=a, b=b)).payload == {"result": a + b}
    assert env.call_tool(call("y", "math", "mul", a=a, b=b)).payload == {"result": a * b}


def test_schema_and_runtime_errors_are_failure_observations():
    env = SimEnvironment.from_refs(["math"])
    bad = env.call_tool(call("c1", "math", "add", a="x", b=1))
    assert not bad.ok and "schema error at a" in bad.payload
    zero = env.call_tool(call("c2", "math", "div", a=1, b=0))
    assert not zero.ok and "ZeroDivisionError" in zero.payload
    assert "unknown tool" in env.call_tool(call("c3", "math", "sqrt", a=1)).payload
    assert "unknown server" in env.call_tool(call("c4", "nope", "add")).payload


def test_counters_track_calls_failures_and_tokens():
    env = SimEnvironment.from_refs(["math"])
    assert env.counters() == {"math": {"calls": 0, "failures": 0, "tokens": 0}}
    observations = [
        env.call_tool(call("c1", "math", "add", a=1, b=1)),
        env.call_tool(call("c2", "math", "add", a="bad", b=1)),
        env.call_tool(call("c3", "math", "mul", a=2, b=2)),
    ]
    counters = env.counters()["math"]
    assert counters["calls"] == 3 and counters["failures"] == 1
    assert counters["tokens"] == sum(o.tokens.total for o in observations)


def test_every_nth_failure_trace():
    env = SimEnvironment.from_refs(["math"], failure_policy=FailurePolicy("every-nth", 2))
    trace = [env.call_tool(call(f"c{i}", "math", "add", a=i, b=i)).ok for i in range(1, 7)]
    assert trace == [True, False, True, False, True, False]


def test_by_name_and_probabilistic_policies():
    env = SimEnvironment.from_refs(["math"], failure_policy=FailurePolicy("by-name", "math.mul"))
    assert env.call_tool(call("a", "math", "add", a=1, b=1)).ok
    assert not env.call_tool(call("b", "math", "mul", a=1, b=1)).ok

    def trace(seed):
        e = SimEnvironment.from_refs(["math"], failure_policy=FailurePolicy("probabilistic", 0.5, seed))
        return [e.call_tool(call(str(i), "math", "add", a=1, b=1)).ok for i in range(40)]

    assert trace(3) == trace(3)
    assert 0 < sum(trace(3)) < 40
    assert not any(FailurePolicy("probabilistic", 0.0).should_fail(n, "s", "t") for n in range(1, 50))
    with pytest.raises(SpecError):
        FailurePolicy("every-nth", 0)
    with pytest.raises(SpecError):
        FailurePolicy("probabilistic", 1.5)
    with pytest.raises(SpecError):
        FailurePolicy("sometimes")


def test_timeout_is_a_failure():
    raw = spec([echo_tool(latency_ms=50)])
    env = SimEnvironment([parse_server_spec(raw)], timeout_ms=10)
    obs = env.call_tool(call("c1", "s", "echo"))
    assert not obs.ok and "timeout" in obs.payload


def test_templated_random_is_deterministic_in_arguments():
    env = SimEnvironment.from_refs(["monitor"])
    tool = next(t for sid, t in env.list_tools() if t.behavior == "templated-random")
    args = tool.param_schema["examples"][0]
    first = SimEnvironment.from_refs(["monitor"]).call_tool(ToolCall("a", "monitor", tool.name, args))
    # the call counter does not feed the generator
    env.call_tool(call("warmup", "monitor", "nope"))
    second = env.call_tool(ToolCall("b", "monitor", tool.name, args))
    assert first.ok and first.payload == second.payload


def test_expression_evaluator_rejects_escapes():
    assert evaluate_expression("max(a, b) * 2", {"a": 1, "b": 4}) == 8
    for expr in ("__import__('os')", "a.real", "(lambda: 1)()", "open('x')"):
        with pytest.raises(ToolExecutionError):
            evaluate_expression(expr, {"a": 1})
    with pytest.raises(ToolExecutionError, match="unknown name"):
        evaluate_expression("z + 1", {})


def test_charge_tokens_rounds_up():
    assert charge_tokens("abcde").output == 2
    assert charge_tokens({"a": 1}).output == math.ceil(len(json.dumps({"a": 1}, separators=(",", ":"))) / 4)
