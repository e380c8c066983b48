"""Server spec files (``cosmos-spec/1``) and the deterministic tool behaviors.

A spec is a JSON document::

    {"format": "cosmos-spec/1", "server_id": "math", "seed": 0,
     "tools": [{"name": "add",
                "description": "...",
                "param_schema": {...JSON Schema...},
                "output_schema": {...JSON Schema...},
                "behavior": "pure-function" | "table-lookup" | "templated-random",
                "reference": {...},
                "latency_ms": 1.0}]}

Behavior references:

* pure-function: ``{"outputs": {"result": "a + b"}}``; each value is an
  arithmetic expression over the call arguments.
* table-lookup: ``{"key": "region", "table": {"us": {...}}, "default": {...}}``.
* templated-random: ``{"template": <json>}`` where strings may contain
  ``{arg:x}``, ``{int:lo:hi}``, ``{float:lo:hi}``, ``{choice:a|b}``,
  ``{hex:n}`` and ``{i}``, and ``{"$repeat": {"min": 1, "max": 3}, "item": ...}``
  expands to a list.

Every behavior is a pure function of (seed, server, tool, arguments).
"""

from __future__ import annotations

import ast
import json
import math
import operator
import random
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Literal, Mapping

import jsonschema

from cosmos.errors import CosmosError, SpecError
from cosmos.types import canonical_json

FORMAT = "cosmos-spec/1"
BEHAVIORS = ("pure-function", "table-lookup", "templated-random")

Behavior = Literal["pure-function", "table-lookup", "templated-random"]


class ToolExecutionError(CosmosError):
    """The tool's behavior could not produce a result for these arguments."""


@dataclass(frozen=True)
class ToolSpec:
    name: str
    param_schema: dict[str, Any] = field(default_factory=lambda: {"type": "object"})
    output_schema: dict[str, Any] = field(default_factory=dict)
    behavior: Behavior | None = None
    reference: dict[str, Any] | None = None
    description: str = ""
    latency_ms: float = 1.0

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "description": self.description,
            "param_schema": self.param_schema,
            "output_schema": self.output_schema,
            "behavior": self.behavior,
            "reference": self.reference,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> ToolSpec:
        return cls(
            name=d["name"],
            param_schema=d.get("param_schema") or {"type": "object"},
            output_schema=d.get("output_schema") or {},
            behavior=d.get("behavior"),
            reference=d.get("reference"),
            description=d.get("description", ""),
            latency_ms=float(d.get("latency_ms", 1.0)),
        )

    def validate_arguments(self, arguments: Mapping[str, Any]) -> str | None:
        """Return a schema-error message, or None if the arguments conform."""
        return _schema_error(self.param_schema, dict(arguments))

    def validate_output(self, payload: Any) -> str | None:
        if not self.output_schema:
            return None
        return _schema_error(self.output_schema, payload)


@dataclass(frozen=True)
class ServerSpec:
    server_id: str
    tools: tuple[ToolSpec, ...] = ()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "tools", tuple(self.tools))

    def tool(self, name: str) -> ToolSpec | None:
        for t in self.tools:
            if t.name == name:
                return t
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": FORMAT,
            "server_id": self.server_id,
            "seed": self.seed,
            "tools": [t.to_dict() for t in self.tools],
        }


def _schema_error(schema: dict[str, Any], instance: Any) -> str | None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(instance), key=lambda e: list(e.path))
    if not errors:
        return None
    err = errors[0]
    where = "/".join(str(p) for p in err.path) or "(root)"
    return f"schema error at {where}: {err.message}"


# ── loading ──────────────────────────────────────────────────────────────


def bundled_spec_path(name: str) -> Path:
    """Bundled fixture by server name; dashes map to underscores in file names."""
    base = resources.files("cosmos") / "data" / "specs"
    return Path(str(base / f"{name.replace('-', '_')}.json"))


def resolve_spec_path(ref: str | Path) -> Path:
    """A spec reference is either a path or the name of a bundled fixture."""
    p = Path(ref)
    if p.suffix or p.exists():
        return p
    return bundled_spec_path(str(ref))


def load_server_spec(path: str | Path) -> ServerSpec:
    p = resolve_spec_path(path)
    try:
        raw = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise SpecError(f"spec file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise SpecError(f"{p}: parse error at line {exc.lineno}: {exc.msg}") from None
    return parse_server_spec(raw, source=str(p))


def parse_server_spec(raw: Mapping[str, Any], source: str = "<spec>") -> ServerSpec:
    if not isinstance(raw, Mapping):
        raise SpecError(f"{source}: spec must be an object")
    if raw.get("format") != FORMAT:
        raise SpecError(f"{source}: expected format {FORMAT!r}, got {raw.get('format')!r}")
    server_id = raw.get("server_id")
    if not isinstance(server_id, str) or not server_id:
        raise SpecError(f"{source}: server_id must be a non-empty string")
    tools_raw = raw.get("tools", [])
    if not isinstance(tools_raw, list):
        raise SpecError(f"{source}: tools must be a list")

    tools: list[ToolSpec] = []
    seen: set[str] = set()
    for t in tools_raw:
        name = t.get("name") if isinstance(t, Mapping) else None
        if not isinstance(name, str) or not name:
            raise SpecError(f"{source}: tool without a name")
        if name in seen:
            raise SpecError(f"{source}: duplicate tool name {name!r}")
        seen.add(name)
        tool = ToolSpec.from_dict(t)
        _check_tool(tool, source)
        tools.append(tool)
    return ServerSpec(server_id=server_id, tools=tuple(tools), seed=int(raw.get("seed", 0)))


def _check_tool(tool: ToolSpec, source: str) -> None:
    where = f"{source}: tool {tool.name!r}"
    for label, schema in (("param_schema", tool.param_schema), ("output_schema", tool.output_schema)):
        try:
            jsonschema.Draft202012Validator.check_schema(schema)
        except jsonschema.SchemaError as exc:
            raise SpecError(f"{where}: invalid {label}: {exc.message}") from None
    if tool.behavior not in BEHAVIORS:
        raise SpecError(f"{where}: behavior must be one of {BEHAVIORS}, got {tool.behavior!r}")
    ref = tool.reference
    if not isinstance(ref, Mapping):
        raise SpecError(f"{where}: reference must be an object")
    if tool.behavior == "pure-function":
        outputs = ref.get("outputs")
        if not isinstance(outputs, Mapping) or not outputs:
            raise SpecError(f"{where}: pure-function needs a non-empty 'outputs' map")
        for key, expr in outputs.items():
            try:
                _check_expression(expr)
            except ToolExecutionError as exc:
                raise SpecError(f"{where}: output {key!r}: {exc}") from None
    elif tool.behavior == "table-lookup":
        if not isinstance(ref.get("key"), str) or not isinstance(ref.get("table"), Mapping):
            raise SpecError(f"{where}: table-lookup needs 'key' and 'table'")
    elif "template" not in ref:
        raise SpecError(f"{where}: templated-random needs a 'template'")
    if tool.latency_ms < 0:
        raise SpecError(f"{where}: latency_ms must be >= 0")


# ── pure-function expressions ────────────────────────────────────────────

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos, ast.Not: operator.not_}
_CMP = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}
_FUNCS = {
    "abs": abs,
    "min": min,
    "max": max,
    "round": round,
    "len": len,
    "sum": sum,
    "int": int,
    "float": float,
    "str": str,
    "sqrt": math.sqrt,
    "floor": math.floor,
    "ceil": math.ceil,
    "log": math.log,
    "exp": math.exp,
    "upper": str.upper,
    "lower": str.lower,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALLOWED = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Compare, ast.BoolOp, ast.IfExp,
    ast.Name, ast.Load, ast.Constant, ast.Call, ast.Subscript, ast.List, ast.Tuple, ast.Dict,
    ast.And, ast.Or, *_BINOPS, *_UNARY, *_CMP,
)  # fmt: skip


def _check_expression(expr: Any) -> ast.Expression:
    if not isinstance(expr, str):
        raise ToolExecutionError(f"expression must be a string, got {expr!r}")
    try:
        tree = ast.parse(expr, mode="eval")
    except SyntaxError as exc:
        raise ToolExecutionError(f"bad expression {expr!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED):
            raise ToolExecutionError(f"disallowed syntax {type(node).__name__} in {expr!r}")
        if isinstance(node, ast.Call) and not (
            isinstance(node.func, ast.Name) and node.func.id in _FUNCS
        ):
            raise ToolExecutionError(f"call to unknown function in {expr!r}")
    return tree


def evaluate_expression(expr: str, names: Mapping[str, Any]) -> Any:
    """Evaluate a side-effect-free arithmetic expression over ``names``."""
    tree = _check_expression(expr)

    def ev(node: ast.AST) -> Any:
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            return node.value
        if isinstance(node, ast.Name):
            if node.id in names:
                return names[node.id]
            if node.id in _CONSTS:
                return _CONSTS[node.id]
            raise ToolExecutionError(f"unknown name {node.id!r}")
        if isinstance(node, ast.BinOp):
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp):
            return _UNARY[type(node.op)](ev(node.operand))
        if isinstance(node, ast.BoolOp):
            values = [ev(v) for v in node.values]
            return all(values) if isinstance(node.op, ast.And) else any(values)
        if isinstance(node, ast.Compare):
            left = ev(node.left)
            for op, comp in zip(node.ops, node.comparators):
                right = ev(comp)
                if not _CMP[type(op)](left, right):
                    return False
                left = right
            return True
        if isinstance(node, ast.IfExp):
            return ev(node.body) if ev(node.test) else ev(node.orelse)
        if isinstance(node, ast.Call):
            return _FUNCS[node.func.id](*[ev(a) for a in node.args])
        if isinstance(node, ast.Subscript):
            return ev(node.value)[ev(node.slice)]
        if isinstance(node, (ast.List, ast.Tuple)):
            return [ev(e) for e in node.elts]
        if isinstance(node, ast.Dict):
            return {ev(k): ev(v) for k, v in zip(node.keys, node.values)}
        raise ToolExecutionError(f"unsupported node {type(node).__name__}")

    try:
        return ev(tree)
    except ToolExecutionError:
        raise
    except (ArithmeticError, ValueError, TypeError, KeyError, IndexError) as exc:
        raise ToolExecutionError(f"{type(exc).__name__}: {exc}") from None


# ── templated-random ─────────────────────────────────────────────────────

_PLACEHOLDER = re.compile(r"\{(\w+)(?::([^{}]*))?\}")


def _fill(template: Any, rng: random.Random, args: Mapping[str, Any], index: int) -> Any:
    if isinstance(template, str):
        whole = _PLACEHOLDER.fullmatch(template)
        if whole:
            return _placeholder(whole.group(1), whole.group(2), rng, args, index)
        return _PLACEHOLDER.sub(
            lambda m: str(_placeholder(m.group(1), m.group(2), rng, args, index)), template
        )
    if isinstance(template, list):
        return [_fill(t, rng, args, index) for t in template]
    if isinstance(template, dict):
        if "$repeat" in template:
            spec = template["$repeat"]
            lo, hi = (spec, spec) if isinstance(spec, int) else (spec["min"], spec["max"])
            count = rng.randint(lo, hi)
            return [_fill(template["item"], rng, args, i) for i in range(count)]
        return {k: _fill(v, rng, args, index) for k, v in template.items()}
    return template


def _placeholder(kind: str, param: str | None, rng: random.Random, args: Mapping[str, Any], index: int) -> Any:
    if kind == "arg":
        if param not in args:
            raise ToolExecutionError(f"template references missing argument {param!r}")
        return args[param]
    if kind == "int":
        lo, hi = (int(x) for x in param.split(":"))
        return rng.randint(lo, hi)
    if kind == "float":
        lo, hi = (float(x) for x in param.split(":"))
        return round(rng.uniform(lo, hi), 2)
    if kind == "choice":
        return rng.choice(param.split("|"))
    if kind == "hex":
        return "".join(rng.choice("0123456789abcdef") for _ in range(int(param or 8)))
    if kind == "i":
        return index
    raise ToolExecutionError(f"unknown template placeholder {kind!r}")


# ── dispatch ─────────────────────────────────────────────────────────────


def evaluate_tool(tool: ToolSpec, server_id: str, arguments: Mapping[str, Any], seed: int) -> Any:
    """Run the tool's reference behavior. Deterministic in (seed, server, tool, arguments)."""
    ref = tool.reference or {}
    if tool.behavior == "pure-function":
        return {key: evaluate_expression(expr, arguments) for key, expr in ref["outputs"].items()}
    if tool.behavior == "table-lookup":
        key = arguments.get(ref["key"])
        table = ref["table"]
        hit = table.get(str(key)) if key is not None else None
        if hit is None:
            if "default" in ref:
                return ref["default"]
            raise ToolExecutionError(f"no entry for {ref['key']}={key!r}")
        return hit
    if tool.behavior == "templated-random":
        rng = random.Random(f"{seed}|{server_id}|{tool.name}|{canonical_json(dict(arguments))}")
        return _fill(ref["template"], rng, arguments, 0)
    raise ToolExecutionError(f"tool {tool.name!r} has no executable behavior")


# ── failure injection ────────────────────────────────────────────────────


@dataclass(frozen=True)
class FailurePolicy:
    mode: Literal["none", "every-nth", "probabilistic", "by-name"] = "none"
    parameter: Any = None
    seed: int = 0

    def __post_init__(self):
        if self.mode == "every-nth":
            if not isinstance(self.parameter, int) or self.parameter < 1:
                raise SpecError("every-nth needs a positive integer parameter")
        elif self.mode == "probabilistic":
            if not isinstance(self.parameter, (int, float)) or not 0 <= self.parameter <= 1:
                raise SpecError("probabilistic parameter must lie in [0, 1]")
        elif self.mode == "by-name":
            names = [self.parameter] if isinstance(self.parameter, str) else self.parameter
            object.__setattr__(self, "parameter", frozenset(names or ()))
        elif self.mode != "none":
            raise SpecError(f"unknown failure mode {self.mode!r}")

    def should_fail(self, counter: int, server: str, tool_name: str) -> bool:
        """``counter`` is the 1-based index of the call within the environment."""
        if self.mode == "every-nth":
            return counter % self.parameter == 0
        if self.mode == "probabilistic":
            return random.Random(f"{self.seed}|{counter}").random() < self.parameter
        if self.mode == "by-name":
            return tool_name in self.parameter or f"{server}.{tool_name}" in self.parameter
        return False

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> FailurePolicy:
        if not d:
            return cls()
        return cls(mode=d.get("mode", "none"), parameter=d.get("parameter"), seed=int(d.get("seed", 0)))
