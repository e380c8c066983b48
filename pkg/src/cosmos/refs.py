"""Argument references between calls in a plan.

An argument value ``"$ref:<call_id>"`` stands for the payload of an earlier
call; ``"$ref:<call_id>#a.0.b"`` picks a path inside it. A call that holds a
reference depends on the referenced call.
"""

from __future__ import annotations

from typing import Any, Mapping

PREFIX = "$ref:"


class UnresolvedReference(LookupError):
    pass


def _walk(value: Any):
    if isinstance(value, str):
        yield value
    elif isinstance(value, Mapping):
        for v in value.values():
            yield from _walk(v)
    elif isinstance(value, (list, tuple)):
        for v in value:
            yield from _walk(v)


def split_ref(text: str) -> tuple[str, str]:
    body = text[len(PREFIX):]
    call_id, _, path = body.partition("#")
    return call_id, path


def references(arguments: Mapping[str, Any]) -> set[str]:
    """Call ids referenced anywhere inside ``arguments``."""
    return {split_ref(s)[0] for s in _walk(arguments) if s.startswith(PREFIX)}


def _follow(payload: Any, path: str) -> Any:
    cur = payload
    for part in filter(None, path.split(".")):
        if isinstance(cur, Mapping) and part in cur:
            cur = cur[part]
        elif isinstance(cur, list) and part.lstrip("-").isdigit() and -len(cur) <= int(part) < len(cur):
            cur = cur[int(part)]
        else:
            raise UnresolvedReference(f"path {path!r} not found")
    return cur


def resolve(arguments: Any, payloads: Mapping[str, Any]) -> Any:
    """Substitute references with values from ``payloads`` (call_id -> payload)."""
    if isinstance(arguments, str) and arguments.startswith(PREFIX):
        call_id, path = split_ref(arguments)
        if call_id not in payloads:
            raise UnresolvedReference(f"no successful result for {call_id!r}")
        return _follow(payloads[call_id], path)
    if isinstance(arguments, Mapping):
        return {k: resolve(v, payloads) for k, v in arguments.items()}
    if isinstance(arguments, list):
        return [resolve(v, payloads) for v in arguments]
    return arguments
