"""Canonical line-delimited encoding of a RunResult (``cosmos-traj/1``).

Layout, one JSON object per line with keys sorted::

    {"kind": "header", "format": "cosmos-traj/1", "task_id": ..., "agent_config": ...,
     "plan": [[call, ...], ...], "rounds": n, "tokens": {...}, "wm": null | {"terminated_by": ...}}
    {"kind": "entry",  "call": {...}, "obs": {...}}     successful real calls, in order
    {"kind": "failed", "call": {...}, "obs": {...}}     failed real calls, in order
    {"kind": "wm",     "call": {...}, "sim": {...}}     world-model exploration pairs
    {"kind": "answer", "text": "..."}                   always the last line

Encoding the same value twice gives identical bytes.
"""

from __future__ import annotations

import json
from typing import Any

from cosmos.errors import EncodingError, TrajectoryParseError, ValidationError
from cosmos.types import (
    ExecutionTrajectory,
    Observation,
    Plan,
    RunResult,
    SimulatedObservation,
    TokenUsage,
    ToolCall,
    WMTrajectory,
    canonical_json,
)

FORMAT = "cosmos-traj/1"


def _line(obj: dict[str, Any]) -> str:
    return canonical_json(obj) + "\n"


def encode_trajectory(result: RunResult) -> bytes:
    try:
        result.validate()
    except ValidationError as exc:
        raise EncodingError(exc.field, exc.message) from exc

    wm = result.wm_trajectory
    out = [
        _line(
            {
                "kind": "header",
                "format": FORMAT,
                "task_id": result.task_id,
                "agent_config": result.agent_config,
                "plan": result.plan.to_list(),
                "rounds": result.rounds,
                "tokens": result.tokens.to_dict(),
                "wm": None if wm is None else {"terminated_by": wm.terminated_by},
            }
        )
    ]
    for call, obs in result.trajectory.entries:
        out.append(_line({"kind": "entry", "call": call.to_dict(), "obs": obs.to_dict()}))
    for call, obs in result.trajectory.failed_entries:
        out.append(_line({"kind": "failed", "call": call.to_dict(), "obs": obs.to_dict()}))
    if wm is not None:
        for call, sim in wm.entries:
            out.append(_line({"kind": "wm", "call": call.to_dict(), "sim": sim.to_dict()}))
    out.append(_line({"kind": "answer", "text": result.answer}))
    return "".join(out).encode("utf-8")


def decode_trajectory(data: bytes | str) -> RunResult:
    text = data.decode("utf-8") if isinstance(data, (bytes, bytearray)) else data
    # only "\n" separates records; str.splitlines would also split on U+2028 etc.
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise TrajectoryParseError(0, "empty input")

    records = []
    for no, raw in enumerate(lines, start=1):
        try:
            obj = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise TrajectoryParseError(no, f"not JSON: {exc.msg}") from None
        if not isinstance(obj, dict) or "kind" not in obj:
            raise TrajectoryParseError(no, "record without 'kind'")
        records.append((no, obj))

    no, header = records[0]
    if header["kind"] != "header":
        raise TrajectoryParseError(no, "first line must be the header")
    if header.get("format") != FORMAT:
        raise TrajectoryParseError(no, f"unsupported format {header.get('format')!r}")
    last_no, last = records[-1]
    if last["kind"] != "answer" or len(records) < 2:
        raise TrajectoryParseError(last_no, "last line must be the answer")

    entries, failed, wm_entries = [], [], []
    for no, obj in records[1:-1]:
        kind = obj["kind"]
        try:
            if kind == "entry":
                entries.append((ToolCall.from_dict(obj["call"]), Observation.from_dict(obj["obs"])))
            elif kind == "failed":
                failed.append((ToolCall.from_dict(obj["call"]), Observation.from_dict(obj["obs"])))
            elif kind == "wm":
                wm_entries.append(
                    (ToolCall.from_dict(obj["call"]), SimulatedObservation.from_dict(obj["sim"]))
                )
            else:
                raise TrajectoryParseError(no, f"unexpected record kind {kind!r}")
        except (KeyError, TypeError) as exc:
            raise TrajectoryParseError(no, f"missing or malformed field {exc}") from None

    try:
        wm_header = header["wm"]
        if wm_header is None and wm_entries:
            raise TrajectoryParseError(1, "wm records present but header has no wm trajectory")
        wm = None if wm_header is None else WMTrajectory(tuple(wm_entries), wm_header["terminated_by"])
        result = RunResult(
            task_id=header["task_id"],
            agent_config=header["agent_config"],
            answer=last["text"],
            plan=Plan.from_list(header["plan"]),
            trajectory=ExecutionTrajectory(tuple(entries), tuple(failed)),
            wm_trajectory=wm,
            tokens=TokenUsage.from_dict(header["tokens"]),
            rounds=header["rounds"],
        )
    except (KeyError, TypeError) as exc:
        raise TrajectoryParseError(1, f"missing or malformed header field {exc}") from None
    return result.validate()
