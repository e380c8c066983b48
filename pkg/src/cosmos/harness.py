"""Benchmark driver: task suites, (agent x world model) grids, persistence, reports.

Output layout under ``output_dir``::

    runs/<config>/<task>/<rep>.traj        one encoded RunResult per run
    runs/<config>/<task>/<rep>.error.json  a run that raised
    reports/<cohort>.md, reports/<cohort>.csv
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterator, Mapping, Sequence

from cosmos.codec import decode_trajectory, encode_trajectory
from cosmos.errors import CosmosError, MetricError, RunError, SpecError
from cosmos.executor import (
    ExecOptions,
    RemoteSynthesizer,
    TemplateSynthesizer,
    run_react_baseline,
    run_wm_agent,
)
from cosmos.llm import ChatClient
from cosmos.metrics import (
    MetricReport,
    SubDimensionScores,
    build_cohort,
    config_scores,
    display,
    ingest_judge_scores,
    token_rollup,
    tool_call_success_rate,
)
from cosmos.planner import PlannerConfig, RetryingPolicy, ScriptedPolicy, ToolsetPolicy, remote_policy
from cosmos.select import MctsConfig, RemoteJudge, schema_conformance
from cosmos.simenv.env import SimEnvironment
from cosmos.simenv.spec import FailurePolicy, ToolSpec, bundled_spec_path, load_server_spec
from cosmos.simenv.wire import loopback_command, wire_client_connect
from cosmos.types import RunResult, Task, ToolCall
from cosmos.worldmodel import make_world_model

log = logging.getLogger(__name__)

BENCH_FORMAT = "cosmos-bench/1"
SUITE_FORMAT = "cosmos-suite/1"
COHORT_FORMAT = "cosmos-cohort/1"
AGENTS = ("react", "react-plan-exec", "spiral-exec")


def _bundled(kind: str, name: str) -> Path:
    return Path(str(resources.files("cosmos") / "data" / kind / f"{name}.json"))


def _resolve(ref: str | Path, kind: str, base: Path | None = None) -> Path:
    """A path as given, relative to ``base``, or a bundled data file by bare name."""
    p = Path(ref)
    if p.exists():
        return p
    if base is not None and (base / p).exists():
        return base / p
    if p.suffix == "" and len(p.parts) == 1 and _bundled(kind, str(p)).exists():
        return _bundled(kind, str(p))
    raise FileNotFoundError(f"no such {kind[:-1]} file: {ref}")


# ── task suites ──────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TaskSuite:
    name: str
    tasks: tuple[Task, ...] = ()
    servers: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        seen = set()
        for t in self.tasks:
            if t.id in seen:
                raise SpecError(f"duplicate task id {t.id!r} in suite {self.name!r}")
            seen.add(t.id)
            missing = [s for s in t.server_ids if s not in self.servers]
            if missing:
                raise SpecError(f"task {t.id!r}: no server mapping for {missing}")

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self) -> Iterator[Task]:
        return iter(self.tasks)

    def spec_refs(self, task: Task) -> list[str]:
        return [self.servers[s] for s in task.server_ids]

    def by_difficulty(self) -> dict[int, list[Task]]:
        out: dict[int, list[Task]] = {}
        for t in self.tasks:
            out.setdefault(t.difficulty, []).append(t)
        return dict(sorted(out.items()))


def _server_ref(server_id: str, mapping: Mapping[str, str], base: Path) -> str | None:
    if server_id in mapping:
        ref = mapping[server_id]
        return str(base / ref) if (base / ref).exists() else ref
    return server_id if bundled_spec_path(server_id).exists() else None


def _build_suite(name: str, task_docs: Sequence[Mapping[str, Any]], mapping: Mapping[str, str], base: Path) -> TaskSuite:
    tasks = [Task.from_dict(d) for d in task_docs]
    servers = {}
    for t in tasks:
        for sid in t.server_ids:
            ref = _server_ref(sid, mapping, base)
            if ref is not None:
                servers[sid] = ref
    return TaskSuite(name, tuple(tasks), servers)


def load_task_suite(path: str | Path) -> TaskSuite:
    """Load a suite file, a directory of task files, or a bundled suite by name.

    A directory may hold a ``servers.json`` mapping server ids to spec refs;
    every other ``*.json`` file is one task. Server ids without a mapping fall
    back to a bundled spec of the same name.
    """
    p = Path(path)
    if p.is_dir():
        mapping: dict[str, str] = {}
        docs = []
        for f in sorted(p.glob("*.json")):
            doc = json.loads(f.read_text(encoding="utf-8"))
            if f.name == "servers.json":
                mapping = doc.get("servers", doc)
            else:
                docs.append(doc)
        if not docs:
            log.warning("task suite directory %s holds no tasks", p)
        return _build_suite(p.name, docs, mapping, p)
    f = _resolve(path, "suites")
    doc = json.loads(f.read_text(encoding="utf-8"))
    if doc.get("format") != SUITE_FORMAT:
        raise SpecError(f"{f}: expected format {SUITE_FORMAT!r}, got {doc.get('format')!r}")
    return _build_suite(doc.get("name", f.stem), doc.get("tasks", []), doc.get("servers", {}), f.parent)


# ── configuration ────────────────────────────────────────────────────────


@dataclass(frozen=True)
class AgentConfig:
    name: str
    agent: str
    planner: Mapping[str, Any] = field(default_factory=lambda: {"kind": "examples"})
    world_model: Mapping[str, Any] | None = None
    selection: str = "passthrough"
    judge: Mapping[str, Any] | None = None
    mcts: Mapping[str, Any] = field(default_factory=dict)
    adjust_on_failure: bool = False
    parallelize: bool = False
    max_rounds: int = 15
    max_steps: int = 15
    synthesizer: Mapping[str, Any] | None = None

    def __post_init__(self):
        if not self.name or "/" in self.name:
            raise SpecError(f"invalid configuration name {self.name!r}")
        if self.agent not in AGENTS:
            raise SpecError(f"{self.name}: unknown agent {self.agent!r}; expected one of {AGENTS}")
        if self.agent == "react" and self.world_model is not None:
            raise SpecError(f"{self.name}: the react agent takes no world model")
        if self.agent != "react" and self.world_model is None:
            raise SpecError(f"{self.name}: {self.agent} requires a world model")
        if self.selection not in ("passthrough", "judge-policy"):
            raise SpecError(f"{self.name}: unknown selection {self.selection!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> AgentConfig:
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise SpecError(f"configuration {d.get('name')!r}: unknown keys {sorted(extra)}")
        return cls(**d)

    @property
    def world_model_label(self) -> str:
        if self.world_model is None:
            return "-"
        return self.world_model.get("model_name") or self.world_model.get("kind", "?")


@dataclass(frozen=True)
class BenchConfig:
    suite: str
    configurations: tuple[AgentConfig, ...]
    k: int = 1
    seed: int = 0
    output_dir: str = "cosmos-out"
    name: str = "cohort"
    environment: Mapping[str, Any] = field(default_factory=dict)
    judge_scores: str | None = None
    jobs: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise SpecError("k must be >= 1")
        if self.jobs < 1:
            raise SpecError("jobs must be >= 1")
        names = [c.name for c in self.configurations]
        if len(set(names)) != len(names):
            raise SpecError(f"duplicate configuration names in {names}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any], base: Path | None = None) -> BenchConfig:
        if d.get("format") != BENCH_FORMAT:
            raise SpecError(f"expected format {BENCH_FORMAT!r}, got {d.get('format')!r}")

        def rel(value):
            if value is None or base is None:
                return value
            return str(base / value) if (base / value).exists() else value

        return cls(
            suite=rel(d["suite"]),
            configurations=tuple(AgentConfig.from_dict(c) for c in d.get("configurations", [])),
            k=int(d.get("k", 1)),
            seed=int(d.get("seed", 0)),
            output_dir=str(base / d["output_dir"]) if base and "output_dir" in d else d.get("output_dir", "cosmos-out"),
            name=d.get("name", "cohort"),
            environment=dict(d.get("environment", {})),
            judge_scores=rel(d.get("judge_scores")),
            jobs=int(d.get("jobs", 1)),
        )


def load_bench_config(path: str | Path) -> BenchConfig:
    p = Path(path)
    return BenchConfig.from_dict(json.loads(p.read_text(encoding="utf-8")), p.parent)


def run_seed(seed: int, config: str, task_id: str, rep: int) -> int:
    """Stable per-run seed derived from the grid seed and the cell coordinates."""
    digest = hashlib.sha256(f"{seed}|{config}|{task_id}|{rep}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


# ── per-run construction ─────────────────────────────────────────────────


def example_calls(task: Task, tools: Sequence[tuple[str, ToolSpec]], per_server: int = 1) -> list[ToolCall]:
    """One call per server (in task order) built from each tool's schema ``examples``."""
    calls = []
    for sid in task.server_ids:
        own = [t for s, t in tools if s == sid][:per_server]
        for tool in own:
            examples = tool.param_schema.get("examples") or [{}]
            calls.append(ToolCall(f"{task.id}-{len(calls) + 1}", sid, tool.name, dict(examples[0])))
    return calls


def _scripted_calls(desc: Mapping[str, Any], task: Task) -> list:
    scripts = desc.get("scripts", {})
    script = scripts.get(task.id, scripts.get("*", []))
    items = []
    for item in script:
        if isinstance(item, list):
            items.append(tuple(ToolCall.from_dict(v) for v in item))
        else:
            items.append(ToolCall.from_dict(item))
    return items


def make_policy(desc: Mapping[str, Any], task: Task, tools: Sequence[tuple[str, ToolSpec]], seed: int):
    kind = desc.get("kind", "examples")
    if kind in ("scripted", "retrying"):
        items = _scripted_calls(desc, task)
        if kind == "retrying":
            return RetryingPolicy(tuple(items), desc.get("max_attempts"))
        return ScriptedPolicy(tuple(i[0] if isinstance(i, tuple) else i for i in items))
    if kind == "examples":
        calls = example_calls(task, tools, int(desc.get("per_server", 1)))
        if desc.get("retry"):
            return RetryingPolicy(tuple(calls), desc.get("max_attempts", 3))
        return ScriptedPolicy(tuple(calls))
    if kind == "toolset":
        return ToolsetPolicy(tuple(example_calls(task, tools, int(desc.get("per_server", 1)))))
    if kind == "remote":
        params = {k: v for k, v in desc.items() if k not in ("kind", "endpoint", "model", "template")}
        return remote_policy(desc["endpoint"], desc.get("model", ""), tools, desc.get("template", "plan_step"), seed=seed, **params)
    raise SpecError(f"unknown planner kind {kind!r}")


def make_environment(desc: Mapping[str, Any], refs: Sequence[str], seed: int):
    fp = dict(desc.get("failure_policy") or {})
    fp.setdefault("seed", seed)
    kind = desc.get("kind", "sim")
    if kind == "sim":
        return SimEnvironment(
            [load_server_spec(r) for r in refs], FailurePolicy.from_dict(fp), desc.get("timeout_ms")
        )
    if kind == "loopback":
        extra = []
        if fp.get("mode", "none") != "none":
            extra = ["--failure", json.dumps(fp)]
        return wire_client_connect(loopback_command(refs, extra), float(desc.get("timeout_s", 30.0)))
    raise SpecError(f"unknown environment kind {kind!r}")


def _world_model(desc: Mapping[str, Any], refs: Sequence[str]):
    desc = dict(desc)
    if desc.get("kind") in ("schema-oracle", "remote"):
        params = dict(desc.get("params") or {})
        if "server_spec" not in desc and "server_spec" not in params:
            params["server_spec"] = list(refs)
        desc["params"] = params
    return make_world_model(desc)


def _chat_client(desc: Mapping[str, Any]) -> ChatClient:
    return ChatClient(endpoint=desc["endpoint"], model=desc.get("model", ""), api_key=desc.get("api_key"))


def run_one(ac: AgentConfig, task: Task, refs: Sequence[str], seed: int, env_desc: Mapping[str, Any], rep: int = 0) -> RunResult:
    env = make_environment(env_desc, refs, seed)
    try:
        tools = env.list_tools()
        policy = make_policy(ac.planner, task, tools, seed)
        synth = RemoteSynthesizer(_chat_client(ac.synthesizer)) if ac.synthesizer else TemplateSynthesizer()
        meta = {"name": ac.name, "agent": ac.agent, "seed": seed, "rep": rep}
        if ac.agent == "react":
            return run_react_baseline(task, env, policy, ac.max_rounds, synth, agent_config=meta)
        wm = _world_model(ac.world_model, refs)
        meta["world_model"] = wm.to_dict()
        judge = RemoteJudge(_chat_client(ac.judge), task.instruction) if ac.judge else None
        mcts = MctsConfig.from_dict(dict(ac.mcts), seed=seed)
        return run_wm_agent(
            task, policy, wm, env,
            strategy="mcts" if ac.agent == "spiral-exec" else ac.selection,
            planner_cfg=PlannerConfig(max_steps=ac.max_steps),
            mcts_cfg=mcts,
            judge=judge,
            conformance=schema_conformance(tools),
            parallelize=ac.parallelize,
            opts=ExecOptions(adjust_on_failure=ac.adjust_on_failure),
            synth=synth,
            agent_config=meta,
        )  # fmt: skip
    finally:
        close = getattr(env, "close", None)
        if close is not None:
            close()


# ── cohort results ───────────────────────────────────────────────────────


@dataclass
class ConfigSummary:
    agent: str
    world_model: str
    success_rate: float
    avg_tool_calls: float
    sub: SubDimensionScores | None = None


@dataclass
class CohortResults:
    name: str
    summaries: dict[str, ConfigSummary] = field(default_factory=dict)
    results: dict[str, list[RunResult]] = field(default_factory=dict)
    errors: list[dict[str, Any]] = field(default_factory=list)
    config_errors: dict[str, str] = field(default_factory=dict)
    executed: int = 0
    k: int = 1
    output_dir: str | None = None

    @property
    def reports(self) -> dict[str, MetricReport]:
        rows = {n: (s.sub, s.success_rate, s.avg_tool_calls) for n, s in self.summaries.items()}
        return build_cohort(rows)

    @property
    def tokens(self) -> dict[str, dict[str, float]]:
        return token_rollup({n: r for n, r in self.results.items() if r})

    @property
    def completed(self) -> bool:
        return not self.config_errors


def summarize(results_by_task: Mapping[str, Sequence[RunResult]]) -> tuple[float, float]:
    """(success rate over all attempted calls, mean over tasks of the per-task mean call count)."""
    flat = [r for rs in results_by_task.values() for r in rs]
    per_task = [sum(r.attempted_calls for r in rs) / len(rs) for rs in results_by_task.values() if rs]
    if not per_task:
        raise MetricError("no completed runs")
    return tool_call_success_rate(flat), sum(per_task) / len(per_task)


def load_cohort_summary(path: str | Path) -> CohortResults:
    """A cohort given directly as per-config success rate, average calls and judge scores."""
    f = _resolve(path, "cohorts")
    doc = json.loads(f.read_text(encoding="utf-8"))
    if doc.get("format") != COHORT_FORMAT:
        raise SpecError(f"{f}: expected format {COHORT_FORMAT!r}, got {doc.get('format')!r}")
    cohort = CohortResults(doc.get("name", f.stem))
    for row in doc.get("rows", []):
        sub = SubDimensionScores.from_dict(row["sub"]) if row.get("sub") else None
        cohort.summaries[row["config"]] = ConfigSummary(
            row.get("agent", row["config"]), row.get("world_model") or "-",
            float(row["success_rate"]), float(row["avg_tool_calls"]), sub,
        )  # fmt: skip
    return cohort


def _traj_path(out: Path, config: str, task_id: str, rep: int) -> Path:
    return out / "runs" / config / task_id / f"{rep}.traj"


def _write_atomic(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def run_benchmark(
    cfg: BenchConfig, execute: bool = True, progress: Callable[[str], None] | None = None
) -> CohortResults:
    """Run k repetitions of every (configuration, task) cell, skipping cells already on disk.

    Task-level errors are recorded and the grid continues; a configuration
    whose components cannot be built is skipped as a whole. With
    ``execute=False`` only existing results are collected.
    """
    suite = load_task_suite(cfg.suite)
    out = Path(cfg.output_dir)
    judge = ingest_judge_scores(cfg.judge_scores) if cfg.judge_scores else {}
    cohort = CohortResults(cfg.name, k=cfg.k, output_dir=str(out))

    for ac in cfg.configurations:
        try:
            if ac.world_model is not None and suite.tasks:
                _world_model(ac.world_model, suite.spec_refs(suite.tasks[0]))
        except (CosmosError, KeyError, ValueError, OSError) as exc:
            cohort.config_errors[ac.name] = str(exc)
            log.error("configuration %s skipped: %s", ac.name, exc)
            continue

        by_task: dict[str, list[RunResult | None]] = {t.id: [None] * cfg.k for t in suite}
        pending = []
        for task in suite:
            for rep in range(cfg.k):
                path = _traj_path(out, ac.name, task.id, rep)
                if path.exists():
                    by_task[task.id][rep] = decode_trajectory(path.read_bytes())
                elif execute:
                    pending.append((task, rep, path))

        def work(cell):
            task, rep, path = cell
            seed = run_seed(cfg.seed, ac.name, task.id, rep)
            try:
                result = run_one(ac, task, suite.spec_refs(task), seed, cfg.environment, rep)
            except Exception as exc:  # a task failure is data, never fatal to the grid
                phase = exc.phase if isinstance(exc, RunError) else None
                err = {"config": ac.name, "task_id": task.id, "rep": rep, "phase": phase, "error": f"{type(exc).__name__}: {exc}"}
                _write_atomic(path.with_suffix(".error.json"), (json.dumps(err, sort_keys=True) + "\n").encode())
                return task, rep, None, err
            _write_atomic(path, encode_trajectory(result))
            stale = path.with_suffix(".error.json")
            if stale.exists():
                stale.unlink()
            return task, rep, result, None

        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            for task, rep, result, err in pool.map(work, pending):
                cohort.executed += 1
                if err:
                    cohort.errors.append(err)
                    log.warning("%s/%s/%d failed: %s", ac.name, task.id, rep, err["error"])
                else:
                    by_task[task.id][rep] = result
                if progress:
                    progress(f"{ac.name} {task.id} rep {rep}: {'error' if err else 'ok'}")

        done = {tid: [r for r in rs if r is not None] for tid, rs in by_task.items()}
        done = {tid: rs for tid, rs in done.items() if rs}
        cohort.results[ac.name] = [r for rs in done.values() for r in rs]
        try:
            success, avg = summarize(done)
        except MetricError as exc:
            log.warning("configuration %s has no usable results: %s", ac.name, exc)
            continue
        cohort.summaries[ac.name] = ConfigSummary(
            ac.agent, ac.world_model_label, success, avg, config_scores(judge, ac.name) if judge else None
        )
    return cohort


# ── reports ──────────────────────────────────────────────────────────────

COLUMNS = (
    ("Configuration", None),
    ("Agent", None),
    ("World Model", None),
    ("Task Fulfil.", "sub.task_fulfillment"),
    ("Grounding", "sub.grounding"),
    ("Tool Approp.", "sub.tool_appropriateness"),
    ("Param. Accuracy", "sub.param_accuracy"),
    ("Dep. Aware.", "sub.dep_awareness"),
    ("Parallel. Effic.", "sub.parallel_efficiency"),
    ("Tool Call Success", "tool_call_success"),
    ("Avg Tool Calls (norm.)", "normalized_calls"),
    ("Task Compl.", "task_completion"),
    ("Tool Sel.", "tool_selection"),
    ("Planning Effec.", "planning_effectiveness"),
    ("Exec. Quality", "execution_quality"),
    ("Overall", "overall_new"),
    ("Calls/Task", "avg_tool_calls"),
)
LOWER_IS_BETTER = {"Calls/Task"}


def _value(report: MetricReport, attr: str) -> float | None:
    if attr.startswith("sub."):
        return getattr(report.sub, attr[4:]) if report.sub else None
    return getattr(report, attr)


def report_rows(cohort: CohortResults) -> tuple[list[str], list[list[str]], list[set[str]]]:
    """Header, formatted rows (sorted by overall, best first) and flagged columns per row."""
    header = [c for c, _ in COLUMNS]
    reports = cohort.reports

    def key(item):
        name, r = item
        primary = r.overall_new if r.overall_new is not None else r.execution_quality
        return (-primary, name)

    ordered = sorted(reports.items(), key=key)
    best: dict[str, float] = {}
    for col, attr in COLUMNS:
        if attr is None:
            continue
        vals = [display(v, 2 if col == "Calls/Task" else 1) for _, r in ordered if (v := _value(r, attr)) is not None]
        if vals:
            best[col] = min(vals) if col in LOWER_IS_BETTER else max(vals)
    rows, flags = [], []
    for name, r in ordered:
        s = cohort.summaries[name]
        row, flagged = [name, s.agent, s.world_model], set()
        for col, attr in COLUMNS[3:]:
            v = _value(r, attr)
            if v is None:
                row.append("-")
                continue
            places = 2 if col == "Calls/Task" else 1
            shown = display(v, places)
            row.append(f"{shown:.{places}f}")
            if len(ordered) > 1 and shown == best.get(col):
                flagged.add(col)
        rows.append(row)
        flags.append(flagged)
    return header, rows, flags


def render_markdown(cohort: CohortResults) -> str:
    header, rows, flags = report_rows(cohort)
    lines = [f"## {cohort.name}", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    for row, flagged in zip(rows, flags):
        cells = [f"**{v}**" if h in flagged else v for h, v in zip(header, row)]
        lines.append("| " + " | ".join(cells) + " |")
    lines += [
        "",
        f"Bold: best per column. Normalization spans the {len(rows)} configuration(s) of this cohort; "
        f"per-task metrics are averaged over k={cohort.k} repetition(s).",
    ]
    if cohort.errors:
        lines.append(f"{len(cohort.errors)} run(s) raised errors; see runs/*/*/*.error.json.")
    return "\n".join(lines) + "\n"


def render_csv(cohort: CohortResults) -> str:
    header, rows, flags = report_rows(cohort)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header + ["Best"])
    for row, flagged in zip(rows, flags):
        writer.writerow(row + [";".join(h for h in header if h in flagged)])
    return buf.getvalue()


def emit_report(cohort: CohortResults, format: str = "markdown-table", out_dir: str | Path | None = None) -> list[Path]:
    """Write ``reports/<cohort>.md`` and/or ``.csv``; returns the written paths."""
    formats = {"markdown-table": ["md"], "markdown": ["md"], "csv": ["csv"], "both": ["md", "csv"]}
    if format not in formats:
        raise ValueError(f"unknown report format {format!r}")
    base = Path(out_dir) if out_dir is not None else Path(cohort.output_dir or ".") / "reports"
    base.mkdir(parents=True, exist_ok=True)
    written = []
    for ext in formats[format]:
        path = base / f"{cohort.name}.{ext}"
        path.write_text(render_markdown(cohort) if ext == "md" else render_csv(cohort), encoding="utf-8")
        written.append(path)
    return written
