from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import pytest

from cosmos.errors import SpecError, ValidationError
from cosmos.harness import (
    COLUMNS,
    AgentConfig,
    BenchConfig,
    CohortResults,
    emit_report,
    example_calls,
    load_bench_config,
    load_cohort_summary,
    load_task_suite,
    render_csv,
    render_markdown,
    report_rows,
    run_benchmark,
    run_seed,
)
from cosmos.simenv import SimEnvironment
from cosmos.types import Task


def call(cid, server, tool, **args):
    return {"call_id": cid, "server": server, "tool_name": tool, "arguments": args}


NETWORKS = call("n", "netops", "getNetworks", region="us")
DEVICES = call("d", "monitor", "getDevices", network_id="$ref:n#networks.0.id")
REGIONS = call("r", "netops", "getRegions")


def bench(tmp_path, configurations, **extra):
    doc = {"format": "cosmos-bench/1", "suite": "netops", "name": "grid", "output_dir": str(tmp_path / "out"),
           "configurations": configurations, **extra}  # fmt: skip
    return BenchConfig.from_dict(doc)


# ── suites ───────────────────────────────────────────────────────────────


def test_curated_suite_shape():
    suite = load_task_suite("curated24")
    assert len(suite) == 24
    by_diff = suite.by_difficulty()
    assert {d: len(ts) for d, ts in by_diff.items()} == {2: 18, 3: 6}
    for task in suite:
        assert len(suite.spec_refs(task)) == task.difficulty


def test_suite_directory(tmp_path, caplog):
    assert len(load_task_suite(tmp_path)) == 0
    assert "holds no tasks" in caplog.text
    (tmp_path / "a.json").write_text(json.dumps({"id": "a", "instruction": "x", "server_ids": ["math"]}))
    (tmp_path / "b.json").write_text(json.dumps({"id": "b", "instruction": "y", "server_ids": ["calc"]}))
    (tmp_path / "servers.json").write_text(json.dumps({"servers": {"calc": "math"}}))
    suite = load_task_suite(tmp_path)
    assert [t.id for t in suite] == ["a", "b"]
    assert suite.spec_refs(suite.tasks[1]) == ["math"]


def test_suite_errors(tmp_path):
    for name in ("a.json", "b.json"):
        (tmp_path / name).write_text(json.dumps({"id": "dup", "instruction": "x", "server_ids": ["math"]}))
    with pytest.raises((SpecError, ValidationError), match="dup"):
        load_task_suite(tmp_path)
    bad = tmp_path / "other"
    bad.mkdir()
    (bad / "t.json").write_text(json.dumps({"id": "t", "instruction": "x", "server_ids": ["no-such-server"]}))
    with pytest.raises(SpecError, match="no-such-server"):
        load_task_suite(bad)


# ── configuration ────────────────────────────────────────────────────────


def test_agent_config_validation():
    with pytest.raises(SpecError, match="no world model"):
        AgentConfig("r", "react", world_model={"kind": "echo"})
    with pytest.raises(SpecError, match="requires a world model"):
        AgentConfig("s", "spiral-exec")
    with pytest.raises(SpecError, match="unknown agent"):
        AgentConfig("x", "autogpt")
    with pytest.raises(SpecError, match="unknown keys"):
        AgentConfig.from_dict({"name": "r", "agent": "react", "temperature": 0})
    assert AgentConfig("p", "react-plan-exec", world_model={"kind": "echo", "model_name": "m"}).world_model_label == "m"


def test_bench_config_validation(tmp_path):
    with pytest.raises(SpecError, match="duplicate"):
        bench(tmp_path, [{"name": "a", "agent": "react"}, {"name": "a", "agent": "react"}])
    with pytest.raises(SpecError, match="k must"):
        bench(tmp_path, [], k=0)
    with pytest.raises(SpecError, match="format"):
        BenchConfig.from_dict({"suite": "netops"})


def test_bundled_demo_config_resolves_relative_paths():
    cfg = load_bench_config(Path(__file__).parent.parent / "configs" / "demo.json")
    assert cfg.k == 2 and len(cfg.configurations) == 4
    assert Path(cfg.output_dir).is_absolute()


def test_run_seed_is_stable_and_cell_specific():
    assert run_seed(7, "a", "t", 0) == run_seed(7, "a", "t", 0)
    assert len({run_seed(7, c, "t", r) for c in "ab" for r in range(3)}) == 6


def test_example_calls_follow_task_servers():
    task = Task("x", "q", ("netops", "monitor"))
    calls = example_calls(task, SimEnvironment.from_refs(["netops", "monitor"]).list_tools())
    assert [(c.call_id, c.server) for c in calls] == [("x-1", "netops"), ("x-2", "monitor")]


# ── grid runs ────────────────────────────────────────────────────────────

GRID = [
    {"name": "react", "agent": "react", "planner": {"kind": "examples"}},
    {"name": "rpe-echo", "agent": "react-plan-exec", "world_model": {"kind": "echo"}, "planner": {"kind": "examples"}},
]


def test_grid_writes_one_file_per_cell_deterministically(tmp_path):
    cfg = bench(tmp_path / "a", GRID, k=2, seed=3, environment={"failure_policy": {"mode": "probabilistic", "parameter": 0.3}})
    cohort = run_benchmark(cfg)
    files = sorted((tmp_path / "a" / "out" / "runs").rglob("*.traj"))
    assert len(files) == 2 * 2 * 2 and cohort.executed == 8 and cohort.completed
    again = run_benchmark(bench(tmp_path / "b", GRID, k=2, seed=3,
                                environment={"failure_policy": {"mode": "probabilistic", "parameter": 0.3}}))  # fmt: skip
    twins = sorted((tmp_path / "b" / "out" / "runs").rglob("*.traj"))
    assert [f.read_bytes() for f in files] == [f.read_bytes() for f in twins]
    assert again.summaries == cohort.summaries


def test_grid_resumes_without_rerunning(tmp_path):
    cfg = bench(tmp_path, GRID, k=1)
    first = run_benchmark(cfg)
    second = run_benchmark(cfg)
    assert first.executed == 4 and second.executed == 0
    assert second.summaries == first.summaries
    collected = run_benchmark(cfg, execute=False)
    assert collected.executed == 0 and set(collected.summaries) == {"react", "rpe-echo"}


def test_grid_parallel_jobs_match_serial(tmp_path):
    serial = run_benchmark(bench(tmp_path / "s", GRID, k=2))
    parallel = run_benchmark(bench(tmp_path / "p", GRID, k=2, jobs=4))
    assert serial.summaries == parallel.summaries


def test_task_errors_are_recorded_and_config_errors_skip(tmp_path):
    configs = [
        {"name": "react", "agent": "react", "planner": {"kind": "examples"}},
        {"name": "broken-wm", "agent": "react-plan-exec", "world_model": {"kind": "crystal-ball"}},
        {"name": "bad-plan", "agent": "react-plan-exec", "world_model": {"kind": "schema-oracle"},
         "planner": {"kind": "scripted", "scripts": {"*": [call("x", "netops", "teleport")]}}},
    ]  # fmt: skip
    cohort = run_benchmark(bench(tmp_path, configs))
    assert "broken-wm" in cohort.config_errors and not cohort.completed
    assert {e["phase"] for e in cohort.errors} == {"plan"}
    assert len(list((tmp_path / "out" / "runs" / "bad-plan").rglob("*.error.json"))) == 2
    assert set(cohort.summaries) == {"react"}


def test_scripted_grid_call_counts_drive_normalization(tmp_path):
    configs = [
        {"name": "four", "agent": "react", "planner": {"kind": "scripted", "scripts": {"*": [NETWORKS, DEVICES, REGIONS, call("r2", "netops", "getRegions")]}}},
        {"name": "two", "agent": "react-plan-exec", "world_model": {"kind": "echo"},
         "planner": {"kind": "scripted", "scripts": {"*": [NETWORKS, DEVICES]}}},
        {"name": "one", "agent": "spiral-exec", "world_model": {"kind": "schema-oracle"},
         "planner": {"kind": "scripted", "scripts": {"*": [REGIONS]}}, "mcts": {"iterations": 16}},
    ]  # fmt: skip
    cohort = run_benchmark(bench(tmp_path, configs))
    avgs = {n: s.avg_tool_calls for n, s in cohort.summaries.items()}
    assert avgs == {"four": 4.0, "two": 2.0, "one": 1.0}
    reports = cohort.reports
    assert reports["four"].normalized_calls == 0.0
    assert reports["two"].normalized_calls == pytest.approx(200 / 3)
    assert reports["one"].normalized_calls == 100.0
    assert all(s.success_rate == 100.0 for s in cohort.summaries.values())


# ── reports ──────────────────────────────────────────────────────────────


def test_report_from_bundled_cohort():
    cohort = load_cohort_summary("gpt_oss_planner")
    header, rows, flags = report_rows(cohort)
    assert header == [c for c, _ in COLUMNS]
    assert [r[0] for r in rows][:2] == ["spiral-gpt-oss", "spiral-claude"]
    overall = header.index("Overall")
    assert [r[overall] for r in rows] == ["56.5", "54.6", "54.1", "50.5", "50.1", "47.6", "36.8"]
    assert "Overall" in flags[0]
    md = render_markdown(cohort)
    top = next(line for line in md.splitlines() if line.startswith("| spiral-gpt-oss"))
    assert "| **56.5** |" in top


def test_csv_and_markdown_agree(tmp_path):
    cohort = load_cohort_summary("claude_planner")
    md_path, csv_path = emit_report(cohort, "both", tmp_path)
    assert md_path.name == "claude_planner.md" and csv_path.suffix == ".csv"
    rows = list(csv.reader(io.StringIO(csv_path.read_text())))
    assert rows[0][-1] == "Best" and len(rows) == 8
    md_rows = [line for line in md_path.read_text().splitlines() if line.startswith("| ") and "---" not in line][1:]
    for csv_row, md_row in zip(rows[1:], md_rows):
        md_cells = [c.strip().strip("*") for c in md_row.strip("|").split("|")]
        assert md_cells == csv_row[:-1]
    with pytest.raises(ValueError):
        emit_report(cohort, "pdf", tmp_path)


def test_empty_cohort_renders_header_only():
    cohort = CohortResults("empty")
    header, rows, _ = report_rows(cohort)
    assert rows == []
    md = render_markdown(cohort)
    assert md.count("\n| ") == 1
    assert render_csv(cohort).count("\n") == 1


def test_cohort_without_judge_scores_shows_dashes(tmp_path):
    cohort = run_benchmark(bench(tmp_path, GRID))
    _, rows, _ = report_rows(cohort)
    assert all(r[COLUMNS.index(("Overall", "overall_new"))] == "-" for r in rows)
    judged = run_benchmark(bench(tmp_path / "j", GRID, judge_scores=str(_judge_file(tmp_path))))
    _, rows, _ = report_rows(judged)
    assert all(r[COLUMNS.index(("Overall", "overall_new"))] != "-" for r in rows)


def _judge_file(tmp_path):
    dims = dict.fromkeys(
        ("task_fulfillment", "grounding", "tool_appropriateness", "param_accuracy", "dep_awareness", "parallel_efficiency"),
        50,
    )
    path = tmp_path / "judge.json"
    path.write_text(json.dumps({"format": "cosmos-judge/1", "scores": [
        {"config": "react", **dims}, {"config": "rpe-echo", "task_id": "netops_monitor_000", **dims},
    ]}))  # fmt: skip
    return path
