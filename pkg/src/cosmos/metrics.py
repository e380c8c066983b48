"""Scoring: tool-call success, normalized call counts, Execution Quality, aggregates.

All arithmetic is full precision; :func:`display` rounds half-up to one
decimal for tables.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from cosmos.errors import MetricError
from cosmos.types import RunResult

JUDGE_FORMAT = "cosmos-judge/1"
COHORT_WIDE = "*"


def _check_pct(name: str, value: float) -> float:
    value = float(value)
    if math.isnan(value) or not 0.0 <= value <= 100.0:
        raise MetricError(f"{name} must be a percentage in [0, 100], got {value}")
    return value


def display(value: float, places: int = 1) -> float:
    """Round half-up (not banker's rounding) for presentation."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(value))).quantize(q, rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class SubDimensionScores:
    task_fulfillment: float
    grounding: float
    tool_appropriateness: float
    param_accuracy: float
    dep_awareness: float
    parallel_efficiency: float

    def __post_init__(self):
        for f in fields(self):
            _check_pct(f.name, getattr(self, f.name))

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> SubDimensionScores:
        missing = [f.name for f in fields(cls) if f.name not in d]
        if missing:
            raise MetricError(f"missing judge dimension(s): {', '.join(missing)}")
        return cls(**{f.name: float(d[f.name]) for f in fields(cls)})

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def mean(cls, items: Sequence[SubDimensionScores]) -> SubDimensionScores:
        if not items:
            raise MetricError("cannot average zero score rows")
        return cls(**{f.name: sum(getattr(s, f.name) for s in items) / len(items) for f in fields(cls)})


DIMENSIONS = tuple(f.name for f in fields(SubDimensionScores))


@dataclass(frozen=True)
class CohortStats:
    min_avg_calls: float
    max_avg_calls: float

    def __post_init__(self):
        if self.min_avg_calls < 0 or self.min_avg_calls > self.max_avg_calls:
            raise MetricError(f"invalid cohort range [{self.min_avg_calls}, {self.max_avg_calls}]")

    @classmethod
    def of(cls, avgs: Iterable[float]) -> CohortStats:
        avgs = list(avgs)
        if not avgs:
            raise MetricError("empty cohort")
        return cls(min(avgs), max(avgs))


# ── execution metrics ────────────────────────────────────────────────────


def tool_call_success_rate(results: Sequence[RunResult]) -> float:
    attempted = sum(r.trajectory.attempted for r in results)
    if attempted == 0:
        raise MetricError("tool call success rate is undefined with zero attempted calls")
    succeeded = sum(r.trajectory.succeeded for r in results)
    return 100.0 * succeeded / attempted


def avg_tool_calls(results: Sequence[RunResult]) -> float:
    if not results:
        raise MetricError("average tool calls is undefined over zero results")
    return sum(r.trajectory.attempted for r in results) / len(results)


def normalize_avg_calls(agent_avg: float, cohort: CohortStats, tol: float = 1e-9) -> float:
    lo, hi = cohort.min_avg_calls, cohort.max_avg_calls
    if not lo - tol <= agent_avg <= hi + tol:
        raise MetricError(f"agent average {agent_avg} lies outside the cohort range [{lo}, {hi}]")
    if hi == lo:
        return 100.0
    # divide first so the cohort extremes land exactly on 0 and 100
    return min(100.0, max(0.0, 100.0 * ((hi - agent_avg) / (hi - lo))))


def execution_quality(success_rate: float, normalized_calls: float) -> float:
    return (_check_pct("success_rate", success_rate) + _check_pct("normalized_calls", normalized_calls)) / 2


# ── judge aggregates ─────────────────────────────────────────────────────


def aggregate_groups(sub: SubDimensionScores) -> tuple[float, float, float]:
    """(task completion, tool selection, planning effectiveness) as pairwise means."""
    return (
        (sub.task_fulfillment + sub.grounding) / 2,
        (sub.tool_appropriateness + sub.param_accuracy) / 2,
        (sub.dep_awareness + sub.parallel_efficiency) / 2,
    )


def overall_original(tc: float, ts: float, pe: float) -> float:
    return sum(_check_pct(n, v) for n, v in (("tc", tc), ("ts", ts), ("pe", pe))) / 3


def overall_new(tc: float, ts: float, pe: float, eq: float) -> float:
    return sum(_check_pct(n, v) for n, v in (("tc", tc), ("ts", ts), ("pe", pe), ("eq", eq))) / 4


@dataclass(frozen=True)
class MetricReport:
    sub: SubDimensionScores | None
    task_completion: float | None
    tool_selection: float | None
    planning_effectiveness: float | None
    tool_call_success: float
    avg_tool_calls: float
    normalized_calls: float
    execution_quality: float
    overall_orig: float | None
    overall_new: float | None

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["sub"] = self.sub.to_dict() if self.sub else None
        return d


def build_report(
    sub: SubDimensionScores | None, success_rate: float, avg_calls: float, cohort: CohortStats
) -> MetricReport:
    """Every derived column for one configuration; judge columns are None without scores."""
    norm = normalize_avg_calls(avg_calls, cohort)
    eq = execution_quality(success_rate, norm)
    if sub is None:
        return MetricReport(None, None, None, None, success_rate, avg_calls, norm, eq, None, None)
    tc, ts, pe = aggregate_groups(sub)
    return MetricReport(
        sub, tc, ts, pe, success_rate, avg_calls, norm, eq, overall_original(tc, ts, pe), overall_new(tc, ts, pe, eq)
    )


def build_cohort(
    rows: Mapping[str, tuple[SubDimensionScores | None, float, float]],
) -> dict[str, MetricReport]:
    """Reports for a cohort given ``config -> (sub, success_rate, avg_calls)``.

    Normalization uses exactly the configurations passed in.
    """
    if not rows:
        return {}
    cohort = CohortStats.of(avg for _, _, avg in rows.values())
    return {name: build_report(sub, sr, avg, cohort) for name, (sub, sr, avg) in rows.items()}


# ── judge score files ────────────────────────────────────────────────────


def parse_judge_scores(doc: Mapping[str, Any]) -> dict[tuple[str, str], SubDimensionScores]:
    if doc.get("format") != JUDGE_FORMAT:
        raise MetricError(f"expected format {JUDGE_FORMAT!r}, got {doc.get('format')!r}")
    table: dict[tuple[str, str], SubDimensionScores] = {}
    for i, row in enumerate(doc.get("scores", [])):
        if "config" not in row:
            raise MetricError(f"score row {i} has no 'config'")
        key = (str(row["config"]), str(row.get("task_id", COHORT_WIDE)))
        if key in table:
            raise MetricError(f"duplicate score row for {key}")
        try:
            table[key] = SubDimensionScores.from_dict(row)
        except MetricError as exc:
            raise MetricError(f"score row {i} ({key[0]}/{key[1]}): {exc}") from None
    return table


def ingest_judge_scores(path: str | Path) -> dict[tuple[str, str], SubDimensionScores]:
    """Load a judge score file: ``(config, task_id) -> scores``; task_id ``*`` is cohort-wide."""
    with open(path, encoding="utf-8") as fh:
        return parse_judge_scores(json.load(fh))


def config_scores(table: Mapping[tuple[str, str], SubDimensionScores], config: str) -> SubDimensionScores | None:
    """Cohort-wide row when present, else the mean of the config's per-task rows."""
    if (config, COHORT_WIDE) in table:
        return table[(config, COHORT_WIDE)]
    rows = [s for (c, _), s in table.items() if c == config]
    return SubDimensionScores.mean(rows) if rows else None


# ── tokens ───────────────────────────────────────────────────────────────


def token_rollup(groups: Mapping[str, Sequence[RunResult]]) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for config, results in groups.items():
        if not results:
            raise MetricError(f"no results for config {config!r}")
        n = len(results)
        tp = sum(r.tokens.prompt for r in results)
        to = sum(r.tokens.output for r in results)
        out[config] = {
            "avg_prompt": tp / n,
            "avg_output": to / n,
            "avg_total": (tp + to) / n,
            "total_prompt": tp,
            "total_output": to,
            "total_total": tp + to,
        }
    return out
