"""Command line: ``cosmos run | report | serve-sim | validate``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from cosmos.errors import CosmosError
from cosmos.harness import (
    BENCH_FORMAT,
    COHORT_FORMAT,
    SUITE_FORMAT,
    BenchConfig,
    emit_report,
    load_cohort_summary,
    load_task_suite,
    render_markdown,
    run_benchmark,
)
from cosmos.metrics import JUDGE_FORMAT, parse_judge_scores
from cosmos.simenv.env import SimEnvironment
from cosmos.simenv.spec import FORMAT as SPEC_FORMAT
from cosmos.simenv.spec import FailurePolicy, load_server_spec, parse_server_spec
from cosmos.simenv.wire import make_http_server, serve_stdio

log = logging.getLogger("cosmos")

FORMATS = ("markdown-table", "markdown", "csv", "both")


def _bench_config(args) -> BenchConfig:
    from cosmos.harness import load_bench_config

    cfg = load_bench_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    if getattr(args, "jobs", None) is not None:
        overrides["jobs"] = args.jobs
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


def cmd_run(args) -> int:
    cfg = _bench_config(args)
    progress = (lambda msg: print(msg, file=sys.stderr)) if args.verbose else None
    cohort = run_benchmark(cfg, progress=progress)
    for path in emit_report(cohort, args.format):
        print(f"wrote {path}", file=sys.stderr)
    print(render_markdown(cohort), end="")
    print(f"executed {cohort.executed} run(s); {len(cohort.errors)} error(s)", file=sys.stderr)
    for name, err in cohort.config_errors.items():
        print(f"configuration {name} skipped: {err}", file=sys.stderr)
    return 0 if cohort.completed else 1


def cmd_report(args) -> int:
    if args.cohort:
        cohort = load_cohort_summary(args.cohort)
        out = Path(args.out) if args.out else None
    else:
        cohort = run_benchmark(_bench_config(args), execute=False)
        out = Path(args.out) / "reports" if args.out else None
    if out is not None or not args.cohort:
        for path in emit_report(cohort, args.format, out):
            print(f"wrote {path}", file=sys.stderr)
    print(render_markdown(cohort), end="")
    return 0


def cmd_serve_sim(args) -> int:
    failure = FailurePolicy.from_dict(json.loads(args.failure)) if args.failure else None
    env = SimEnvironment([load_server_spec(s) for s in args.spec], failure)
    if args.http is None:
        serve_stdio(env)
        return 0
    server = make_http_server(env, port=args.http)
    host, port = server.server_address[:2]
    print(f"serving {len(env.list_tools())} tool(s) on http://{host}:{port}/", file=sys.stderr, flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


def _validate_file(path: str) -> str:
    p = Path(path)
    if p.is_dir():
        suite = load_task_suite(p)
        return f"task directory, {len(suite)} task(s)"
    doc = json.loads(p.read_text(encoding="utf-8"))
    fmt = doc.get("format")
    if fmt == SPEC_FORMAT:
        spec = parse_server_spec(doc, str(p))
        return f"server spec {spec.server_id!r}, {len(spec.tools)} tool(s)"
    if fmt == SUITE_FORMAT:
        return f"task suite, {len(load_task_suite(p))} task(s)"
    if fmt == BENCH_FORMAT:
        cfg = BenchConfig.from_dict(doc, p.parent)
        load_task_suite(cfg.suite)
        return f"bench config, {len(cfg.configurations)} configuration(s)"
    if fmt == JUDGE_FORMAT:
        return f"judge scores, {len(parse_judge_scores(doc))} row(s)"
    if fmt == COHORT_FORMAT:
        return f"cohort summary, {len(load_cohort_summary(p).summaries)} configuration(s)"
    raise CosmosError(f"unrecognized format {fmt!r}")


def cmd_validate(args) -> int:
    failed = 0
    for path in args.paths:
        try:
            what = _validate_file(path)
        except (CosmosError, OSError, ValueError, KeyError, TypeError) as exc:
            failed += 1
            print(f"FAIL {path}: {exc}")
        else:
            print(f"ok   {path}: {what}")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cosmos", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a benchmark grid and write reports")
    p.add_argument("--config", required=True, help=f"{BENCH_FORMAT} file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--format", choices=FORMATS, default="both")
    p.add_argument("--jobs", type=int, help="tasks run concurrently")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a report from finished runs or a cohort summary")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--config", help=f"{BENCH_FORMAT} file whose runs exist on disk")
    src.add_argument("--cohort", help=f"{COHORT_FORMAT} file or bundled cohort name")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--format", choices=FORMATS, default="both")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("serve-sim", help="serve simulated tool servers over JSON-RPC")
    p.add_argument("--spec", action="append", required=True, help="spec file or bundled name (repeatable)")
    p.add_argument("--http", type=int, metavar="PORT", help="serve HTTP on PORT instead of stdio (0 = any)")
    p.add_argument("--failure", help='failure policy as JSON, e.g. {"mode": "every-nth", "parameter": 2}')
    p.set_defaults(func=cmd_serve_sim)

    p = sub.add_parser("validate", help="lint spec, suite, config, judge and cohort files")
    p.add_argument("paths", nargs="+")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (CosmosError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
