#!/usr/bin/env python3
"""
piperate command line.

Usage:
    python piperate.py run --scenario s1.json --out runs/shaped
    python piperate.py run --scenario s1.json --out runs/baseline
        --set shaping_enabled=false
    python piperate.py compare --baseline runs/baseline --shaped runs/shaped
        --out report.json
    python piperate.py validate --scenario s1.json
    python piperate.py serve --port 9876
    python piperate.py submit --scenario s1.json
"""

from __future__ import annotations

import argparse
import asyncio
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import httpx
from dotenv import load_dotenv

from ..client import PiperateClient, print_run_result
from ..config import Settings, configure_logging
from ..harness import (
    ExitStatus,
    compare,
    exit_status_for,
    load_scenario,
    parse_overrides,
    run_scenario,
    write_report,
)

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="piperate", description="Data-rate control for storage data pipes"
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Run a scenario and write its artifacts")
    run.add_argument("--scenario", required=True, help="Scenario JSON file")
    run.add_argument("--out", required=True, help="Output directory")
    run.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a parameter or shaping_enabled (repeatable)",
    )

    cmp = sub.add_parser("compare", help="Compare a baseline run with a shaped run")
    cmp.add_argument("--baseline", required=True, help="Baseline run directory")
    cmp.add_argument("--shaped", required=True, help="Shaped run directory")
    cmp.add_argument("--out", required=True, help="Report JSON file")

    val = sub.add_parser("validate", help="Validate a scenario file")
    val.add_argument("--scenario", required=True, help="Scenario JSON file")

    serve = sub.add_parser("serve", help="Start the HTTP experiment service")
    serve.add_argument(
        "-p", "--port", type=int, help="Port (default: PIPERATE_PORT or 9876)"
    )
    serve.add_argument("--host", help="Host (default: PIPERATE_HOST or 127.0.0.1)")
    serve.add_argument(
        "--runs-dir", help="Run output directory (default: PIPERATE_RUNS_DIR)"
    )

    submit = sub.add_parser("submit", help="Submit a scenario to a running service")
    submit.add_argument("--scenario", required=True, help="Scenario JSON file")
    submit.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE"
    )
    submit.add_argument("--run-id", help="Run id (default: generated by the service)")
    submit.add_argument("-p", "--port", type=int, help="Service port")
    submit.add_argument("--host", help="Service host")
    submit.add_argument(
        "--timeout", type=float, default=300.0, help="Request timeout in seconds"
    )
    submit.add_argument(
        "--json", action="store_true", help="Print the raw JSON response"
    )
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    overrides = parse_overrides(args.overrides)
    return run_scenario(Path(args.scenario), Path(args.out), overrides)


def _cmd_compare(args: argparse.Namespace) -> int:
    report = compare(Path(args.baseline), Path(args.shaped))
    write_report(report, Path(args.out))
    ratio = report.seniority_ratio
    shown = ratio if ratio is not None else "n/a"
    print(f"[piperate] seniority ratio: {shown}", file=sys.stderr)
    for p in report.pipes:
        flag = {True: "PASS", False: "FAIL", None: "-"}[p.passed]
        print(
            f"[piperate] {p.container_id}/{p.block_id}: "
            f"shaped mean {p.shaped_mean:.0f} B/s "
            f"(class {p.class_rate:.0f}) {flag}",
            file=sys.stderr,
        )
    return ExitStatus.OK if report.passed else ExitStatus.FAILURE


def _cmd_validate(args: argparse.Namespace) -> int:
    scenario = load_scenario(Path(args.scenario))
    print(
        f"[piperate] {args.scenario}: valid ({len(scenario.machines)} machines, "
        f"{len(scenario.container_requests)} container requests)",
        file=sys.stderr,
    )
    return ExitStatus.OK


def _cmd_serve(args: argparse.Namespace, settings: Settings) -> int:
    from ..daemon import serve

    if args.port is not None:
        settings.port = args.port
    if args.host:
        settings.host = args.host
    if args.runs_dir:
        settings.runs_dir = Path(args.runs_dir)
    serve(settings)
    return ExitStatus.OK


def _cmd_submit(args: argparse.Namespace, settings: Settings) -> int:
    overrides = parse_overrides(args.overrides)
    scenario = json.loads(Path(args.scenario).read_text(encoding="utf-8"))
    host = args.host or settings.host
    port = args.port or settings.port
    client = PiperateClient(base_url=f"http://{host}:{port}", timeout=args.timeout)

    async def submit():
        await client.health_check()
        return await client.run(scenario, overrides, args.run_id)

    try:
        result = asyncio.run(submit())
    except httpx.ConnectError:
        print(f"❌ Cannot connect to daemon at http://{host}:{port}", file=sys.stderr)
        print("Make sure the daemon is running with: piperate serve", file=sys.stderr)
        return ExitStatus.IO_ERROR
    except httpx.TimeoutException:
        print(f"❌ Request timed out after {args.timeout} seconds", file=sys.stderr)
        return ExitStatus.IO_ERROR
    except httpx.HTTPStatusError as e:
        status, text = e.response.status_code, e.response.text
        print(f"❌ HTTP error: {status}: {text}", file=sys.stderr)
        return ExitStatus.INVALID if status == 400 else ExitStatus.FAILURE

    if args.json:
        print(json.dumps(result, indent=2))
    else:
        print_run_result(result)
    return ExitStatus.OK


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = _build_parser().parse_args(argv)
    try:
        settings = Settings.from_env()
    except ValueError as e:
        print(f"[piperate] {e}", file=sys.stderr)
        return ExitStatus.INVALID
    configure_logging(settings.log_level, args.verbose)

    try:
        if args.command == "run":
            return int(_cmd_run(args))
        if args.command == "compare":
            return int(_cmd_compare(args))
        if args.command == "validate":
            return int(_cmd_validate(args))
        if args.command == "serve":
            return int(_cmd_serve(args, settings))
        return int(_cmd_submit(args, settings))
    except Exception as e:
        print(f"[piperate] {args.command} failed: {e}", file=sys.stderr)
        log.debug("Unhandled error", exc_info=True)
        return int(exit_status_for(e))


if __name__ == "__main__":
    raise SystemExit(main())
