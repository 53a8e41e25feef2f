"""Command-line entry point: ``ace run|replay|inspect|memory``."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import Sequence

import yaml

from . import report
from .config import RunConfig
from .errors import ConfigurationError, ConstitutionParseError, CorruptionError, ValidationError
from .memory import ingest_directory
from .runtime import RuntimeFailure, Runtime, read_trace, replay

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

MEMORY_STORE_ENV = "ACE_MEMORY_STORE"


def _override(text: str) -> tuple[str, object]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"override {text!r} must look like name=value")
    key, value = text.split("=", 1)
    return key.strip(), yaml.safe_load(value)


def _ticks(text: str) -> tuple[int, int]:
    try:
        return report.parse_ticks(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"bad tick range {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ace", description="Run and inspect layered agent scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario and write a trace")
    run.add_argument("--constitution", default="default", help="built-in name or path to a constitution file")
    run.add_argument("--scenario", default="jeeves_clean", help="built-in name or path to a scenario file")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--cognition", choices=("rule", "external"), default="rule")
    run.add_argument("--max-ticks", type=int, default=300)
    run.add_argument("--trace", help="write the JSON-lines trace here")
    run.add_argument("--override", action="append", type=_override, default=[], metavar="NAME=VALUE",
                     help="override a policy constant, e.g. retry_cap=3 or thresholds={CognitiveControl: 0.7}")
    run.add_argument("--memory", help="declarative memory store (JSON lines)")
    run.add_argument("--mode", choices=("deterministic", "threaded"), default="deterministic")

    rep = sub.add_parser("replay", help="re-execute a trace and verify every line")
    rep.add_argument("trace")
    rep.add_argument("--states", action="store_true", help="print the reconstructed layer states as JSON")

    ins = sub.add_parser("inspect", help="filter and render a trace")
    ins.add_argument("trace")
    ins.add_argument("--layer")
    ins.add_argument("--kind")
    ins.add_argument("--ticks", type=_ticks, metavar="A:B")
    views = ins.add_mutually_exclusive_group()
    for view in report.VIEWS:
        views.add_argument(f"--{view}", dest="view", action="store_const", const=view)

    mem = sub.add_parser("memory", help="manage declarative memory")
    mem_sub = mem.add_subparsers(dest="memory_command", required=True)
    add = mem_sub.add_parser("add", help="ingest a directory of text documents")
    add.add_argument("directory")
    add.add_argument("--store", default=None, help=f"store path (default ${MEMORY_STORE_ENV} or ace_memory.jsonl)")
    return parser


def _run(args) -> int:
    try:
        config = RunConfig(
            constitution=args.constitution,
            scenario=args.scenario,
            seed=args.seed,
            max_ticks=args.max_ticks,
            cognition=args.cognition,
            overrides=dict(args.override),
            trace=args.trace,
            memory=args.memory,
            mode=args.mode,
        )
        runtime = Runtime(config)
    except (ConfigurationError, ConstitutionParseError, FileNotFoundError, TypeError, KeyError) as exc:
        print(f"ace: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = runtime.run()
    except RuntimeFailure as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    envelopes = sum(1 for r in result.records() if "seq" in r)
    where = f", trace {args.trace}" if args.trace else ""
    print(f"{result.reason} after {result.ticks} ticks, {envelopes} envelopes{where}")
    return EXIT_OK


def _replay(args) -> int:
    try:
        lines = read_trace(args.trace)
    except OSError as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = replay(lines)
    except CorruptionError as exc:
        print(f"ace: corrupt trace: {exc} (last good seq {exc.last_good_seq})", file=sys.stderr)
        return EXIT_RUNTIME
    if args.states:
        print(json.dumps(result.layers, indent=2, sort_keys=True))
    else:
        suffix = " (run ended in a failure marker)" if result.failed else ""
        print(f"verified {result.lines_verified} lines{suffix}")
    return EXIT_OK


def _inspect(args, parser) -> int:
    try:
        filters = report.Filters(args.layer, args.kind, args.ticks)
    except ValueError as exc:
        parser.error(str(exc))
    try:
        lines = read_trace(args.trace)
    except OSError as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in report.inspect(lines, filters, args.view):
        print(line)
    return EXIT_OK


def _memory(args) -> int:
    store = args.store or os.environ.get(MEMORY_STORE_ENV) or "ace_memory.jsonl"
    try:
        added = ingest_directory(Path(store), args.directory)
    except (FileNotFoundError, ValidationError) as exc:
        print(f"ace: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"added {len(added)} documents to {store}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "run":
        return _run(args)
    if args.command == "replay":
        return _replay(args)
    if args.command == "inspect":
        return _inspect(args, parser)
    return _memory(args)


if __name__ == "__main__":
    sys.exit(main())
