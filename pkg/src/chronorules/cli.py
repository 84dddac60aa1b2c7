"""Command-line entry point.

Every command reads a JSON config (`--config`), applies `--set key=value`
overrides, runs one pipeline stage (or all of them), and prints the produced
artifact paths as a final JSON line. Exit codes: 0 success, 2 config error,
3 missing stage dependency, 4 backend failure, 5 data error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import PipelineConfig
from .errors import BackendError, ConfigError, DataError, DependencyError
from .pipeline import STAGE_RUNNERS, Workspace, run_pipeline

EXIT_CONFIG = 2
EXIT_DEPENDENCY = 3
EXIT_BACKEND = 4
EXIT_DATA = 5

COMMANDS = (
    "ingest",
    "sample-rules",
    "generate-rules",
    "adapt-rules",
    "reason",
    "evaluate",
    "pipeline",
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chronorules",
        description="Temporal-KG rule mining, LLM-guided adaptation, and link prediction.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        cmd = sub.add_parser(command, help=f"run the {command} stage" if command != "pipeline" else "run all stages in order")
        cmd.add_argument("--config", required=True, help="path to the JSON config document")
        cmd.add_argument(
            "--set",
            dest="overrides",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a config value (dotted keys, JSON-parsed values)",
        )
        cmd.add_argument("--jobs", type=int, default=None, help="worker pool bound for all stages")
        cmd.add_argument(
            "--backend",
            choices=("scripted", "replay", "live"),
            default=None,
            help="override backend.kind",
        )
        cmd.add_argument(
            "--transcript",
            default=None,
            help="base path for per-stage LLM transcripts (record or replay)",
        )
        cmd.add_argument("--out", default=None, help="override the output directory")
        cmd.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    config = PipelineConfig.from_file(args.config)
    config.apply_overrides(args.overrides)
    if args.jobs is not None:
        config.jobs = args.jobs
    if args.backend is not None:
        config.backend.kind = args.backend
    if args.transcript is not None:
        config.backend.transcript = args.transcript
    if args.out is not None:
        config.out_dir = args.out
    config.validate()
    return config


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = _load_config(args)
        ws = Workspace(config)
        if args.command == "pipeline":
            result = run_pipeline(ws)
        else:
            result = STAGE_RUNNERS[args.command](ws)
        print(result.final_line())
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DependencyError as exc:
        print(f"dependency error: {exc}", file=sys.stderr)
        return EXIT_DEPENDENCY
    except BackendError as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
