"""Command-line entry point: `layoutcot <command> [options]`"""

import argparse
import logging
import pathlib
import sys
from collections.abc import Sequence

from .config import load_config
from .exceptions import (
    ConfigError,
    NoValidPagesError,
    PipelineIOError,
    PromptError,
    ScheduleError,
)
from .pipeline import (
    cmd_anneal_plan,
    cmd_generate,
    cmd_ingest,
    cmd_length_report,
    cmd_stats,
    cmd_validate,
)

# Set logger
logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATIONS = 1
EXIT_FATAL = 2

FATAL_ERRORS = (
    ConfigError,
    PipelineIOError,
    NoValidPagesError,
    ScheduleError,
    PromptError,
    OSError,
)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=pathlib.Path, help="Configuration file")
    common.add_argument("--seed", type=int, help="Override the configured seed")
    common.add_argument("--input", type=pathlib.Path, help="Input JSONL file")
    common.add_argument("--output", type=pathlib.Path, help="Output file")
    common.add_argument("--workers", type=int, default=1, help="Worker processes")
    common.add_argument(
        "-d", "--debug", action="store_true", dest="is_debug", help="Enable debug logging"
    )

    parser = argparse.ArgumentParser(
        prog="layoutcot",
        description="Build layout-aware CoT instruction data from OCR pages",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("ingest", parents=[common], help="Normalize raw OCR JSONL")
    commands.add_parser("generate", parents=[common], help="Generate rendered training JSONL")
    commands.add_parser("anneal-plan", parents=[common], help="Plan the CoT/direct mix")
    commands.add_parser(
        "length-report", parents=[common], help="Compare prompt lengths per coordinate mode"
    )
    validate = commands.add_parser(
        "validate", parents=[common], help="Re-check rendered examples against their pages"
    )
    validate.add_argument(
        "--pages", type=pathlib.Path, required=True, help="Ingested pages JSONL"
    )
    commands.add_parser("stats", parents=[common], help="Count examples per task and mode")
    return parser


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{name}" for name in names if getattr(args, name) is None]
    if missing:
        raise ConfigError(f"{args.command} requires {', '.join(missing)}")


def run(args: argparse.Namespace) -> int:
    match args.command:
        case "ingest":
            _require(args, "input", "output")
            n_pages = cmd_ingest(args.input, args.output)
            print(f"{n_pages} pages")
        case "generate":
            _require(args, "input", "output")
            config = load_config(args.config, args.seed)
            n_lines = cmd_generate(args.input, config, args.output, args.workers)
            print(f"{n_lines} examples")
        case "anneal-plan":
            _require(args, "output")
            config = load_config(args.config, args.seed)
            plan = cmd_anneal_plan(config, args.output)
            windows = plan.audit()
            worst = max(windows, key=lambda w: w.deviation)
            print(
                f"{len(plan.steps)} steps, {plan.total_cot} CoT records; "
                f"largest window deviation {worst.deviation:.4f} "
                f"(steps {worst.start}-{worst.end - 1})"
            )
        case "length-report":
            _require(args, "input", "output")
            config = load_config(args.config, args.seed)
            report = cmd_length_report(args.input, config, args.output)
            print(
                f"mean mode I {report.mean_mode_I:.2f}, "
                f"mean mode II {report.mean_mode_II:.2f}, ratio {report.ratio:.2f}"
            )
        case "validate":
            _require(args, "input")
            report = cmd_validate(args.input, args.pages)
            print(report)
            if not report.passed:
                return EXIT_VIOLATIONS
        case "stats":
            _require(args, "input")
            counts = cmd_stats(args.input)
            for (task, mode), count in sorted(counts.items()):
                print(f"{task}\t{mode}\t{count}")
            print(f"total\t\t{sum(counts.values())}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.is_debug else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        return run(args)
    except FATAL_ERRORS as err:
        logger.error("%s", err)
        if args.is_debug:
            logger.exception("fatal error in %s", args.command)
        return EXIT_FATAL


if __name__ == "__main__":
    sys.exit(main())
