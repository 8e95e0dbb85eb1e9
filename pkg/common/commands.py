"""Shared plumbing of the toolkit's management commands.

Each command reads one run configuration, records itself as a RunRecord
and maps ToolkitError subclasses to their exit codes.
"""

import logging
import sys
import time

from django.conf import settings
from django.core.management import BaseCommand, CommandError
from django.db import DatabaseError

from common.config import parse_config
from common.exceptions import ExitCode, ToolkitError
from common.models import RunRecord

logger = logging.getLogger(__name__)


def _usage_error(parser, message):
    if parser.called_from_command_line:
        parser.print_usage(sys.stderr)
        parser.exit(ExitCode.USAGE, f"{parser.prog}: error: {message}\n")
    raise CommandError(f"Error: {message}", returncode=ExitCode.USAGE)


class ToolkitCommand(BaseCommand):
    kind = None
    record = None

    def create_parser(self, prog_name, subcommand, **kwargs):
        parser = super().create_parser(prog_name, subcommand, **kwargs)
        # argparse exits with 2 by default, which is our data-error code
        parser.error = lambda message: _usage_error(parser, message)
        return parser

    def add_arguments(self, parser):
        parser.add_argument("--config", help="flat key: value configuration file")
        parser.add_argument("--output", help="output path")
        parser.add_argument("--seed", type=int, help="overrides the seed key")
        parser.add_argument(
            "--threads",
            type=int,
            default=None,
            help="neighbor search worker threads (default: NEIGHBOR_THREADS)",
        )
        self.add_run_arguments(parser)

    def add_run_arguments(self, parser):
        pass

    def run(self, config, **options) -> dict:
        raise NotImplementedError

    def _start_record(self, config, options):
        if not settings.RECORD_RUNS:
            return None
        try:
            return RunRecord.start(
                self.kind,
                config=config.text or config.to_text(),
                seed=config.seed,
                output=options.get("output") or "",
            )
        except DatabaseError:
            logger.warning("run records are unavailable, run `manage.py migrate` first")
            return None

    def handle(self, *args, **options):
        threads = options.get("threads")
        if threads is not None and threads < 1:
            raise CommandError("--threads must be at least 1", returncode=ExitCode.USAGE)
        record = None
        try:
            config = parse_config(options.get("config"))
            if options.get("seed") is not None:
                config = config.replace(seed=options["seed"])
            record = self.record = self._start_record(config, options)
            started = time.monotonic()
            run_options = {key: value for key, value in options.items() if key != "config"}
            summary = self.run(config, **run_options) or {}
            summary.setdefault("wall_seconds", time.monotonic() - started)
        except ToolkitError as error:
            if record is not None:
                record.fail(str(error), error.exit_code)
            raise CommandError(str(error), returncode=error.exit_code)
        if record is not None:
            record.finish(summary)
