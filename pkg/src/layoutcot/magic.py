"""A module to define the `%%layoutcot` cell magic"""

import argparse
import logging
import pathlib
from contextlib import contextmanager

from IPython.core.interactiveshell import InteractiveShell
from IPython.core.magic import Magics, cell_magic, magics_class
from IPython.display import HTML, display

from .config import PipelineConfig, load_config
from .document import DocumentPage, ingest_page, sort_page
from .exceptions import ConfigError, IngestError, LayoutCotError, ValidationResult
from .generators import generate_task
from .models import InstructionRecord, RenderMode, TaskKind
from .output_formatting import DebugOutput, RecordOutput
from .utils import page_rng
from .verification import verify_record

# Set logger
logger = logging.getLogger(__name__)


@magics_class
class PreviewMagic(Magics):
    """Class to add the preview cell magic"""

    def __init__(self, shell):
        super().__init__(shell)
        self.shell: InteractiveShell = shell
        self.cell: str = ""

    def parse_magic_args(
        self, line: str
    ) -> tuple[list[TaskKind], PipelineConfig, RenderMode, bool]:
        """Parse the magic arguments into tasks, configuration, mode and debug flag"""
        parser = argparse.ArgumentParser(prog="%%layoutcot", add_help=False)
        parser.add_argument(
            "-t",
            "--task",
            action="append",
            type=TaskKind,
            dest="tasks",
            help="Task to generate (repeatable, default: all)",
        )
        parser.add_argument("-s", "--seed", type=int, help="Override the configured seed")
        parser.add_argument("-c", "--config", help="Path to a configuration file")
        parser.add_argument(
            "-m", "--mode", type=RenderMode, default=RenderMode.WITH_COT, help="cot or direct"
        )
        parser.add_argument(
            "-d",
            "--debug",
            action="store_true",
            dest="is_debug",
            default=False,
            help="Enable debug mode",
        )

        args, _ = parser.parse_known_args(line.strip().split())
        config = load_config(pathlib.Path(args.config) if args.config else None, args.seed)
        return args.tasks or list(TaskKind), config, args.mode, args.is_debug

    @contextmanager
    def debug_logging(self, debug: bool):
        """Context manager to temporarily lower the package log level"""
        package_logger = logging.getLogger(__package__)
        original_level = package_logger.level
        try:
            if debug:
                package_logger.setLevel(logging.DEBUG)
            yield
        finally:
            package_logger.setLevel(original_level)

    def preview_page(
        self, page: DocumentPage, tasks: list[TaskKind], config: PipelineConfig
    ) -> list[RecordOutput]:
        """Generate and verify one record per task"""
        rng = page_rng(config.seed, page.page_id)
        settings = config.to_settings()

        outputs = []
        for n, task in enumerate(tasks):
            try:
                record: InstructionRecord = generate_task(
                    task, page, rng, settings, f"{page.page_id}/{n}"
                )
            except LayoutCotError as err:
                outputs.append(RecordOutput(task.value, error=err))
                continue
            outputs.append(RecordOutput(task.value, record, verify_record(record, page)))
        return outputs

    @cell_magic
    def layoutcot(self, line: str, cell: str):
        """The `%%layoutcot` cell magic"""
        self.cell = cell

        try:
            tasks, config, mode, is_debug = self.parse_magic_args(line)
            page = sort_page(ingest_page(self.cell))
        except (ConfigError, IngestError) as err:
            result = ValidationResult(is_valid=False, error=err, message="Cannot preview page")
            display(HTML(result.user_message))
            return

        with self.debug_logging(is_debug):
            outputs = self.preview_page(page, tasks, config)

            if is_debug:
                debug_output = DebugOutput(
                    page=page,
                    records=[o.record for o in outputs if o.record is not None],
                    params={"seed": config.seed, "mode": mode.value},
                )
                display(HTML(debug_output.to_html()))

            for output in outputs:
                output.mode = mode
                output.display_results()


def load_ipython_extension(ipython):
    """
    Any module file that defines a function named `load_ipython_extension`
    can be loaded via `%load_ext module.path` or be configured to be
    autoloaded by IPython at startup time.
    """
    ipython.register_magics(PreviewMagic)
    display(
        HTML(
            "<div style='background-color: #d9ead3; border-radius: 5px; padding: 10px;'>"
            "ℹ️ <strong>layoutcot loaded:</strong> paste an OCR page record into a "
            "<code>%%layoutcot</code> cell to preview its instruction data."
            "</div>"
        )
    )
