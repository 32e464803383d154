"""Corpus-level commands: ingest, generate, anneal-plan, length-report, validate, stats.

All inputs and outputs are JSONL (one object per line), except the length
report which is CSV. Output order always follows input order, whatever the
number of workers.
"""

import json
import logging
import pathlib
from collections import Counter
from collections.abc import Callable, Iterator
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import replace
from functools import lru_cache, partial
from itertools import islice
from typing import IO, Any

from pydantic import ValidationError

from .annealing import MixPlan, derive_direct, plan_batches
from .config import PipelineConfig
from .document import DocumentPage, ingest_page, serialize_page, sort_page
from .exceptions import IngestError, LayoutCotError, NoValidPagesError, PipelineIOError
from .generators import generate_task, to_example
from .models import RenderedExample, RenderMode
from .prompt import (
    CoordMode,
    LengthReport,
    assemble,
    enforce_max_length,
    length_report,
    sequence_shape,
)
from .results import ValidationReport, Violation
from .utils import page_rng
from .verification import verify_example

# Set logger
logger = logging.getLogger(__name__)

# Pages handed to the worker pool at a time, per worker
CHUNK_PER_WORKER = 64
PAGE_CACHE_SIZE = 256


@contextmanager
def _open(path: pathlib.Path, mode: str = "r") -> Iterator[IO[Any]]:
    try:
        handle = path.open(mode, encoding=None if "b" in mode else "utf-8")
    except OSError as err:
        raise PipelineIOError(f"cannot open {path}: {err}") from err
    with handle:
        yield handle


def iter_lines(path: pathlib.Path) -> Iterator[tuple[int, str]]:
    """Non-blank lines with their 1-based line numbers"""
    with _open(path) as handle:
        for lineno, line in enumerate(handle, 1):
            if line.strip():
                yield lineno, line


def iter_pages(path: pathlib.Path) -> Iterator[DocumentPage]:
    """Pages of an ingested JSONL file; unreadable lines are logged and skipped"""
    for lineno, line in iter_lines(path):
        try:
            yield ingest_page(line)
        except IngestError as err:
            logger.error("%s line %d: %s", path, lineno, err)


def cmd_ingest(input_path: pathlib.Path, output_path: pathlib.Path) -> int:
    """Normalize raw OCR pages into reading order; returns the number of valid pages"""
    n_pages = 0
    first_seen: dict[str, int] = {}
    with _open(output_path, "w") as out:
        for lineno, line in iter_lines(input_path):
            try:
                page = sort_page(ingest_page(line))
            except IngestError as err:
                logger.error("%s line %d: %s", input_path, lineno, err)
                continue
            if page.page_id in first_seen:
                logger.error(
                    "%s line %d: duplicate page_id %r, first seen on line %d",
                    input_path,
                    lineno,
                    page.page_id,
                    first_seen[page.page_id],
                )
                continue
            first_seen[page.page_id] = lineno
            out.write(json.dumps(serialize_page(page), ensure_ascii=False) + "\n")
            n_pages += 1

    if n_pages == 0:
        raise NoValidPagesError(f"no valid pages in {input_path}")
    logger.info("ingested %d pages into %s", n_pages, output_path)
    return n_pages


def generate_page(config: PipelineConfig, item: tuple[int, str]) -> list[str]:
    """All training lines for one page; depends only on the page and the seed"""
    lineno, line = item
    try:
        page = ingest_page(line)
    except IngestError as err:
        logger.error("pages line %d: %s", lineno, err)
        return []

    rng = page_rng(config.seed, page.page_id)
    settings = config.to_settings()
    grid = config.grid.to_grid()
    tasks, weights = config.task_weights()

    lines = []
    for r in range(config.records_per_page):
        task = tasks[int(rng.choice(len(tasks), p=weights))]
        record_id = f"{page.page_id}/{r}"
        try:
            record = generate_task(task, page, rng, settings, record_id)
        except LayoutCotError as err:
            logger.error("record %s (%s): %s", record_id, task.value, err)
            continue

        _, check = enforce_max_length(
            assemble(page, record.question, CoordMode.EMBEDDED, grid),
            max_length=config.max_length,
            truncate=config.truncate,
        )
        metadata = {**record.metadata, "prompt_tokens": check.total}
        if check.dropped_segments:
            metadata["dropped_segments"] = list(check.dropped_segments)
        record = replace(record, metadata=metadata)

        examples = [to_example(record, RenderMode.DIRECT_ANSWER)]
        if record.has_cot:
            examples = [
                to_example(record, RenderMode.WITH_COT),
                to_example(derive_direct(record), RenderMode.DIRECT_ANSWER),
            ]
        lines.extend(example.model_dump_json() + "\n" for example in examples)
    return lines


def _unique_pages(
    path: pathlib.Path, items: Iterator[tuple[int, str]]
) -> Iterator[tuple[int, str]]:
    """Drop lines repeating an earlier page id; unparsable lines pass through to the workers"""
    first_seen: dict[str, int] = {}
    for lineno, line in items:
        try:
            page_id = json.loads(line)["page_id"]
        except (ValueError, KeyError, TypeError):
            page_id = None
        if isinstance(page_id, str):
            if page_id in first_seen:
                logger.error(
                    "%s line %d: duplicate page_id %r, first seen on line %d",
                    path,
                    lineno,
                    page_id,
                    first_seen[page_id],
                )
                continue
            first_seen[page_id] = lineno
        yield lineno, line


def _chunks(items: Iterator[Any], size: int) -> Iterator[list[Any]]:
    while chunk := list(islice(items, size)):
        yield chunk


def cmd_generate(
    pages_path: pathlib.Path,
    config: PipelineConfig,
    output_path: pathlib.Path,
    workers: int = 1,
) -> int:
    """Generate and render records for every page; returns the number of lines written"""
    work: Callable[[tuple[int, str]], list[str]] = partial(generate_page, config)
    n_lines = 0

    with _open(output_path, "w") as out:
        if workers <= 1:
            for item in _unique_pages(pages_path, iter_lines(pages_path)):
                for line in work(item):
                    out.write(line)
                    n_lines += 1
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                for chunk in _chunks(
                    _unique_pages(pages_path, iter_lines(pages_path)), workers * CHUNK_PER_WORKER
                ):
                    # map yields results in submission order
                    for lines in pool.map(work, chunk):
                        out.writelines(lines)
                        n_lines += len(lines)

    logger.info("wrote %d examples to %s", n_lines, output_path)
    return n_lines


def cmd_anneal_plan(config: PipelineConfig, output_path: pathlib.Path) -> MixPlan:
    """Write the per-step CoT/direct mix as JSONL"""
    plan = plan_batches(config.schedule.to_schedule(), config.schedule.batch_size, config.seed)
    try:
        plan.to_jsonl(output_path)
    except OSError as err:
        raise PipelineIOError(f"cannot write {output_path}: {err}") from err
    return plan


def cmd_length_report(
    pages_path: pathlib.Path, config: PipelineConfig, output_path: pathlib.Path
) -> LengthReport:
    """Per-page prompt length with textual against embedded coordinates"""
    grid = config.grid.to_grid()
    rows = []
    n_over = 0
    for page in iter_pages(pages_path):
        rows.extend(length_report([page], grid=grid).rows)
        textual = sequence_shape(assemble(page, "-", CoordMode.TEXTUAL, grid))
        n_over += textual.total > config.max_length

    if not any(row.n_segments for row in rows):
        raise NoValidPagesError(f"no OCR content to measure in {pages_path}")
    if n_over:
        logger.warning("%d pages exceed %d tokens with textual coordinates", n_over, config.max_length)

    report = LengthReport(tuple(rows))
    try:
        report.write_csv(output_path)
    except OSError as err:
        raise PipelineIOError(f"cannot write {output_path}: {err}") from err
    return report


class PageIndex:
    """Random access to an ingested pages file by page id"""

    def __init__(self, path: pathlib.Path) -> None:
        self.path = path
        self.offsets: dict[str, int] = {}
        with _open(path, "rb") as handle:
            offset = 0
            for raw in handle:
                if raw.strip():
                    try:
                        page_id = json.loads(raw)["page_id"]
                    except (ValueError, KeyError, TypeError):
                        logger.error("%s: unreadable page at byte %d", path, offset)
                    else:
                        if page_id in self.offsets:
                            logger.error(
                                "%s: duplicate page_id %r at byte %d, keeping the first",
                                path,
                                page_id,
                                offset,
                            )
                        else:
                            self.offsets[page_id] = offset
                offset += len(raw)
        self.get = lru_cache(maxsize=PAGE_CACHE_SIZE)(self._load)

    def __len__(self) -> int:
        return len(self.offsets)

    def _load(self, page_id: str) -> DocumentPage | None:
        offset = self.offsets.get(page_id)
        if offset is None:
            return None
        with _open(self.path, "rb") as handle:
            handle.seek(offset)
            line = handle.readline()
        try:
            return ingest_page(line)
        except IngestError as err:
            logger.error("%s: %s", self.path, err)
            return None


def cmd_validate(records_path: pathlib.Path, pages_path: pathlib.Path) -> ValidationReport:
    """Re-check every rendered example against its source page"""
    pages = PageIndex(pages_path)
    report = ValidationReport()
    seen: set[str] = set()

    for lineno, line in iter_lines(records_path):
        try:
            example = RenderedExample.model_validate_json(line)
        except ValidationError as err:
            first = err.errors()[0]
            where = ".".join(str(part) for part in first["loc"]) or "<record>"
            report.add([Violation(f"line {lineno}", f"schema: {where}: {first['msg']}")])
            continue

        violations = []
        if example.record_id in seen:
            violations.append(Violation(example.record_id, "duplicate record_id"))
        seen.add(example.record_id)
        violations.extend(verify_example(example, pages.get(example.page_id)))
        for violation in violations:
            logger.debug("%s", violation)
        report.add(violations)

    logger.info("validated %d records: %d violations", report.n_records, len(report.violations))
    return report


def cmd_stats(records_path: pathlib.Path) -> Counter[tuple[str, str]]:
    """Number of examples per (task, mode)"""
    counts: Counter[tuple[str, str]] = Counter()
    for lineno, line in iter_lines(records_path):
        try:
            record = json.loads(line)
            counts[record["task"], record["mode"]] += 1
        except (ValueError, KeyError, TypeError):
            logger.error("%s line %d: not a rendered example", records_path, lineno)
    return counts
