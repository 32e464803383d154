"""CoT faithfulness checks.

A record is faithful when re-running the geometry and table operations on its
source page reproduces every bound value, every narrated number and the final
answer. The same checks run on in-memory records and on rendered JSONL lines.
"""

import logging
import math
import re
from collections.abc import Mapping, Sequence
from typing import Any

from .document import DocumentPage, LayoutType
from .exceptions import LayoutCotError
from .generators import (
    gen_document_description,
    gen_layout_location,
    position_line,
    question_body,
    reasoning_for,
    restore_masked_boxes,
    restore_masked_text,
    text_box_lines,
)
from .models import COT_TASKS, CotStep, InstructionRecord, RenderedExample, RenderMode, TaskKind
from .results import Violation
from .utils import number_tokens, to_jsonable, value_tokens

# Set logger
logger = logging.getLogger(__name__)

REL_TOLERANCE = 1e-9

_STEP_LINE = re.compile(r"^(\d+)\. (.*)$")


def values_match(expected: Any, actual: Any) -> bool:
    """Exact match for integers and names, relative tolerance for reals"""
    match expected:
        case bool() | str() | None:
            return type(actual) is type(expected) and expected == actual
        case int():
            return type(actual) is int and expected == actual
        case float():
            return (
                isinstance(actual, float)
                and math.isclose(expected, actual, rel_tol=REL_TOLERANCE, abs_tol=0.0)
            )
        case list():
            return (
                isinstance(actual, list)
                and len(expected) == len(actual)
                and all(values_match(e, a) for e, a in zip(expected, actual, strict=True))
            )
        case _:
            return False


def _check_steps(
    record_id: str,
    expected_steps: Sequence[CotStep],
    bindings: Mapping[int, Mapping[str, Any]],
    narrations: Mapping[int, str],
) -> list[Violation]:
    violations = []
    if len(narrations) != len(expected_steps):
        violations.append(
            Violation(
                record_id,
                f"expected {len(expected_steps)} reasoning steps, found {len(narrations)}",
            )
        )

    for step in expected_steps:
        expected_values = to_jsonable(step.bound_values)
        actual_values = bindings.get(step.step_no)
        if actual_values is None:
            violations.append(Violation(record_id, "missing bound values", step.step_no))
        else:
            for key in sorted(expected_values.keys() | actual_values.keys()):
                if key not in actual_values or key not in expected_values:
                    violations.append(
                        Violation(record_id, f"bound value {key!r} missing or unexpected", step.step_no)
                    )
                elif not values_match(expected_values[key], actual_values[key]):
                    violations.append(
                        Violation(
                            record_id,
                            f"bound value {key!r} is {actual_values[key]!r}, "
                            f"recomputes to {expected_values[key]!r}",
                            step.step_no,
                        )
                    )

        narration = narrations.get(step.step_no)
        if narration is None:
            violations.append(Violation(record_id, "missing narration", step.step_no))
            continue
        if narration == step.narration:
            continue
        allowed = set().union(*(value_tokens(v) for v in step.bound_values.values()))
        unsupported = [token for token in number_tokens(narration) if token not in allowed]
        if unsupported:
            violations.append(
                Violation(
                    record_id,
                    f"narrated value(s) {', '.join(unsupported)} not supported by recomputation",
                    step.step_no,
                )
            )
        else:
            violations.append(
                Violation(record_id, "narration differs from the recomputed step", step.step_no)
            )

    return violations


def _recompute(
    record_id: str, task: TaskKind, page: DocumentPage, params: Mapping[str, Any]
) -> tuple[tuple[CotStep, ...], str] | Violation:
    try:
        return reasoning_for(task, page, dict(params))
    except (LayoutCotError, KeyError, TypeError, ValueError, IndexError) as err:
        return Violation(record_id, f"cannot recompute reasoning: {err}")


def _check_plain_answer(
    record_id: str,
    task: TaskKind,
    question: str,
    answer: str,
    metadata: Mapping[str, Any],
    page: DocumentPage,
) -> list[Violation]:
    """Answer checks for records without reasoning steps"""
    params = metadata.get("params", {})
    try:
        match task:
            case TaskKind.MASKED_LANGUAGE:
                original = " ".join(" ".join(s.text for s in page.segments).split())
                ok = restore_masked_text(question, answer, params["masked"]) == original
            case TaskKind.MASKED_POSITION:
                original = "\n".join(position_line(s) for s in page.segments)
                ok = restore_masked_boxes(question, answer) == original
            case TaskKind.TEXT_BOX_RECONSTRUCTION:
                sample = params["sample"]
                body, expected = text_box_lines(page, sample)
                distinct = len({page.segment(i).text for i in sample}) == len(sample)
                ok = distinct and answer == expected and question_body(question) == body
            case TaskKind.DOCUMENT_DESCRIPTION:
                ok = answer == gen_document_description(page).final_answer
            case TaskKind.LAYOUT_ANALYSIS if metadata.get("variant") == "locate":
                expected = gen_layout_location(page, LayoutType(params["layout_type"]))
                ok = answer == expected.final_answer
            case _ if task in COT_TASKS:
                recomputed = _recompute(record_id, task, page, params)
                if isinstance(recomputed, Violation):
                    return [recomputed]
                ok = answer == recomputed[1]
            case _:
                ok = True
    except (LayoutCotError, KeyError, TypeError, ValueError, IndexError, StopIteration) as err:
        return [Violation(record_id, f"malformed {task.value} record: {err}")]

    if ok:
        return []
    return [Violation(record_id, f"answer does not match the source page ({task.value})")]


def verify_record(record: InstructionRecord, page: DocumentPage) -> list[Violation]:
    """Check an in-memory record against its source page"""
    if record.page_id != page.page_id:
        return [Violation(record.record_id, f"record belongs to page {record.page_id}")]

    if not record.has_cot:
        return _check_plain_answer(
            record.record_id,
            record.task,
            record.question,
            record.final_answer,
            record.metadata,
            page,
        )

    recomputed = _recompute(record.record_id, record.task, page, record.metadata.get("params", {}))
    if isinstance(recomputed, Violation):
        return [recomputed]
    expected_steps, expected_answer = recomputed

    assert record.cot_steps is not None  # has_cot
    violations = _check_steps(
        record.record_id,
        expected_steps,
        {step.step_no: to_jsonable(step.bound_values) for step in record.cot_steps},
        {step.step_no: step.narration for step in record.cot_steps},
    )
    if record.final_answer != expected_answer:
        violations.append(
            Violation(
                record.record_id,
                f"answer {record.final_answer!r} recomputes to {expected_answer!r}",
            )
        )
    return violations


def parse_cot_response(response: str) -> tuple[dict[int, str], str | None]:
    """Split a rendered CoT response into numbered narrations and the final answer"""
    body, sep, answer = response.rpartition("\nAnswer: ")
    narrations = {}
    for line in body.split("\n"):
        if match := _STEP_LINE.match(line):
            narrations[int(match[1])] = match[2]
    return narrations, answer if sep else None


def verify_example(example: RenderedExample, page: DocumentPage | None) -> list[Violation]:
    """Check a rendered JSONL example against its source page"""
    if page is None:
        return [Violation(example.record_id, "source page not found")]

    if example.mode is RenderMode.DIRECT_ANSWER:
        return _check_plain_answer(
            example.record_id,
            example.task,
            example.question,
            example.response,
            example.metadata,
            page,
        )

    recomputed = _recompute(
        example.record_id, example.task, page, example.metadata.get("params", {})
    )
    if isinstance(recomputed, Violation):
        return [recomputed]
    expected_steps, expected_answer = recomputed

    raw_bindings = example.metadata.get("cot_bindings")
    if not isinstance(raw_bindings, list):
        return [Violation(example.record_id, "cot example carries no bound values")]
    bindings = {
        int(item["step_no"]): item["bound_values"]
        for item in raw_bindings
        if isinstance(item, dict) and "step_no" in item and "bound_values" in item
    }

    narrations, answer = parse_cot_response(example.response)
    violations = _check_steps(example.record_id, expected_steps, bindings, narrations)
    if answer != expected_answer:
        violations.append(
            Violation(
                example.record_id,
                f"answer {answer!r} recomputes to {expected_answer!r}",
            )
        )
    return violations
