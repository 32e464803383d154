"""Instruction-data generators for the seven pre-training tasks.

Layout analysis, table analysis and geometric analysis records carry
reasoning steps built by the `*_reasoning` functions below; those functions
take no randomness, so the same steps can be rebuilt from a record's
parameters when validating a corpus at rest.
"""

import logging
from collections import Counter
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Any

import numpy as np

from .document import DocumentPage, LayoutType, TextSegment
from .exceptions import GenerationError, RenderError, TableStructureError
from .geometry import (
    BBox,
    DistanceCase,
    Gap,
    Overlap,
    PageRegion,
    RelativeDirection,
    center,
    distance_case,
    min_distance,
    nearest_segments,
    page_region,
    projection_relation,
    relative_direction,
)
from .models import (
    CotStep,
    GeometricQuery,
    InstructionRecord,
    RenderedExample,
    RenderMode,
    TaskKind,
)
from .utils import format_distance, one_line, quote, to_jsonable
from .xycut import (
    DEFAULT_COLUMN_TOLERANCE,
    DEFAULT_MIN_GAP,
    StructureSource,
    build_table_model,
    cell_at,
)

# Set logger
logger = logging.getLogger(__name__)

GENERATOR_VERSION = "1.0"
TEMPLATE_VERSION = "1"

DEFAULT_MASK_RATE = 0.15
MAX_MASK_RATE = 0.5
DEFAULT_K_NEIGHBORS = 3
DEFAULT_SAMPLE_K = 5
# Texts quoted in the first layout step
MAX_LISTED_TEXTS = 5

MASK_TOKEN = "[MASK_{n}]"
BOX_PLACEHOLDER = "[BOX?]"

QUESTION_BANK: dict[str, tuple[str, ...]] = {
    "document_description": (
        "Provide a brief overview of the document.",
        "Give a short description of this document.",
        "Summarize the content and layout of this document.",
    ),
    "text_box_reconstruction": (
        "Recover the bounding box of each of the following OCR texts.",
        "Give the coordinates [left, top, right, bottom] of each text below.",
        "Where is each of the following texts located in the document?",
    ),
    "layout_analysis": (
        "Determine the layout type of the area {area}.",
        "What kind of layout element occupies the area {area}?",
        "Identify the layout type of the region bounded by {area}.",
    ),
    "layout_location": (
        "Locate every {layout_type} element in the document.",
        "Where are the {layout_type} elements of this document?",
    ),
    "table_analysis": (
        "What is the element in row {row}, column {col} of the table?",
        "Find the table element located at row {row} and column {col}.",
    ),
    "masked_language": (
        "Restore the masked words in the following OCR text.",
        "Fill in each masked placeholder in the text below.",
    ),
    "masked_position": (
        "Reconstruct the bounding boxes marked [BOX?] in the following OCR results.",
        "Some texts below are missing their coordinates. Recover the missing boxes.",
    ),
    "geometric_distance": (
        "What is the minimum distance between {a} and {b}?",
        "Calculate the distance between the text {a} and the text {b}.",
    ),
    "geometric_direction": (
        "In which direction is {b} located relative to {a}?",
        "Where does {b} lie with respect to {a}?",
    ),
}


@dataclass(frozen=True)
class GenerationSettings:
    """Knobs shared by the generators"""

    min_gap: float = DEFAULT_MIN_GAP
    column_tolerance: float = DEFAULT_COLUMN_TOLERANCE
    mask_rate: float = DEFAULT_MASK_RATE
    k_neighbors: int = DEFAULT_K_NEIGHBORS
    sample_k: int = DEFAULT_SAMPLE_K
    # Run XY-Cut recovery on pages without a table annotation
    recover_tables: bool = False


def _phrase(key: str, rng: np.random.Generator | None, **fields: Any) -> str:
    bank = QUESTION_BANK[key]
    choice = 0 if rng is None else int(rng.integers(len(bank)))
    return bank[choice].format(**fields)


def _metadata(params: dict[str, Any], **extra: Any) -> dict[str, Any]:
    return {
        "generator_version": GENERATOR_VERSION,
        "template_version": TEMPLATE_VERSION,
        "params": to_jsonable(params),
        **extra,
    }


def _require_segments(page: DocumentPage, minimum: int = 1) -> None:
    if page.n_segments < minimum:
        raise GenerationError(
            f"page {page.page_id}: needs at least {minimum} segment(s), has {page.n_segments}"
        )


def _check_mask_rate(mask_rate: float) -> None:
    if not 0 < mask_rate <= MAX_MASK_RATE:
        raise GenerationError(f"mask_rate must lie in (0, {MAX_MASK_RATE}], got {mask_rate}")


def question_body(question: str) -> str:
    """The part of a question after its instruction line"""
    return question.split("\n\n", 1)[1]


# Document description


def gen_document_description(
    page: DocumentPage,
    rng: np.random.Generator | None = None,
    record_id: str | None = None,
) -> InstructionRecord:
    """Template summary of segment count, occupied regions and layout types"""
    _require_segments(page)

    n = page.n_segments
    sentences = [f"The document contains {n} text segment{'s' if n != 1 else ''}."]

    occupied = {page_region(segment.bbox) for segment in page.segments}
    regions = [region.value for region in PageRegion if region in occupied]
    sentences.append(
        f"Text occupies the {_join(regions)} region{'s' if len(regions) != 1 else ''} of the page."
    )

    if page.layout_annotations:
        counts = Counter(item.layout_type for item in page.layout_annotations)
        parts = [
            f"{counts[kind]} {kind.value.lower()} region{'s' if counts[kind] != 1 else ''}"
            for kind in LayoutType
            if counts[kind]
        ]
        sentences.append(f"It contains {_join(parts)}.")

    if page.table_annotations:
        sentences.append(
            f"It includes {len(page.table_annotations)} annotated table"
            f"{'s' if len(page.table_annotations) != 1 else ''}."
        )

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.DOCUMENT_DESCRIPTION.value}",
        page_id=page.page_id,
        task=TaskKind.DOCUMENT_DESCRIPTION,
        question=_phrase("document_description", rng),
        final_answer=" ".join(sentences),
        metadata=_metadata({}),
    )


def _join(parts: list[str]) -> str:
    if len(parts) <= 1:
        return "".join(parts)
    return f"{', '.join(parts[:-1])} and {parts[-1]}"


# Text and box reconstruction


def gen_text_box_reconstruction(
    page: DocumentPage,
    rng: np.random.Generator,
    sample_k: int = DEFAULT_SAMPLE_K,
    record_id: str | None = None,
) -> InstructionRecord:
    """Ask for the boxes of `sample_k` distinct texts"""
    _require_segments(page)
    if not 1 <= sample_k <= page.n_segments:
        raise GenerationError(f"sample_k must lie in [1, {page.n_segments}], got {sample_k}")

    distinct = {segment.text for segment in page.segments}
    if page.n_segments > 1 and len(distinct) == 1:
        raise GenerationError(f"page {page.page_id}: all texts are identical")
    if len(distinct) < sample_k:
        logger.warning(
            "page %s: only %d distinct texts, sampling %d instead of %d",
            page.page_id,
            len(distinct),
            len(distinct),
            sample_k,
        )
        sample_k = len(distinct)

    # Walk a random permutation, skipping texts already drawn
    chosen: list[TextSegment] = []
    seen: set[str] = set()
    for i in rng.permutation(page.n_segments):
        segment = page.segment(int(i))
        if segment.text in seen:
            continue
        seen.add(segment.text)
        chosen.append(segment)
        if len(chosen) == sample_k:
            break
    chosen.sort(key=lambda segment: segment.index)

    sample = [segment.index for segment in chosen]
    body, answer = text_box_lines(page, sample)
    question = _phrase("text_box_reconstruction", rng) + "\n\n" + body

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.TEXT_BOX_RECONSTRUCTION.value}",
        page_id=page.page_id,
        task=TaskKind.TEXT_BOX_RECONSTRUCTION,
        question=question,
        final_answer=answer,
        metadata=_metadata({"sample": sample}),
    )


def text_box_lines(page: DocumentPage, sample: Sequence[int]) -> tuple[str, str]:
    """Question body and answer for the sampled segments, one per line"""
    chosen = [page.segment(i) for i in sample]
    body = "\n".join(one_line(segment.text) for segment in chosen)
    answer = "\n".join(position_line(segment) for segment in chosen)
    return body, answer


def position_line(segment: TextSegment, box: BBox | str | None = None) -> str:
    """One "text, box" answer line; `box` replaces the segment box when given"""
    return f"{one_line(segment.text)}, {segment.bbox if box is None else box}"


# Layout analysis


def layout_reasoning(
    page: DocumentPage, target_area: BBox, k_neighbors: int = DEFAULT_K_NEIGHBORS
) -> tuple[tuple[CotStep, ...], str]:
    """Region, nearest annotated neighbours, then the layout type of the area"""
    annotations = page.layout_annotations
    if not annotations:
        raise GenerationError(f"page {page.page_id}: no layout annotations")

    overlap, truth = max(
        (item.bbox.intersection_area(target_area), -i)
        for i, item in enumerate(annotations)
    )
    truth = -truth
    if overlap == 0:
        raise GenerationError(
            f"page {page.page_id}: area {target_area} intersects no annotated element"
        )
    layout_type = annotations[truth].layout_type

    region = page_region(target_area)
    texts = tuple(
        segment.text
        for segment in page.segments
        if target_area.contains_point(center(segment.bbox))
    )[:MAX_LISTED_TEXTS]
    if texts:
        contents = f"contains the text {', '.join(quote(text) for text in texts)}"
    else:
        contents = "contains no OCR text"
    step_1 = CotStep(
        1,
        f"The area {target_area} {contents} and lies in the {region.value} part of the document.",
        {"target_area": target_area, "region": region.value, "texts": texts},
    )

    candidates = [(i, item.bbox) for i, item in enumerate(annotations) if i != truth]
    neighbors = nearest_segments(target_area, candidates, k_neighbors) if candidates else []
    neighbor_types = tuple(annotations[i].layout_type.value for i in neighbors)
    neighbor_boxes = tuple(annotations[i].bbox for i in neighbors)
    neighbor_distances = tuple(min_distance(target_area, box) for box in neighbor_boxes)
    listing = ", ".join(
        f"{kind} at {box} (distance {format_distance(distance)})"
        for kind, box, distance in zip(
            neighbor_types, neighbor_boxes, neighbor_distances, strict=True
        )
    )
    match len(neighbors):
        case 0:
            narration = "No other layout elements are annotated on the page."
        case 1:
            narration = f"The nearest layout element is {listing}."
        case n:
            narration = f"The {n} nearest layout elements are {listing}."
    step_2 = CotStep(
        2,
        narration,
        {
            "n_neighbors": len(neighbors),
            "neighbor_types": neighbor_types,
            "neighbor_boxes": neighbor_boxes,
            "neighbor_distances": neighbor_distances,
        },
    )

    context = f"its position in the {region.value} part"
    if neighbor_types:
        context += f" and the nearby {_join(list(dict.fromkeys(neighbor_types)))} elements"
    step_3 = CotStep(
        3,
        f"Given {context}, the area is a {layout_type.value} element.",
        {"region": region.value, "layout_type": layout_type.value},
    )

    return (step_1, step_2, step_3), layout_type.value


def gen_layout_analysis(
    page: DocumentPage,
    target_area: BBox,
    rng: np.random.Generator | None = None,
    k_neighbors: int = DEFAULT_K_NEIGHBORS,
    record_id: str | None = None,
) -> InstructionRecord:
    """Layout type of an area, reasoned from its region and its neighbours"""
    _require_segments(page)
    steps, answer = layout_reasoning(page, target_area, k_neighbors)

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.LAYOUT_ANALYSIS.value}",
        page_id=page.page_id,
        task=TaskKind.LAYOUT_ANALYSIS,
        question=_phrase("layout_analysis", rng, area=target_area),
        final_answer=answer,
        cot_steps=steps,
        metadata=_metadata(
            {"target_area": target_area, "k_neighbors": k_neighbors}, variant="analyze"
        ),
    )


def gen_layout_location(
    page: DocumentPage,
    layout_type: LayoutType,
    rng: np.random.Generator | None = None,
    record_id: str | None = None,
) -> InstructionRecord:
    """Boxes of every annotated element of one layout type"""
    _require_segments(page)
    if not page.layout_annotations:
        raise GenerationError(f"page {page.page_id}: no layout annotations")

    boxes = sorted(
        (item.bbox for item in page.layout_annotations if item.layout_type is layout_type),
        key=lambda box: (box.top, box.left),
    )
    if not boxes:
        raise GenerationError(f"page {page.page_id}: no {layout_type.value} element")

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.LAYOUT_ANALYSIS.value}",
        page_id=page.page_id,
        task=TaskKind.LAYOUT_ANALYSIS,
        question=_phrase("layout_location", rng, layout_type=layout_type.value.lower()),
        final_answer="\n".join(str(box) for box in boxes),
        metadata=_metadata({"layout_type": layout_type.value}, variant="locate"),
    )


# Table analysis


def table_reasoning(
    page: DocumentPage,
    row_i: int,
    col_j: int,
    min_gap: float = DEFAULT_MIN_GAP,
    column_tolerance: float = DEFAULT_COLUMN_TOLERANCE,
) -> tuple[tuple[CotStep, ...], str, StructureSource]:
    """Headers, the aligned column, then the requested row"""
    _require_segments(page)
    table = build_table_model(page, min_gap, column_tolerance)
    target = cell_at(table, row_i, col_j)

    if table.provenance is StructureSource.ANNOTATION:
        _check_against_annotation(page, table.headers[col_j - 1], row_i, target)

    header_texts = tuple(page.segment(i).text for i in table.headers)
    header_boxes = tuple(page.segment(i).bbox for i in table.headers)
    listing = ", ".join(
        f"{quote(text)} at {box}" for text, box in zip(header_texts, header_boxes, strict=True)
    )
    step_1 = CotStep(
        1,
        f"The table has {table.n_cols} header{'s' if table.n_cols != 1 else ''}: {listing}. "
        f"Column {col_j} is headed by {quote(header_texts[col_j - 1])}.",
        {
            "n_cols": table.n_cols,
            "header_texts": header_texts,
            "header_boxes": header_boxes,
            "col_j": col_j,
        },
    )

    column = table.columns[col_j - 1]
    column_texts = tuple(page.segment(i).text for i in column)
    column_boxes = tuple(page.segment(i).bbox for i in column)
    listing = ", ".join(
        f"{quote(text)} at {box}" for text, box in zip(column_texts, column_boxes, strict=True)
    )
    step_2 = CotStep(
        2,
        "Elements of a column are roughly vertically aligned with their header, "
        f"so column {col_j} contains, from top to bottom: {listing}.",
        {"col_j": col_j, "column_texts": column_texts, "column_boxes": column_boxes},
    )

    answer = page.segment(target).text
    step_3 = CotStep(
        3,
        f"The element in row {row_i} of column {col_j} is therefore {quote(answer)}.",
        {"row_i": row_i, "col_j": col_j, "answer": answer},
    )

    return (step_1, step_2, step_3), answer, table.provenance


def _check_against_annotation(
    page: DocumentPage, header_index: int, row_i: int, recovered: int
) -> None:
    table = page.table_annotations[0]
    by_segment = {cell.segment_index: cell for cell in table.cells}
    col = by_segment[header_index].col
    expected = next(
        (cell.segment_index for cell in table.body_cells if (cell.row, cell.col) == (row_i, col)),
        None,
    )
    if expected != recovered:
        raise TableStructureError(
            f"page {page.page_id}: row {row_i} under header segment {header_index} "
            f"resolves to segment {recovered}, annotation says {expected}"
        )


def gen_table_analysis(
    page: DocumentPage,
    row_i: int,
    col_j: int,
    rng: np.random.Generator | None = None,
    min_gap: float = DEFAULT_MIN_GAP,
    column_tolerance: float = DEFAULT_COLUMN_TOLERANCE,
    record_id: str | None = None,
) -> InstructionRecord:
    """Locate the element at (row_i, col_j), both 1-based and excluding the header row"""
    steps, answer, provenance = table_reasoning(page, row_i, col_j, min_gap, column_tolerance)

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.TABLE_ANALYSIS.value}",
        page_id=page.page_id,
        task=TaskKind.TABLE_ANALYSIS,
        question=_phrase("table_analysis", rng, row=row_i, col=col_j),
        final_answer=answer,
        cot_steps=steps,
        metadata=_metadata(
            {
                "row_i": row_i,
                "col_j": col_j,
                "min_gap": min_gap,
                "column_tolerance": column_tolerance,
            },
            structure_provenance=provenance.value,
        ),
    )


# Masked language and masked position


def gen_masked_language(
    page: DocumentPage,
    rng: np.random.Generator,
    mask_rate: float = DEFAULT_MASK_RATE,
    record_id: str | None = None,
) -> InstructionRecord:
    """Mask whitespace-separated words with numbered sentinels"""
    _check_mask_rate(mask_rate)
    words = " ".join(segment.text for segment in page.segments).split()
    if not words:
        raise GenerationError(f"page {page.page_id}: no text to mask")

    mask = rng.random(len(words)) < mask_rate
    if not mask.any():
        mask[rng.integers(len(words))] = True

    shown, answers = [], []
    for word, hidden in zip(words, mask, strict=True):
        if hidden:
            token = MASK_TOKEN.format(n=len(answers) + 1)
            shown.append(token)
            answers.append(f"{token}: {word}")
        else:
            shown.append(word)

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.MASKED_LANGUAGE.value}",
        page_id=page.page_id,
        task=TaskKind.MASKED_LANGUAGE,
        question=_phrase("masked_language", rng) + "\n\n" + " ".join(shown),
        final_answer="\n".join(answers),
        metadata=_metadata(
            {"mask_rate": mask_rate, "masked": np.flatnonzero(mask).tolist()}
        ),
    )


def gen_masked_position(
    page: DocumentPage,
    rng: np.random.Generator,
    mask_rate: float = DEFAULT_MASK_RATE,
    record_id: str | None = None,
) -> InstructionRecord:
    """Hide some segment boxes behind a placeholder, keeping at least one anchor"""
    _check_mask_rate(mask_rate)
    _require_segments(page, minimum=2)

    n = page.n_segments
    mask = rng.random(n) < mask_rate
    if not mask.any():
        mask[rng.integers(n)] = True
    if mask.all():
        mask[rng.integers(n)] = False

    lines = [
        position_line(segment, BOX_PLACEHOLDER if hidden else None)
        for segment, hidden in zip(page.segments, mask, strict=True)
    ]
    answers = [
        position_line(segment)
        for segment, hidden in zip(page.segments, mask, strict=True)
        if hidden
    ]

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.MASKED_POSITION.value}",
        page_id=page.page_id,
        task=TaskKind.MASKED_POSITION,
        question=_phrase("masked_position", rng) + "\n\n" + "\n".join(lines),
        final_answer="\n".join(answers),
        metadata=_metadata(
            {"mask_rate": mask_rate, "masked": np.flatnonzero(mask).tolist()}
        ),
    )


def restore_masked_text(
    question: str, answer: str, masked: Sequence[int] | None = None
) -> str:
    """Apply a masked-language answer to its question body.

    With `masked`, only the listed word positions are filled, so OCR words that
    happen to look like sentinels stay as they are.
    """
    fills = dict(line.split(": ", 1) for line in answer.split("\n"))
    words = question_body(question).split(" ")
    for position in range(len(words)) if masked is None else masked:
        words[position] = fills.get(words[position], words[position])
    return " ".join(words)


def restore_masked_boxes(question: str, answer: str) -> str:
    """Apply a masked-position answer to its question body"""
    boxes = iter(line[line.rindex("[") :] for line in answer.split("\n"))
    restored = []
    for line in question_body(question).split("\n"):
        if line.endswith(BOX_PLACEHOLDER):
            line = line.removesuffix(BOX_PLACEHOLDER) + next(boxes)
        restored.append(line)
    return "\n".join(restored)


# Geometric analysis


def _labels(page: DocumentPage, idx_a: int, idx_b: int) -> tuple[str, str, dict[str, int]]:
    a, b = page.segment(idx_a), page.segment(idx_b)
    if a.text != b.text:
        return quote(a.text), quote(b.text), {}
    # Same text twice: tell them apart by reading-order ordinal
    return (
        f"{quote(a.text)} (#{idx_a + 1})",
        f"{quote(b.text)} (#{idx_b + 1})",
        {"ordinal_a": idx_a + 1, "ordinal_b": idx_b + 1},
    )


def _projection_phrase(relation: Overlap | Gap) -> tuple[str, str, int | float]:
    match relation:
        case Overlap(length=length):
            return f"overlap by {length}", "overlap", length
        case Gap(distance=distance):
            return f"are separated by a gap of {distance}", "gap", distance


def geometric_reasoning(
    page: DocumentPage, idx_a: int, idx_b: int, query: GeometricQuery
) -> tuple[tuple[CotStep, ...], str]:
    """Boxes, projections, centers and direction, then the minimum distance"""
    if idx_a == idx_b:
        raise GenerationError(f"page {page.page_id}: the two segments must differ")
    for index in (idx_a, idx_b):
        if not 0 <= index < page.n_segments:
            raise GenerationError(f"page {page.page_id}: no segment {index}")

    label_a, label_b, ordinals = _labels(page, idx_a, idx_b)
    box_a, box_b = page.segment(idx_a).bbox, page.segment(idx_b).bbox

    step_1 = CotStep(
        1,
        f"Let A be the text {label_a} with box {box_a} "
        f"and B be the text {label_b} with box {box_b}.",
        {"box_a": box_a, "box_b": box_b, **ordinals},
    )

    relation = projection_relation(box_a, box_b)
    h_phrase, h_kind, h_value = _projection_phrase(relation.horizontal)
    v_phrase, v_kind, v_value = _projection_phrase(relation.vertical)
    step_2 = CotStep(
        2,
        f"Horizontally, the projections of A and B {h_phrase}; vertically, they {v_phrase}.",
        {
            "horizontal": h_kind,
            "horizontal_value": h_value,
            "vertical": v_kind,
            "vertical_value": v_value,
        },
    )

    center_a, center_b = center(box_a), center(box_b)
    direction = relative_direction(box_a, box_b)
    if direction is RelativeDirection.COINCIDENT:
        placement = "A and B share the same center"
    else:
        placement = f"B lies {direction.value} of A"
    step_3 = CotStep(
        3,
        f"The center of A is {center_a} and the center of B is {center_b}, so {placement}.",
        {"center_a": center_a, "center_b": center_b, "direction": direction.value},
    )

    case = distance_case(box_a, box_b)
    distance = min_distance(box_a, box_b)
    shown = format_distance(distance)
    bound: dict[str, Any] = {"case": case.value, "distance": distance}
    match case:
        case DistanceCase.OVERLAP:
            narration = (
                "Both projections overlap, so the boxes overlap and the minimum "
                f"distance is {shown}."
            )
        case DistanceCase.HORIZONTAL_GAP:
            narration = (
                "Only the vertical projections overlap, so the minimum distance is "
                f"the horizontal gap, {shown}."
            )
            bound["horizontal_gap"] = relation.horizontal_gap
        case DistanceCase.VERTICAL_GAP:
            narration = (
                "Only the horizontal projections overlap, so the minimum distance is "
                f"the vertical gap, {shown}."
            )
            bound["vertical_gap"] = relation.vertical_gap
        case DistanceCase.CORNER:
            narration = (
                "Neither projection overlaps, so the minimum distance is between the "
                f"nearest corners: the square root of {relation.horizontal_gap} squared "
                f"plus {relation.vertical_gap} squared, which is {shown}."
            )
            bound["horizontal_gap"] = relation.horizontal_gap
            bound["vertical_gap"] = relation.vertical_gap
    step_4 = CotStep(4, narration, bound)

    match query:
        case GeometricQuery.DISTANCE:
            answer = shown
        case GeometricQuery.DIRECTION:
            answer = direction.value

    return (step_1, step_2, step_3, step_4), answer


def gen_geometric_analysis(
    page: DocumentPage,
    idx_a: int,
    idx_b: int,
    query: GeometricQuery,
    rng: np.random.Generator | None = None,
    record_id: str | None = None,
) -> InstructionRecord:
    """Distance or direction between two segments, with four reasoning steps"""
    steps, answer = geometric_reasoning(page, idx_a, idx_b, query)
    label_a, label_b, _ = _labels(page, idx_a, idx_b)

    return InstructionRecord(
        record_id=record_id or f"{page.page_id}:{TaskKind.GEOMETRIC_ANALYSIS.value}",
        page_id=page.page_id,
        task=TaskKind.GEOMETRIC_ANALYSIS,
        question=_phrase(f"geometric_{query.value}", rng, a=label_a, b=label_b),
        final_answer=answer,
        cot_steps=steps,
        metadata=_metadata({"idx_a": idx_a, "idx_b": idx_b, "query": query.value}),
    )


def reasoning_for(
    task: TaskKind, page: DocumentPage, params: dict[str, Any]
) -> tuple[tuple[CotStep, ...], str]:
    """Rebuild the reasoning steps and answer of a CoT record from its parameters"""
    match task:
        case TaskKind.GEOMETRIC_ANALYSIS:
            return geometric_reasoning(
                page, params["idx_a"], params["idx_b"], GeometricQuery(params["query"])
            )
        case TaskKind.LAYOUT_ANALYSIS:
            return layout_reasoning(
                page, BBox.from_list(params["target_area"]), params["k_neighbors"]
            )
        case TaskKind.TABLE_ANALYSIS:
            steps, answer, _ = table_reasoning(
                page,
                params["row_i"],
                params["col_j"],
                params["min_gap"],
                params["column_tolerance"],
            )
            return steps, answer
        case _:
            raise GenerationError(f"{task.value} records carry no reasoning steps")


# Rendering


def render(record: InstructionRecord, mode: RenderMode) -> dict[str, str]:
    """Question and response text of a record in the given mode"""
    match mode:
        case RenderMode.WITH_COT:
            if not record.cot_steps:
                raise RenderError(record.record_id, "no reasoning steps to render")
            steps = "\n".join(f"{step.step_no}. {step.narration}" for step in record.cot_steps)
            response = f"{steps}\nAnswer: {record.final_answer}"
        case RenderMode.DIRECT_ANSWER:
            response = record.final_answer

    return {"question": record.question, "response": response}


def to_example(record: InstructionRecord, mode: RenderMode) -> RenderedExample:
    """Render a record as one training line; cot lines also carry their bound values"""
    rendered = render(record, mode)
    metadata = dict(record.metadata)
    if mode is RenderMode.WITH_COT:
        assert record.cot_steps is not None
        metadata["cot_bindings"] = [
            {"step_no": step.step_no, "bound_values": to_jsonable(step.bound_values)}
            for step in record.cot_steps
        ]
    return RenderedExample(
        record_id=record.record_id,
        page_id=record.page_id,
        task=record.task,
        mode=mode,
        metadata=metadata,
        **rendered,
    )


# Corpus-level sampling


def generate_task(
    task: TaskKind,
    page: DocumentPage,
    rng: np.random.Generator,
    settings: GenerationSettings,
    record_id: str | None = None,
) -> InstructionRecord:
    """Draw task parameters from `rng` and run the matching generator"""
    _require_segments(page)

    match task:
        case TaskKind.DOCUMENT_DESCRIPTION:
            return gen_document_description(page, rng, record_id)
        case TaskKind.TEXT_BOX_RECONSTRUCTION:
            return gen_text_box_reconstruction(
                page, rng, min(settings.sample_k, page.n_segments), record_id
            )
        case TaskKind.LAYOUT_ANALYSIS:
            if not page.layout_annotations:
                raise GenerationError(f"page {page.page_id}: no layout annotations")
            annotations = page.layout_annotations
            chosen = annotations[int(rng.integers(len(annotations)))]
            if rng.random() < 0.5:
                return gen_layout_location(page, chosen.layout_type, rng, record_id)
            return gen_layout_analysis(
                page, chosen.bbox, rng, settings.k_neighbors, record_id
            )
        case TaskKind.TABLE_ANALYSIS:
            if not page.table_annotations and not settings.recover_tables:
                raise GenerationError(f"page {page.page_id}: no table annotation")
            table = build_table_model(page, settings.min_gap, settings.column_tolerance)
            filled = [j for j, column in enumerate(table.columns, 1) if column]
            if not filled:
                raise GenerationError(f"page {page.page_id}: table has no body cells")
            col_j = filled[int(rng.integers(len(filled)))]
            row_i = int(rng.integers(len(table.columns[col_j - 1]))) + 1
            return gen_table_analysis(
                page,
                row_i,
                col_j,
                rng,
                settings.min_gap,
                settings.column_tolerance,
                record_id,
            )
        case TaskKind.MASKED_LANGUAGE:
            return gen_masked_language(page, rng, settings.mask_rate, record_id)
        case TaskKind.MASKED_POSITION:
            return gen_masked_position(page, rng, settings.mask_rate, record_id)
        case TaskKind.GEOMETRIC_ANALYSIS:
            _require_segments(page, minimum=2)
            idx_a, idx_b = (int(i) for i in rng.choice(page.n_segments, 2, replace=False))
            query = GeometricQuery.DISTANCE if rng.random() < 0.5 else GeometricQuery.DIRECTION
            return gen_geometric_analysis(page, idx_a, idx_b, query, rng, record_id)
