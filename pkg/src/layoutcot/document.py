"""OCR page data model and ingestion.

Raw OCR records are validated with pydantic, then turned into immutable
`DocumentPage` objects whose boxes are normalized onto the [0, 1000] grid.
"""

import dataclasses
import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .exceptions import BoxValidationError, IngestError
from .geometry import COORD_MAX, BBox

# Set logger
logger = logging.getLogger(__name__)

# How far a raw coordinate may run past the page edge before it is rejected
CLAMP_TOLERANCE = 0.01


class LayoutType(Enum):
    TITLE = "Title"
    AUTHOR = "Author"
    PARAGRAPH = "Paragraph"
    LIST = "List"
    TABLE = "Table"
    FIGURE = "Figure"
    CAPTION = "Caption"
    HEADER = "Header"
    FOOTER = "Footer"
    OTHER = "Other"

    @classmethod
    def from_label(cls, label: str) -> "LayoutType":
        """Map a source label onto the closed vocabulary, falling back to Other"""
        for member in cls:
            if member.value.lower() == label.strip().lower():
                return member
        logger.warning("Unknown layout label %r mapped to Other", label)
        return cls.OTHER


@dataclass(frozen=True, slots=True)
class TextSegment:
    index: int
    text: str
    bbox: BBox


@dataclass(frozen=True, slots=True)
class LayoutAnnotation:
    bbox: BBox
    layout_type: LayoutType


@dataclass(frozen=True, slots=True)
class TableCell:
    segment_index: int
    row: int
    col: int
    is_header: bool = False


@dataclass(frozen=True, slots=True)
class TableAnnotation:
    cells: tuple[TableCell, ...]

    @property
    def header_cells(self) -> tuple[TableCell, ...]:
        return tuple(cell for cell in self.cells if cell.is_header)

    @property
    def body_cells(self) -> tuple[TableCell, ...]:
        return tuple(cell for cell in self.cells if not cell.is_header)


@dataclass(frozen=True, slots=True)
class DocumentPage:
    """One ingested OCR page"""

    page_id: str
    raw_width: float
    raw_height: float
    segments: tuple[TextSegment, ...]
    layout_annotations: tuple[LayoutAnnotation, ...] | None = None
    table_annotations: tuple[TableAnnotation, ...] | None = None
    image_ref: str | None = None

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    def segment(self, index: int) -> TextSegment:
        return self.segments[index]


# Raw JSON schema


class RawSegment(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    text: str
    box: tuple[float, float, float, float]


class RawLayout(BaseModel):
    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    box: tuple[float, float, float, float]
    type: str


class RawTableCell(BaseModel):
    model_config = ConfigDict(extra="forbid")

    segment: int = Field(ge=0)
    row: int = Field(ge=0)
    col: int = Field(ge=0)
    header: bool = False


class RawTable(BaseModel):
    model_config = ConfigDict(extra="forbid")

    cells: list[RawTableCell]


class RawPage(BaseModel):
    """The OCR input record, one page per JSONL line"""

    model_config = ConfigDict(extra="forbid", allow_inf_nan=False)

    page_id: str
    width: float
    height: float
    segments: list[RawSegment] = Field(default_factory=list)
    layout: list[RawLayout] | None = None
    table: RawTable | list[RawTable] | None = None
    image: str | None = None
    # Set on records we emit ourselves: boxes are already on the normalized grid
    normalized: bool = False


def _field_path(loc: Sequence[int | str]) -> str:
    path = ""
    for part in loc:
        path += f"[{part}]" if isinstance(part, int) else (f".{part}" if path else part)
    return path


def normalize_box(
    raw_box: Sequence[float],
    raw_width: float,
    raw_height: float,
    page_id: str,
    path: str,
) -> BBox:
    """Scale a raw box onto the [0, 1000] grid with floor, then clamp"""
    extents = (raw_width, raw_height, raw_width, raw_height)
    coordinates = []
    for name, value, extent in zip(
        ("left", "top", "right", "bottom"), raw_box, extents, strict=True
    ):
        if not math.isfinite(value):
            raise IngestError(page_id, f"{path}.{name}", f"non-finite coordinate {value}")
        if value < 0:
            raise IngestError(page_id, f"{path}.{name}", f"negative coordinate {value}")
        if value > extent * (1 + CLAMP_TOLERANCE):
            raise IngestError(
                page_id, f"{path}.{name}", f"coordinate {value} outside page extent {extent}"
            )
        scaled = math.floor(value * COORD_MAX / extent)
        coordinates.append(min(max(scaled, 0), COORD_MAX))

    try:
        return BBox.from_list(coordinates)
    except BoxValidationError as err:
        raise IngestError(page_id, f"{path}.{err.field}", str(err)) from err


def _as_box(raw_box: Sequence[float], page_id: str, path: str) -> BBox:
    """Take an already-normalized box as is"""
    if any(value != int(value) for value in raw_box):
        raise IngestError(page_id, path, "normalized boxes must hold integers")
    try:
        return BBox.from_list(int(value) for value in raw_box)
    except BoxValidationError as err:
        raise IngestError(page_id, f"{path}.{err.field}", str(err)) from err


def ingest_page(raw: dict[str, Any] | str | bytes) -> DocumentPage:
    """Validate a raw OCR record and build a normalized `DocumentPage`"""
    try:
        if isinstance(raw, str | bytes):
            record = RawPage.model_validate_json(raw)
        else:
            record = RawPage.model_validate(raw)
    except ValidationError as err:
        first = err.errors()[0]
        page_id = raw.get("page_id") if isinstance(raw, dict) else None
        raise IngestError(
            page_id if isinstance(page_id, str) else None,
            _field_path(first["loc"]) or "<record>",
            first["msg"],
        ) from err

    page_id = record.page_id
    for name, value in (("width", record.width), ("height", record.height)):
        if not math.isfinite(value) or value <= 0:
            raise IngestError(
                page_id, name, f"page dimension must be positive and finite, got {value}"
            )

    def to_box(raw_box: Sequence[float], path: str) -> BBox:
        if record.normalized:
            return _as_box(raw_box, page_id, path)
        return normalize_box(raw_box, record.width, record.height, page_id, path)

    segments = []
    for i, raw_segment in enumerate(record.segments):
        if not raw_segment.text.strip():
            raise IngestError(page_id, f"segments[{i}].text", "empty text")
        segments.append(
            TextSegment(
                index=i,
                text=raw_segment.text,
                bbox=to_box(raw_segment.box, f"segments[{i}].box"),
            )
        )

    layout = None
    if record.layout is not None:
        layout = tuple(
            LayoutAnnotation(
                bbox=to_box(item.box, f"layout[{i}].box"),
                layout_type=LayoutType.from_label(item.type),
            )
            for i, item in enumerate(record.layout)
        )

    tables = None
    if record.table is not None:
        raw_tables = record.table if isinstance(record.table, list) else [record.table]
        tables = tuple(
            _build_table(raw_table, len(segments), page_id, f"table[{t}]")
            for t, raw_table in enumerate(raw_tables)
        )

    return DocumentPage(
        page_id=page_id,
        raw_width=record.width,
        raw_height=record.height,
        segments=tuple(segments),
        layout_annotations=layout,
        table_annotations=tables,
        image_ref=record.image,
    )


def _build_table(
    raw_table: RawTable, n_segments: int, page_id: str, path: str
) -> TableAnnotation:
    seen: set[tuple[int, int]] = set()
    cells = []
    for i, raw_cell in enumerate(raw_table.cells):
        cell_path = f"{path}.cells[{i}]"
        if raw_cell.segment >= n_segments:
            raise IngestError(
                page_id, f"{cell_path}.segment", f"no segment {raw_cell.segment}"
            )
        if (raw_cell.row, raw_cell.col) in seen:
            raise IngestError(
                page_id, cell_path, f"duplicate cell ({raw_cell.row}, {raw_cell.col})"
            )
        if raw_cell.header and raw_cell.row != 0:
            raise IngestError(
                page_id, f"{cell_path}.row", "header cells must sit in row 0"
            )
        seen.add((raw_cell.row, raw_cell.col))
        cells.append(
            TableCell(
                segment_index=raw_cell.segment,
                row=raw_cell.row,
                col=raw_cell.col,
                is_header=raw_cell.header,
            )
        )
    return TableAnnotation(cells=tuple(cells))


def serialize_page(page: DocumentPage) -> dict[str, Any]:
    """JSON-ready form of a page; re-ingesting it yields an identical page"""
    record: dict[str, Any] = {
        "page_id": page.page_id,
        "width": page.raw_width,
        "height": page.raw_height,
        "segments": [
            {"text": segment.text, "box": segment.bbox.to_list()}
            for segment in page.segments
        ],
    }
    if page.layout_annotations is not None:
        record["layout"] = [
            {"box": item.bbox.to_list(), "type": item.layout_type.value}
            for item in page.layout_annotations
        ]
    if page.table_annotations is not None:
        record["table"] = [
            {
                "cells": [
                    {
                        "segment": cell.segment_index,
                        "row": cell.row,
                        "col": cell.col,
                        "header": cell.is_header,
                    }
                    for cell in table.cells
                ]
            }
            for table in page.table_annotations
        ]
    if page.image_ref is not None:
        record["image"] = page.image_ref
    record["normalized"] = True
    return record


def _reading_key(segment: TextSegment) -> tuple[int, int]:
    return segment.bbox.top, segment.bbox.left


def reading_order_sort(segments: Iterable[TextSegment]) -> list[TextSegment]:
    """Stable (top, left) sort; indices are reassigned to the new order"""
    ordered = sorted(segments, key=_reading_key)
    return [dataclasses.replace(segment, index=i) for i, segment in enumerate(ordered)]


def sort_page(page: DocumentPage) -> DocumentPage:
    """Put a page in reading order, remapping table annotations to the new indices"""
    ordered = sorted(page.segments, key=_reading_key)
    remap = {segment.index: i for i, segment in enumerate(ordered)}

    tables = page.table_annotations
    if tables is not None:
        tables = tuple(
            TableAnnotation(
                cells=tuple(
                    dataclasses.replace(cell, segment_index=remap[cell.segment_index])
                    for cell in table.cells
                )
            )
            for table in tables
        )

    return dataclasses.replace(
        page,
        segments=tuple(
            dataclasses.replace(segment, index=i) for i, segment in enumerate(ordered)
        ),
        table_annotations=tables,
    )
