"""Recursive XY-Cut segmentation and table structure recovery.

`xy_cut` splits a set of segments at whitespace gaps of the projection
profile, alternating axes and starting with rows. The table helpers build on
it to find the header row and assign body cells to header columns.
"""

import dataclasses
import logging
from collections.abc import Iterable, Iterator, Sequence
from dataclasses import dataclass, field
from enum import Enum

from .document import DocumentPage, TextSegment
from .exceptions import TableRangeError, TableStructureError, XYCutError
from .geometry import BBox, Overlap, center, interval_relation, union_box

# Set logger
logger = logging.getLogger(__name__)

DEFAULT_MIN_GAP = 10
DEFAULT_COLUMN_TOLERANCE = 50


class CutAxis(Enum):
    # A horizontal cut line splits along y, producing rows
    HORIZONTAL = "horizontal"
    VERTICAL = "vertical"
    LEAF = "leaf"


@dataclass(frozen=True, slots=True)
class BlockNode:
    bbox: BBox
    members: tuple[int, ...]
    cut_axis: CutAxis
    children: tuple["BlockNode", ...] = ()

    def leaves(self) -> Iterator["BlockNode"]:
        if self.cut_axis is CutAxis.LEAF:
            yield self
            return
        for child in self.children:
            yield from child.leaves()


class StructureSource(Enum):
    ANNOTATION = "annotation"
    XYCUT = "xycut"


@dataclass(frozen=True)
class TableModel:
    headers: tuple[int, ...]
    columns: tuple[tuple[int, ...], ...]
    unassigned: tuple[int, ...] = ()
    tolerance: float = DEFAULT_COLUMN_TOLERANCE
    provenance: StructureSource = StructureSource.XYCUT
    boxes: dict[int, BBox] = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_cols(self) -> int:
        return len(self.headers)

    @property
    def n_rows(self) -> int:
        """Header row plus the longest column"""
        return 1 + max((len(column) for column in self.columns), default=0)


def _split(
    segments: Sequence[TextSegment], axis: CutAxis, min_gap: float
) -> list[list[TextSegment]]:
    """Groups of segments separated by gaps of at least `min_gap` along `axis`"""

    def span(segment: TextSegment) -> tuple[int, int]:
        box = segment.bbox
        if axis is CutAxis.HORIZONTAL:
            return box.top, box.bottom
        return box.left, box.right

    ordered = sorted(segments, key=lambda s: (*span(s), s.index))
    groups = [[ordered[0]]]
    reach = span(ordered[0])[1]
    for segment in ordered[1:]:
        lo, hi = span(segment)
        if lo - reach >= min_gap:
            groups.append([segment])
        else:
            groups[-1].append(segment)
        reach = max(reach, hi)
    return groups


def _other(axis: CutAxis) -> CutAxis:
    return CutAxis.VERTICAL if axis is CutAxis.HORIZONTAL else CutAxis.HORIZONTAL


def _cut(segments: Sequence[TextSegment], axis: CutAxis, min_gap: float) -> BlockNode:
    bbox = union_box(segment.bbox for segment in segments)
    members = tuple(sorted(segment.index for segment in segments))

    for candidate in (axis, _other(axis)):
        groups = _split(segments, candidate, min_gap)
        if len(groups) > 1:
            children = tuple(
                _cut(group, _other(candidate), min_gap) for group in groups
            )
            return BlockNode(bbox, members, candidate, children)

    return BlockNode(bbox, members, CutAxis.LEAF)


def xy_cut(segments: Iterable[TextSegment], min_gap: float = DEFAULT_MIN_GAP) -> BlockNode:
    """Recursive XY-Cut over segment boxes, rows first"""
    segments = list(segments)
    if not segments:
        raise XYCutError("XY-Cut needs at least one segment")
    if min_gap <= 0:
        raise XYCutError(f"min_gap must be positive, got {min_gap}")

    return _cut(segments, CutAxis.HORIZONTAL, min_gap)


def _by_left(indices: Iterable[int], boxes: dict[int, BBox]) -> tuple[int, ...]:
    return tuple(sorted(indices, key=lambda i: (boxes[i].left, i)))


def detect_headers(
    page: DocumentPage, min_gap: float = DEFAULT_MIN_GAP, table_index: int = 0
) -> tuple[int, ...]:
    """Header segment indices, left to right"""
    if not page.segments:
        raise TableStructureError(f"page {page.page_id}: no segments")

    boxes = {segment.index: segment.bbox for segment in page.segments}

    if page.table_annotations:
        table = page.table_annotations[table_index]
        header_cells = table.header_cells
        if not header_cells:
            raise TableStructureError(
                f"page {page.page_id}: table annotation has no header cells"
            )
        return _by_left((cell.segment_index for cell in header_cells), boxes)

    root = xy_cut(page.segments, min_gap)
    top_row = root.children[0] if root.cut_axis is CutAxis.HORIZONTAL else root
    return _by_left(top_row.members, boxes)


def assign_columns(
    headers: Sequence[TextSegment],
    body_cells: Iterable[TextSegment],
    tolerance: float = DEFAULT_COLUMN_TOLERANCE,
) -> TableModel:
    """Attach each body cell to the closest eligible header column.

    A header is eligible for a cell when their center-x values differ by at most
    `tolerance` or their x-intervals overlap. Equidistant headers resolve to the
    leftmost one; cells with no eligible header end up in `unassigned`.
    """
    if not headers:
        raise TableStructureError("Cannot assign columns without headers")
    if tolerance < 0:
        raise TableStructureError(f"tolerance must be non-negative, got {tolerance}")

    header_cx = [center(header.bbox).x for header in headers]
    columns: list[list[TextSegment]] = [[] for _ in headers]
    unassigned = []

    for cell in body_cells:
        cx = center(cell.bbox).x
        eligible = [
            (abs(cx - header_cx[j]), j)
            for j, header in enumerate(headers)
            if abs(cx - header_cx[j]) <= tolerance
            or isinstance(
                interval_relation(cell.bbox.x_interval, header.bbox.x_interval), Overlap
            )
        ]
        if not eligible:
            unassigned.append(cell.index)
            continue
        _, j = min(eligible)
        columns[j].append(cell)

    boxes = {segment.index: segment.bbox for segment in headers}
    for column in columns:
        boxes.update((cell.index, cell.bbox) for cell in column)

    return TableModel(
        headers=tuple(header.index for header in headers),
        columns=tuple(
            tuple(cell.index for cell in sorted(column, key=lambda c: (c.bbox.top, c.index)))
            for column in columns
        ),
        unassigned=tuple(unassigned),
        tolerance=tolerance,
        boxes=boxes,
    )


def cell_at(table: TableModel, row_i: int, col_j: int) -> int:
    """Segment index of the `row_i`-th content cell of column `col_j` (both 1-based)"""
    if not 1 <= col_j <= table.n_cols:
        raise TableRangeError("column", col_j, table.n_cols)
    column = table.columns[col_j - 1]
    if not 1 <= row_i <= len(column):
        raise TableRangeError(f"row (column {col_j})", row_i, len(column))
    return column[row_i - 1]


def build_table_model(
    page: DocumentPage,
    min_gap: float = DEFAULT_MIN_GAP,
    tolerance: float = DEFAULT_COLUMN_TOLERANCE,
    table_index: int = 0,
) -> TableModel:
    """Table structure of a page, from its annotation when present, else via XY-Cut"""
    header_indices = detect_headers(page, min_gap, table_index)
    header_set = set(header_indices)

    if page.table_annotations:
        provenance = StructureSource.ANNOTATION
        body_indices = [
            cell.segment_index
            for cell in page.table_annotations[table_index].body_cells
        ]
    else:
        provenance = StructureSource.XYCUT
        body_indices = [
            segment.index for segment in page.segments if segment.index not in header_set
        ]

    model = assign_columns(
        [page.segment(i) for i in header_indices],
        [page.segment(i) for i in body_indices],
        tolerance,
    )
    if model.unassigned:
        logger.debug(
            "page %s: %d cells matched no header column",
            page.page_id,
            len(model.unassigned),
        )

    return dataclasses.replace(model, provenance=provenance)

