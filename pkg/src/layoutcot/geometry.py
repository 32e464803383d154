"""Geometric primitives over axis-aligned OCR bounding boxes.

Boxes live on a normalized integer grid of [0, 1000] per axis, with y growing
downward. Every function here is pure.
"""

import math
from collections.abc import Iterable
from dataclasses import dataclass
from enum import Enum

from .exceptions import BoxValidationError, NeighborSearchError

COORD_MAX = 1000

_BOX_FIELDS = ("left", "top", "right", "bottom")


@dataclass(frozen=True, slots=True)
class BBox:
    """A normalized bounding box [left, top, right, bottom]"""

    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self) -> None:
        for name in _BOX_FIELDS:
            value = getattr(self, name)
            if not 0 <= value <= COORD_MAX:
                raise BoxValidationError(
                    name, value, f"must lie in [0, {COORD_MAX}]"
                )
        if self.left > self.right:
            raise BoxValidationError(
                "left/right", (self.left, self.right), "left exceeds right"
            )
        if self.top > self.bottom:
            raise BoxValidationError(
                "top/bottom", (self.top, self.bottom), "top exceeds bottom"
            )

    @classmethod
    def from_list(cls, values: Iterable[int]) -> "BBox":
        left, top, right, bottom = values
        return cls(int(left), int(top), int(right), int(bottom))

    def to_list(self) -> list[int]:
        return [self.left, self.top, self.right, self.bottom]

    def __str__(self) -> str:
        return f"[{self.left}, {self.top}, {self.right}, {self.bottom}]"

    @property
    def width(self) -> int:
        return self.right - self.left

    @property
    def height(self) -> int:
        return self.bottom - self.top

    @property
    def area(self) -> int:
        return self.width * self.height

    @property
    def x_interval(self) -> "Interval":
        return Interval(self.left, self.right)

    @property
    def y_interval(self) -> "Interval":
        return Interval(self.top, self.bottom)

    def intersection_area(self, other: "BBox") -> int:
        """Area shared by both boxes (0 when they only touch or are apart)"""
        width = min(self.right, other.right) - max(self.left, other.left)
        height = min(self.bottom, other.bottom) - max(self.top, other.top)
        return max(0, width) * max(0, height)

    def contains_point(self, point: "Point") -> bool:
        return (
            self.left <= point.x <= self.right and self.top <= point.y <= self.bottom
        )

    def shifted(self, dx: int, dy: int) -> "BBox":
        return BBox(self.left + dx, self.top + dy, self.right + dx, self.bottom + dy)


def union_box(boxes: Iterable[BBox]) -> BBox:
    """Tight box around all given boxes"""
    boxes = list(boxes)
    if not boxes:
        raise BoxValidationError("boxes", boxes, "cannot take the union of nothing")
    return BBox(
        min(b.left for b in boxes),
        min(b.top for b in boxes),
        max(b.right for b in boxes),
        max(b.bottom for b in boxes),
    )


@dataclass(frozen=True, slots=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.lo > self.hi:
            raise BoxValidationError("lo/hi", (self.lo, self.hi), "lo exceeds hi")


@dataclass(frozen=True, slots=True)
class Overlap:
    length: float


@dataclass(frozen=True, slots=True)
class Gap:
    distance: float


@dataclass(frozen=True, slots=True)
class ProjectionRelation:
    horizontal: Overlap | Gap
    vertical: Overlap | Gap

    @property
    def horizontal_gap(self) -> float:
        return self.horizontal.distance if isinstance(self.horizontal, Gap) else 0

    @property
    def vertical_gap(self) -> float:
        return self.vertical.distance if isinstance(self.vertical, Gap) else 0


@dataclass(frozen=True, slots=True)
class Point:
    x: float
    y: float

    def __str__(self) -> str:
        return f"({self.x:g}, {self.y:g})"


class RelativeDirection(Enum):
    ABOVE = "above"
    BELOW = "below"
    LEFT = "left"
    RIGHT = "right"
    ABOVE_LEFT = "above-left"
    ABOVE_RIGHT = "above-right"
    BELOW_LEFT = "below-left"
    BELOW_RIGHT = "below-right"
    COINCIDENT = "coincident"

    @property
    def opposite(self) -> "RelativeDirection":
        return _OPPOSITES[self]


_OPPOSITES = {
    RelativeDirection.ABOVE: RelativeDirection.BELOW,
    RelativeDirection.BELOW: RelativeDirection.ABOVE,
    RelativeDirection.LEFT: RelativeDirection.RIGHT,
    RelativeDirection.RIGHT: RelativeDirection.LEFT,
    RelativeDirection.ABOVE_LEFT: RelativeDirection.BELOW_RIGHT,
    RelativeDirection.BELOW_RIGHT: RelativeDirection.ABOVE_LEFT,
    RelativeDirection.ABOVE_RIGHT: RelativeDirection.BELOW_LEFT,
    RelativeDirection.BELOW_LEFT: RelativeDirection.ABOVE_RIGHT,
    RelativeDirection.COINCIDENT: RelativeDirection.COINCIDENT,
}


class PageRegion(Enum):
    TOP_LEFT = "top-left"
    TOP_CENTER = "top-center"
    TOP_RIGHT = "top-right"
    MIDDLE_LEFT = "middle-left"
    CENTER = "center"
    MIDDLE_RIGHT = "middle-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_CENTER = "bottom-center"
    BOTTOM_RIGHT = "bottom-right"


# Row-major 3x3 grid
_REGION_GRID = tuple(PageRegion)


class DistanceCase(Enum):
    """Which branch of the minimum-distance rule applies to a box pair"""

    OVERLAP = "overlap"
    HORIZONTAL_GAP = "horizontal-gap"
    VERTICAL_GAP = "vertical-gap"
    CORNER = "corner"


def interval_relation(a: Interval, b: Interval) -> Overlap | Gap:
    """Overlap length of two intervals, or the gap between them"""
    shared = min(a.hi, b.hi) - max(a.lo, b.lo)
    if shared >= 0:
        return Overlap(shared)
    return Gap(-shared)


def projection_relation(a: BBox, b: BBox) -> ProjectionRelation:
    return ProjectionRelation(
        horizontal=interval_relation(a.x_interval, b.x_interval),
        vertical=interval_relation(a.y_interval, b.y_interval),
    )


def center(b: BBox) -> Point:
    return Point((b.left + b.right) / 2, (b.top + b.bottom) / 2)


def relative_direction(a: BBox, b: BBox) -> RelativeDirection:
    """Where the center of `b` lies as seen from the center of `a`"""
    ca, cb = center(a), center(b)
    dx, dy = cb.x - ca.x, cb.y - ca.y

    match (dx > 0) - (dx < 0), (dy > 0) - (dy < 0):
        case 0, 0:
            return RelativeDirection.COINCIDENT
        case 0, -1:
            return RelativeDirection.ABOVE
        case 0, 1:
            return RelativeDirection.BELOW
        case -1, 0:
            return RelativeDirection.LEFT
        case 1, 0:
            return RelativeDirection.RIGHT
        case -1, -1:
            return RelativeDirection.ABOVE_LEFT
        case 1, -1:
            return RelativeDirection.ABOVE_RIGHT
        case -1, 1:
            return RelativeDirection.BELOW_LEFT
        case _:
            return RelativeDirection.BELOW_RIGHT


def distance_case(a: BBox, b: BBox) -> DistanceCase:
    relation = projection_relation(a, b)
    match relation.horizontal, relation.vertical:
        case Overlap(), Overlap():
            return DistanceCase.OVERLAP
        case Gap(), Overlap():
            return DistanceCase.HORIZONTAL_GAP
        case Overlap(), Gap():
            return DistanceCase.VERTICAL_GAP
        case _:
            return DistanceCase.CORNER


def min_distance(a: BBox, b: BBox) -> float:
    """Minimum Euclidean distance between two boxes (0 when they overlap or touch)"""
    relation = projection_relation(a, b)
    match distance_case(a, b):
        case DistanceCase.OVERLAP:
            return 0.0
        case DistanceCase.HORIZONTAL_GAP:
            return float(relation.horizontal_gap)
        case DistanceCase.VERTICAL_GAP:
            return float(relation.vertical_gap)
        case _:
            return math.hypot(relation.horizontal_gap, relation.vertical_gap)


def nearest_segments(
    target: BBox,
    candidates: Iterable[tuple[int, BBox]],
    k: int,
    target_index: int | None = None,
) -> list[int]:
    """Indices of the `k` candidates closest to `target`.

    Ordering is by distance, ties broken by the smaller reading-order index.
    A candidate carrying `target_index` is skipped.
    """
    if k < 1:
        raise NeighborSearchError(f"k must be positive, got {k}")

    candidates = list(candidates)
    if not candidates:
        raise NeighborSearchError("No candidate boxes to search")

    ranked = sorted(
        (min_distance(target, box), index)
        for index, box in candidates
        if index != target_index
    )
    return [index for _, index in ranked[:k]]


def _third(coordinate: float, extent: float, axis: str) -> int:
    if not 0 <= coordinate <= extent:
        raise BoxValidationError(
            axis, coordinate, f"box center lies outside the page extent [0, {extent}]"
        )
    # Boundary points belong to the lower third
    if 3 * coordinate <= extent:
        return 0
    if 3 * coordinate <= 2 * extent:
        return 1
    return 2


def page_region(
    b: BBox, page_width: float = COORD_MAX, page_height: float = COORD_MAX
) -> PageRegion:
    """Coarse 3x3 region of the page holding the center of `b`"""
    if page_width <= 0 or page_height <= 0:
        raise BoxValidationError(
            "page size", (page_width, page_height), "must be positive"
        )

    c = center(b)
    col = _third(c.x, page_width, "x")
    row = _third(c.y, page_height, "y")
    return _REGION_GRID[3 * row + col]
