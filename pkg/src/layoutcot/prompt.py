"""Prompt assembly over patches, OCR segments and boxes"""

import csv
import logging
import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import ClassVar, Protocol

from .document import DocumentPage, TextSegment
from .exceptions import PromptError

# Set logger
logger = logging.getLogger(__name__)

DEFAULT_IMAGE_SIDE = 224
DEFAULT_PATCH_SIDE = 16
DEFAULT_MAX_LENGTH = 2560

PREAMBLE = "Given the document patches:"
CONNECTIVE = (
    "and the document text contents and locations in the form of "
    '"text, [left, top, right, bottom]":'
)

LENGTH_REPORT_COLUMNS = ("page_id", "n_segments", "len_mode_I", "len_mode_II")


class SlotKind(Enum):
    FIXED_TEXT = "fixed_text"
    SEGMENT_TEXT = "segment_text"
    BOX = "box"
    PATCH = "patch"
    QUESTION = "question"


class EmbeddingSource(Enum):
    TEXT = "TE"
    VISUAL = "VE+VP"
    LAYOUT = "LE+LP"


class CoordMode(Enum):
    """How OCR boxes enter the prompt"""

    TEXTUAL = "I"
    EMBEDDED = "II"


@dataclass(frozen=True, slots=True)
class FixedText:
    kind: ClassVar[SlotKind] = SlotKind.FIXED_TEXT
    text: str


@dataclass(frozen=True, slots=True)
class SegmentText:
    kind: ClassVar[SlotKind] = SlotKind.SEGMENT_TEXT
    index: int


@dataclass(frozen=True, slots=True)
class BoxSlot:
    kind: ClassVar[SlotKind] = SlotKind.BOX
    index: int


@dataclass(frozen=True, slots=True)
class PatchSlot:
    kind: ClassVar[SlotKind] = SlotKind.PATCH
    index: int


@dataclass(frozen=True, slots=True)
class QuestionText:
    kind: ClassVar[SlotKind] = SlotKind.QUESTION
    text: str


PromptSlot = FixedText | SegmentText | BoxSlot | PatchSlot | QuestionText

_SOURCES = {
    SlotKind.FIXED_TEXT: EmbeddingSource.TEXT,
    SlotKind.SEGMENT_TEXT: EmbeddingSource.TEXT,
    SlotKind.QUESTION: EmbeddingSource.TEXT,
    SlotKind.PATCH: EmbeddingSource.VISUAL,
    SlotKind.BOX: EmbeddingSource.LAYOUT,
}


def patch_count(image_side: int, patch_side: int) -> int:
    """Number of square patches covering a square image"""
    if image_side < 1 or patch_side < 1:
        raise PromptError(
            f"image side {image_side} and patch side {patch_side} must be positive"
        )
    if image_side % patch_side:
        raise PromptError(
            f"image side {image_side} is not divisible by patch side {patch_side}"
        )
    return (image_side // patch_side) ** 2


@dataclass(frozen=True)
class PatchGrid:
    image_side: int = DEFAULT_IMAGE_SIDE
    patch_side: int = DEFAULT_PATCH_SIDE

    def __post_init__(self) -> None:
        patch_count(self.image_side, self.patch_side)

    @property
    def M(self) -> int:  # noqa: N802
        return patch_count(self.image_side, self.patch_side)


@dataclass(frozen=True)
class PromptSlotSequence:
    """An assembled prompt: typed slots in template order"""

    page: DocumentPage
    grid: PatchGrid
    mode: CoordMode
    slots: tuple[PromptSlot, ...]

    def __post_init__(self) -> None:
        for slot in self.slots:
            match slot:
                case SegmentText(index=i) | BoxSlot(index=i) if not 0 <= i < self.page.n_segments:
                    raise PromptError(f"slot references missing segment {i}")
                case PatchSlot(index=i) if not 0 <= i < self.grid.M:
                    raise PromptError(f"patch {i} outside [0, {self.grid.M})")

    def count(self, kind: SlotKind) -> int:
        return sum(1 for slot in self.slots if slot.kind is kind)

    @property
    def segment_indices(self) -> list[int]:
        return [slot.index for slot in self.slots if isinstance(slot, SegmentText)]

    def to_text(self) -> str:
        """Readable rendering with placeholders for embedded slots"""
        parts = []
        for slot in self.slots:
            match slot:
                case FixedText(text=text) | QuestionText(text=text):
                    parts.append(text)
                case SegmentText(index=i):
                    parts.append(self.page.segment(i).text)
                case BoxSlot(index=i):
                    parts.append(f"<box_{i}>")
                case PatchSlot(index=i):
                    parts.append(f"<patch_{i}>")
        return " ".join(parts)


def _prompt_order(segments: Iterable[TextSegment]) -> list[TextSegment]:
    return sorted(segments, key=lambda s: (s.bbox.top, s.bbox.left, s.index))


def assemble(
    page: DocumentPage,
    question: str,
    mode: CoordMode = CoordMode.EMBEDDED,
    grid: PatchGrid | None = None,
) -> PromptSlotSequence:
    """Lay out patches, segments and the question in template order"""
    if not question.strip():
        raise PromptError("question must not be empty")
    grid = grid or PatchGrid()

    slots: list[PromptSlot] = [FixedText(PREAMBLE)]
    slots.extend(PatchSlot(i) for i in range(grid.M))
    slots.append(FixedText(CONNECTIVE))
    for segment in _prompt_order(page.segments):
        slots.append(SegmentText(segment.index))
        match mode:
            case CoordMode.TEXTUAL:
                slots.append(FixedText(str(segment.bbox)))
            case CoordMode.EMBEDDED:
                slots.append(BoxSlot(segment.index))
    slots.append(QuestionText(question))

    return PromptSlotSequence(page=page, grid=grid, mode=mode, slots=tuple(slots))


class TokenCounter(Protocol):
    def __call__(self, text: str) -> int: ...


_WORD_OR_PUNCT = re.compile(r"\w+|[^\w\s]")


def default_counter(text: str) -> int:
    """Words plus standalone punctuation marks"""
    return len(_WORD_OR_PUNCT.findall(text))


@dataclass(frozen=True)
class ShapeEntry:
    kind: SlotKind
    tokens: int
    source: EmbeddingSource


@dataclass(frozen=True)
class FeatureSequenceShape:
    """Per-slot token counts and embedding sources of an assembled prompt"""

    entries: tuple[ShapeEntry, ...] = ()

    @property
    def total(self) -> int:
        return sum(entry.tokens for entry in self.entries)

    def tokens_from(self, source: EmbeddingSource) -> int:
        return sum(e.tokens for e in self.entries if e.source is source)

    def __add__(self, other: "FeatureSequenceShape") -> "FeatureSequenceShape":
        return FeatureSequenceShape(self.entries + other.entries)


def _slot_text(seq: PromptSlotSequence, slot: PromptSlot) -> str:
    match slot:
        case FixedText(text=text) | QuestionText(text=text):
            return text
        case SegmentText(index=i):
            return seq.page.segment(i).text
    raise PromptError(f"{slot.kind.value} slot has no text")


def sequence_shape(
    seq: PromptSlotSequence,
    counter: TokenCounter = default_counter,
    box_tokens_per_slot: int = 1,
    patch_tokens_per_slot: int = 1,
) -> FeatureSequenceShape:
    if box_tokens_per_slot < 1 or patch_tokens_per_slot < 1:
        raise PromptError("tokens per box and per patch must be positive")

    entries = []
    for slot in seq.slots:
        match slot.kind:
            case SlotKind.PATCH:
                tokens = patch_tokens_per_slot
            case SlotKind.BOX:
                tokens = box_tokens_per_slot
            case _:
                tokens = counter(_slot_text(seq, slot))
        entries.append(ShapeEntry(slot.kind, tokens, _SOURCES[slot.kind]))
    return FeatureSequenceShape(tuple(entries))


@dataclass(frozen=True)
class LengthCheck:
    total: int
    max_length: int
    dropped_segments: tuple[int, ...] = ()

    @property
    def over_length(self) -> bool:
        return self.total > self.max_length


def _drop_last_segment(seq: PromptSlotSequence) -> tuple[PromptSlotSequence, int]:
    slots = list(seq.slots)
    start = max(i for i, slot in enumerate(slots) if isinstance(slot, SegmentText))
    dropped = slots[start].index
    # A segment slot is always followed by its coordinates
    del slots[start : start + 2]
    return replace(seq, slots=tuple(slots)), dropped


def enforce_max_length(
    seq: PromptSlotSequence,
    counter: TokenCounter = default_counter,
    max_length: int = DEFAULT_MAX_LENGTH,
    truncate: bool = False,
) -> tuple[PromptSlotSequence, LengthCheck]:
    """Flag over-length prompts; optionally drop trailing segments until they fit"""
    total = sequence_shape(seq, counter).total
    dropped: list[int] = []
    while truncate and total > max_length and seq.segment_indices:
        seq, index = _drop_last_segment(seq)
        dropped.append(index)
        total = sequence_shape(seq, counter).total

    check = LengthCheck(total=total, max_length=max_length, dropped_segments=tuple(dropped))
    if check.over_length:
        logger.warning(
            "page %s: prompt length %d exceeds %d", seq.page.page_id, total, max_length
        )
    elif dropped:
        logger.info(
            "page %s: dropped %d trailing segments to fit %d tokens",
            seq.page.page_id,
            len(dropped),
            max_length,
        )
    return seq, check


@dataclass(frozen=True)
class LengthRow:
    page_id: str
    n_segments: int
    len_mode_I: int  # noqa: N815
    len_mode_II: int  # noqa: N815
    # Tokens outside the OCR segments: template text, patches and question
    other_tokens: int = 0


@dataclass(frozen=True)
class LengthReport:
    """OCR input length per page with boxes written out (I) or embedded (II)"""

    rows: tuple[LengthRow, ...] = field(default_factory=tuple)

    @property
    def mean_mode_I(self) -> float:  # noqa: N802
        return sum(r.len_mode_I for r in self.rows) / len(self.rows)

    @property
    def mean_mode_II(self) -> float:  # noqa: N802
        return sum(r.len_mode_II for r in self.rows) / len(self.rows)

    @property
    def ratio(self) -> float:
        if self.mean_mode_II == 0:
            return float("nan")
        return self.mean_mode_I / self.mean_mode_II

    def write_csv(self, path: Path) -> None:
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(LENGTH_REPORT_COLUMNS)
            for row in self.rows:
                writer.writerow((row.page_id, row.n_segments, row.len_mode_I, row.len_mode_II))
            mean_segments = sum(r.n_segments for r in self.rows) / len(self.rows)
            writer.writerow(
                (
                    "mean",
                    f"{mean_segments:.2f}",
                    f"{self.mean_mode_I:.2f}",
                    f"{self.mean_mode_II:.2f}",
                )
            )


_OCR_KINDS = frozenset({SlotKind.SEGMENT_TEXT, SlotKind.BOX})


def _ocr_length(seq: PromptSlotSequence, counter: TokenCounter) -> tuple[int, int]:
    """Tokens spent on segments and their coordinates, and on everything else"""
    shape = sequence_shape(seq, counter)
    ocr = 0
    # Coordinate renderings follow their segment in textual mode
    after_segment = False
    for entry in shape.entries:
        if entry.kind in _OCR_KINDS or (after_segment and entry.kind is SlotKind.FIXED_TEXT):
            ocr += entry.tokens
        after_segment = entry.kind is SlotKind.SEGMENT_TEXT
    return ocr, shape.total - ocr


def length_report(
    pages: Sequence[DocumentPage],
    counter: TokenCounter = default_counter,
    grid: PatchGrid | None = None,
    question: str = "What is this document about?",
) -> LengthReport:
    if not pages:
        raise PromptError("length report needs at least one page")
    grid = grid or PatchGrid()

    rows = []
    for page in pages:
        textual, other = _ocr_length(assemble(page, question, CoordMode.TEXTUAL, grid), counter)
        embedded, _ = _ocr_length(assemble(page, question, CoordMode.EMBEDDED, grid), counter)
        rows.append(
            LengthRow(
                page_id=page.page_id,
                n_segments=page.n_segments,
                len_mode_I=textual,
                len_mode_II=embedded,
                other_tokens=other,
            )
        )
        logger.debug("page %s: mode I %d, mode II %d", page.page_id, textual, embedded)
    return LengthReport(tuple(rows))
