from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, field_validator

from .geometry import BBox, Point

# Values a CoT step may bind: scalars, names, boxes, points and lists of them
BoundValue = int | float | str | BBox | Point | tuple[Any, ...]


class TaskKind(Enum):
    DOCUMENT_DESCRIPTION = "document_description"
    TEXT_BOX_RECONSTRUCTION = "text_box_reconstruction"
    LAYOUT_ANALYSIS = "layout_analysis"
    TABLE_ANALYSIS = "table_analysis"
    MASKED_LANGUAGE = "masked_language"
    MASKED_POSITION = "masked_position"
    GEOMETRIC_ANALYSIS = "geometric_analysis"


# Tasks whose records carry verified reasoning steps
COT_TASKS = frozenset(
    {TaskKind.LAYOUT_ANALYSIS, TaskKind.TABLE_ANALYSIS, TaskKind.GEOMETRIC_ANALYSIS}
)


class RenderMode(Enum):
    WITH_COT = "cot"
    DIRECT_ANSWER = "direct"


class GeometricQuery(Enum):
    DISTANCE = "distance"
    DIRECTION = "direction"


@dataclass(frozen=True)
class CotStep:
    """One narrated reasoning step and the values it is built from"""

    step_no: int
    narration: str
    bound_values: dict[str, BoundValue] = field(default_factory=dict)


@dataclass(frozen=True)
class InstructionRecord:
    """A QA training example, optionally carrying its reasoning steps"""

    record_id: str
    page_id: str
    task: TaskKind
    question: str
    final_answer: str
    cot_steps: tuple[CotStep, ...] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.final_answer:
            raise ValueError(f"record {self.record_id}: empty final answer")

    @property
    def has_cot(self) -> bool:
        return bool(self.cot_steps)


class RenderedExample(BaseModel):
    """One line of the training JSONL"""

    model_config = ConfigDict(extra="forbid")

    record_id: str
    page_id: str
    task: TaskKind
    mode: RenderMode
    question: str
    response: str
    metadata: dict[str, Any] = {}

    @field_validator("response")
    @classmethod
    def _response_not_empty(cls, value: str) -> str:
        if not value.strip():
            raise ValueError("response must not be empty")
        return value
