from dataclasses import dataclass


class LayoutCotError(Exception):
    """Base exception for every error raised by layoutcot"""


class BoxValidationError(LayoutCotError, ValueError):
    """Custom exception raised when a box or interval violates its invariants"""

    def __init__(self, field: str, values: object, reason: str) -> None:
        self.field = field
        self.values = values
        super().__init__(f"Invalid {field} ({values}): {reason}")


class IngestError(LayoutCotError):
    """Custom exception raised when a raw OCR record cannot be ingested"""

    def __init__(self, page_id: str | None, field_path: str, reason: str) -> None:
        self.page_id = page_id
        self.field_path = field_path
        self.reason = reason
        super().__init__(f"page {page_id or '<unknown>'}: {field_path}: {reason}")


class XYCutError(LayoutCotError, ValueError):
    """Custom exception raised when XY-Cut cannot run on the given segments"""


class NeighborSearchError(LayoutCotError, ValueError):
    """Custom exception raised when a nearest-neighbour search has nothing to rank"""


class TableStructureError(LayoutCotError):
    """Custom exception raised when a table structure cannot be derived"""


class TableRangeError(TableStructureError, IndexError):
    """Custom exception raised when a (row, column) lookup is out of range"""

    def __init__(self, bound: str, value: int, limit: int) -> None:
        self.bound = bound
        super().__init__(f"{bound} {value} out of range [1, {limit}]")


class GenerationError(LayoutCotError):
    """Custom exception raised when a generator precondition does not hold"""


class RenderError(LayoutCotError):
    """Custom exception raised when a record cannot be rendered in the requested mode"""

    def __init__(self, record_id: str, reason: str) -> None:
        self.record_id = record_id
        super().__init__(f"record {record_id}: {reason}")


class ScheduleError(LayoutCotError, ValueError):
    """Custom exception raised for invalid annealing schedules or steps"""


class PromptError(LayoutCotError, ValueError):
    """Custom exception raised when a prompt cannot be assembled"""


class ConfigError(LayoutCotError):
    """Custom exception raised when the pipeline configuration is invalid"""


class PipelineIOError(LayoutCotError):
    """Custom exception raised when pipeline inputs cannot be read or written"""


class NoValidPagesError(LayoutCotError):
    """Custom exception raised when a corpus yields nothing to work on"""

    def __init__(self, detail: str = "no valid pages") -> None:
        super().__init__(detail)


@dataclass
class ValidationResult:
    """Result of validating one artifact"""

    is_valid: bool
    error: LayoutCotError | None = None
    message: str = ""

    @property
    def user_message(self) -> str:
        """Get a user-friendly message"""
        if self.error is not None:
            return f"🚫 <strong style='color: red;'>{self.message}</strong><br>{str(self.error)}"
        return "✅ <strong>Record is consistent with its source page.</strong>"
