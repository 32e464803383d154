"""layoutcot: layout-aware chain-of-thought instruction data from OCR pages.

This package turns OCR pages (texts with bounding boxes, optional layout and
table annotations) into instruction-tuning records whose reasoning steps are
recomputed from geometry, and plans the CoT-to-direct-answer mix for
fine-tuning.

Usage:
    layoutcot ingest --input raw.jsonl --output pages.jsonl
    layoutcot generate --input pages.jsonl --output records.jsonl --config run.env

In a notebook (requires the `notebook` extra):
    %load_ext layoutcot

    %%layoutcot --task geometric_analysis
    {"page_id": "p1", "width": 500, "height": 500, "segments": [...]}
"""

from .document import DocumentPage, ingest_page
from .generators import generate_task, render
from .models import InstructionRecord, RenderedExample, RenderMode, TaskKind
from .verification import verify_example, verify_record

__version__ = "0.1.0"


def load_ipython_extension(ipython):
    """Entry point for `%load_ext layoutcot`"""
    try:
        from .magic import load_ipython_extension as _load
    except ImportError as err:
        raise ImportError(
            "The notebook preview needs the optional dependencies: "
            "pip install layoutcot[notebook]"
        ) from err
    _load(ipython)


__all__ = [
    "DocumentPage",
    "InstructionRecord",
    "RenderMode",
    "RenderedExample",
    "TaskKind",
    "generate_task",
    "ingest_page",
    "load_ipython_extension",
    "render",
    "verify_example",
    "verify_record",
]
