import html
from dataclasses import dataclass, field

import ipywidgets
import markdown2 as md
from IPython.display import display as ipython_display
from ipywidgets import HTML

from .annealing import derive_direct
from .document import DocumentPage
from .exceptions import LayoutCotError, ValidationResult
from .generators import render
from .models import InstructionRecord, RenderMode
from .results import ValidationReport, Violation


@dataclass
class DebugOutput:
    """Class to format debug information about a previewed page"""

    page: DocumentPage
    records: list[InstructionRecord]
    params: dict[str, object] = field(default_factory=dict)

    def to_html(self) -> str:
        """Format debug information as HTML"""
        debug_parts = [
            """
            <style>
                .debug-container {
                    font-family: ui-monospace, monospace;
                    background: #f8f9fa;
                    padding: 1rem;
                    border-radius: 0.5rem;
                    margin: 1rem 0;
                }
                .debug-title {
                    font-size: 1.2rem;
                    font-weight: 600;
                    margin-bottom: 1rem;
                }
                .debug-section {
                    margin: 0.5rem 0;
                }
                .debug-list {
                    margin-left: 1rem;
                }
            </style>
            <div class="debug-container">
        """
        ]

        page = self.page
        layout = len(page.layout_annotations) if page.layout_annotations is not None else "none"
        tables = len(page.table_annotations) if page.table_annotations is not None else "none"
        debug_parts.append('<div class="debug-title">Debug Information</div>')
        debug_parts.append(
            '<div class="debug-section">'
            f"Page: {html.escape(page.page_id)}<br>"
            f"Raw size: {page.raw_width:g} x {page.raw_height:g}<br>"
            f"Segments: {page.n_segments}<br>"
            f"Layout annotations: {layout}<br>"
            f"Table annotations: {tables}"
            "</div>"
        )
        if self.params:
            debug_parts.append('<div class="debug-section">Options:<div class="debug-list">')
            for key, value in self.params.items():
                debug_parts.append(f"• {key}: {html.escape(str(value))}<br>")
            debug_parts.append("</div></div>")

        debug_parts.append(
            f'<div class="debug-section">Records ({len(self.records)}):<div class="debug-list">'
        )
        for record in self.records:
            params = html.escape(str(record.metadata.get("params", {})))
            debug_parts.append(f"• {record.record_id} [{record.task.value}]: {params}<br>")
        debug_parts.append("</div></div>")

        debug_parts.append("</div>")
        return "\n".join(debug_parts)


def steps_to_markdown(record: InstructionRecord) -> str:
    """Reasoning steps as a numbered Markdown list"""
    lines = [f"{step.step_no}. {step.narration}" for step in record.cot_steps or ()]
    lines.append("")
    lines.append(f"**Answer:** `{record.final_answer}`")
    return "\n".join(lines)


@dataclass
class RecordOutput:
    """Class to prepare and display one generated record in a Jupyter notebook"""

    task_name: str
    record: InstructionRecord | None = None
    violations: list[Violation] = field(default_factory=list)
    error: LayoutCotError | None = None
    mode: RenderMode = RenderMode.WITH_COT

    @property
    def report(self) -> ValidationReport:
        """Violations of this record as a one-record report"""
        report = ValidationReport()
        report.add(self.violations)
        return report

    @property
    def validation(self) -> ValidationResult:
        if self.error is not None:
            return ValidationResult(
                is_valid=False, error=self.error, message=f"Cannot generate {self.task_name}"
            )
        if self.violations:
            return ValidationResult(
                is_valid=False,
                error=LayoutCotError(self.report.summary),
                message="Record is inconsistent with its source page",
            )
        return ValidationResult(is_valid=True)

    def display_results(self) -> None:
        """Display the record in an output widget as a VBox"""
        cells: list[ipywidgets.Widget] = [self.prepare_output_cell()]
        if self.record is not None and self.record.has_cot and self.mode is RenderMode.WITH_COT:
            cells.append(self.prepare_steps_cell())

        ipython_display(
            ipywidgets.VBox(
                children=cells,
                layout={
                    "border": "1px solid #e5e7eb",
                    "background-color": "#ffffff",
                    "margin": "5px",
                    "padding": "0.75rem",
                    "border-radius": "0.5rem",
                },
            )
        )

    def prepare_steps_cell(self) -> ipywidgets.Widget:
        """Prepare the reasoning steps in a collapsible accordion"""
        assert self.record is not None
        steps_output = ipywidgets.Output(
            layout=ipywidgets.Layout(padding="1rem", border="1px solid #e5e7eb")
        )
        with steps_output:
            ipython_display(HTML(md.markdown(steps_to_markdown(self.record))))

        return ipywidgets.Accordion(
            children=[steps_output],
            selected_index=None,
            titles=(f"Reasoning ({len(self.record.cot_steps or ())} steps)",),
            layout=ipywidgets.Layout(
                margin="1rem 0 0 0",
                border="1px solid #e5e7eb",
                border_radius="0.5rem",
            ),
        )

    def prepare_output_cell(self) -> ipywidgets.Output:
        """Prepare the cell with question, response and validation outcome"""
        output_cell = ipywidgets.Output()
        output_cell.append_display_data(
            HTML(
                '<h2 style="font-size: 1.5rem; margin: 0;">'
                '<code style="font-size: 1.1rem; background: #f3f4f6; padding: 0.25rem 0.5rem; '
                'border-radius: 0.25rem; font-family: ui-monospace, monospace;">'
                f"{html.escape(self.task_name)}</code></h2>"
            )
        )

        if self.record is not None:
            record = self.record
            if self.mode is RenderMode.DIRECT_ANSWER and record.has_cot:
                record = derive_direct(record)
            rendered = render(record, RenderMode.DIRECT_ANSWER)
            output_cell.append_display_data(
                HTML(
                    '<div style="margin: 0.75rem 0; font-size: 0.95rem;">'
                    f"<strong>Question</strong><pre>{html.escape(rendered['question'])}</pre>"
                    f"<strong>Answer</strong><pre>{html.escape(rendered['response'])}</pre>"
                    "</div>"
                )
            )

        output_cell.append_display_data(HTML(self.validation.user_message))
        if self.violations:
            output_cell.append_display_data(HTML(self.report.to_html()))
        return output_cell
