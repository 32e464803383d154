import html
from dataclasses import dataclass, field


@dataclass(frozen=True)
class Violation:
    """One inconsistency found while validating a record"""

    record_id: str
    message: str
    step_no: int | None = None

    def __str__(self) -> str:
        where = f" step {self.step_no}" if self.step_no is not None else ""
        return f"{self.record_id}{where}: {self.message}"


@dataclass
class ValidationReport:
    """Container class to collect validation outcomes over a corpus"""

    n_records: int = 0
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def violating_records(self) -> set[str]:
        return {violation.record_id for violation in self.violations}

    def add(self, violations: list[Violation]) -> None:
        self.n_records += 1
        self.violations.extend(violations)

    @property
    def summary(self) -> str:
        text = f"{self.n_records} records checked, {len(self.violations)} violations"
        if self.violations:
            text += f" in {len(self.violating_records)} records"
        return text

    def __str__(self) -> str:
        """Plain-text summary, one violation per line"""
        lines = [self.summary]
        lines.extend(f"  {violation}" for violation in self.violations)
        return "\n".join(lines)

    def to_html(self) -> str:
        """HTML representation of the report"""
        styles = """
        <style>
            .validation-result {
                font-family: system-ui, -apple-system, sans-serif;
                margin: 0.75rem 0;
                padding: 1rem;
                border-radius: 0.5rem;
            }
            .validation-pass {
                background-color: #f0fdf4;
                border: 1px solid #86efac;
            }
            .validation-fail {
                background-color: #fef2f2;
                border: 1px solid #fecaca;
            }
            .violation {
                font-family: ui-monospace, monospace;
                font-size: 0.9rem;
                white-space: pre-wrap;
                margin: 0.25rem 0;
            }
        </style>
        """

        if self.passed:
            status_class, icon = "validation-pass", "✅"
        else:
            status_class, icon = "validation-fail", "❌"

        html_parts = [
            styles,
            f'<div class="validation-result {status_class}">',
            f"<strong>{icon} {html.escape(self.summary)}</strong>",
        ]

        for violation in self.violations:
            html_parts.append(
                f'<div class="violation">{html.escape(str(violation))}</div>'
            )

        html_parts.append("</div>")
        return "\n".join(html_parts)
