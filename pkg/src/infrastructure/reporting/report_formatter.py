"""Report formatter: JSON, Markdown and plain-text renderings of run summaries."""

import json
import math
from enum import Enum
from typing import Any, Dict, List, Optional


class ReportFormat(str, Enum):
    """Output format of a report."""
    JSON = "json"
    MARKDOWN = "markdown"
    TEXT = "text"


class FormattingOptions:
    """Formatting options."""

    def __init__(self, report_format: Optional[ReportFormat] = None, float_digits: int = 4, max_rows: int = 50):
        self.report_format = ReportFormat(report_format or ReportFormat.MARKDOWN)
        self.float_digits = float_digits
        self.max_rows = max_rows


def _json_default(value: Any) -> Any:
    if hasattr(value, "tolist"):
        return value.tolist()
    return str(value)


class ReportFormatter:
    """Renders a titled report made of named sections."""

    @staticmethod
    def format(title: str, sections: Dict[str, Any], options: Optional[FormattingOptions] = None) -> str:
        options = options or FormattingOptions()
        if options.report_format == ReportFormat.JSON:
            return ReportFormatter._format_as_json(title, sections)
        if options.report_format == ReportFormat.TEXT:
            return ReportFormatter._format_as_text(title, sections, options)
        return ReportFormatter._format_as_markdown(title, sections, options)

    @staticmethod
    def _format_as_json(title: str, sections: Dict[str, Any]) -> str:
        return json.dumps(
            {"title": title, "sections": ReportFormatter._finite(sections)},
            indent=2,
            sort_keys=True,
            default=_json_default,
        ) + "\n"

    @staticmethod
    def _finite(value: Any) -> Any:
        """NaN / inf become null so the JSON stays standard."""
        if isinstance(value, float) and not math.isfinite(value):
            return None
        if isinstance(value, dict):
            return {k: ReportFormatter._finite(v) for k, v in value.items()}
        if isinstance(value, (list, tuple)):
            return [ReportFormatter._finite(v) for v in value]
        return value

    @staticmethod
    def _format_as_markdown(title: str, sections: Dict[str, Any], options: FormattingOptions) -> str:
        parts = [f"# {title}"]
        for name, value in sections.items():
            heading = f"## {ReportFormatter._format_name(name)}"
            if isinstance(value, list) and value and isinstance(value[0], dict):
                parts.append(heading + "\n\n" + ReportFormatter.format_as_markdown_table(value, options))
            elif isinstance(value, list):
                parts.append(heading + "\n\n" + "\n".join(f"- {ReportFormatter._cell(v, options)}" for v in value))
            elif isinstance(value, dict):
                rows = [{"key": k, "value": v} for k, v in value.items()]
                parts.append(heading + "\n\n" + ReportFormatter.format_as_markdown_table(rows, options))
            else:
                parts.append(heading + "\n\n" + ReportFormatter._cell(value, options))
        return "\n\n".join(parts) + "\n"

    @staticmethod
    def _format_as_text(title: str, sections: Dict[str, Any], options: FormattingOptions) -> str:
        lines = [title, "=" * len(title)]
        for name, value in sections.items():
            lines += ["", ReportFormatter._format_name(name), "-" * len(name)]
            if isinstance(value, list):
                for item in value[:options.max_rows]:
                    if isinstance(item, dict):
                        lines.append("  " + "  ".join(f"{k}={ReportFormatter._cell(v, options)}" for k, v in item.items()))
                    else:
                        lines.append(f"  {ReportFormatter._cell(item, options)}")
                if len(value) > options.max_rows:
                    lines.append(f"  ... {len(value) - options.max_rows} more")
            elif isinstance(value, dict):
                width = max((len(str(k)) for k in value), default=0)
                lines += [f"  {str(k).ljust(width)}  {ReportFormatter._cell(v, options)}" for k, v in value.items()]
            else:
                lines.append(f"  {ReportFormatter._cell(value, options)}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_as_markdown_table(data: List[Dict[str, Any]], options: Optional[FormattingOptions] = None) -> str:
        """Markdown table; columns in first-seen order."""
        options = options or FormattingOptions()
        if not data:
            return ""
        keys: List[str] = []
        for item in data:
            keys += [k for k in item if k not in keys]
        header = "| " + " | ".join(keys) + " |"
        separator = "| " + " | ".join(["---"] * len(keys)) + " |"
        rows = [
            "| " + " | ".join(ReportFormatter._cell(item.get(key, ""), options) for key in keys) + " |"
            for item in data[:options.max_rows]
        ]
        if len(data) > options.max_rows:
            rows.append(f"| ... {len(data) - options.max_rows} more |" + " |" * (len(keys) - 1))
        return "\n".join([header, separator] + rows)

    @staticmethod
    def _cell(value: Any, options: FormattingOptions) -> str:
        if isinstance(value, float):
            if math.isnan(value):
                return "nan"
            return f"{value:.{options.float_digits}g}"
        if isinstance(value, (dict, list, tuple)):
            return json.dumps(value, default=_json_default)
        return str(value)

    @staticmethod
    def _format_name(name: str) -> str:
        """Format a section key for display."""
        return name.replace("_", " ").title()
