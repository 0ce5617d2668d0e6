"""
Report Writer

Renders CLI run reports as plain text (pandas tables) or as one structured
JSON document {verb, inputs, verdict, artifacts, residuals, seed}. Output is
byte-stable: keys are sorted, floats are written with 17 significant digits
in JSON and 10 in text, and nothing time-dependent is included.
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema
import numpy as np
import pandas as pd

from .config_parser import load_schema

logger = logging.getLogger(__name__)

FORMATS = ("text", "json")


@dataclass
class RunReport:
    """
    Outcome of one CLI run.

    Args:
        verb: CLI verb
        verdict: Short machine-readable outcome ('emm', 'arbitrage', 'complete', ...)
        inputs: Input paths and flags
        artifacts: Results (measures, strategies, prices)
        residuals: Numerical residuals backing the verdict
        seed: Seed of a stochastic verb, else None
        tables: Tables shown in text output, keyed by title
        exit_code: 0 affirmative, 2 negative verdict, 1 error
    """
    verb: str
    verdict: str
    inputs: Dict[str, Any] = field(default_factory=dict)
    artifacts: Dict[str, Any] = field(default_factory=dict)
    residuals: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    tables: Dict[str, pd.DataFrame] = field(default_factory=dict)
    exit_code: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verb": self.verb,
            "inputs": self.inputs,
            "verdict": self.verdict,
            "artifacts": self.artifacts,
            "residuals": self.residuals,
            "seed": self.seed,
        }


def format_float(value: float, digits: int = 17) -> str:
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return format(value, f".{digits}g")


def to_jsonable(value: Any) -> Any:
    """Convert numpy and float values to JSON-ready values; floats become 17-digit strings."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, pd.DataFrame):
        return to_jsonable(value.to_dict(orient="records"))
    if value is None or isinstance(value, str):
        return value
    return str(value)


class ReportWriter:
    """Formats RunReports and writes them to stdout or a file."""

    def __init__(self, fmt: str = "text"):
        if fmt not in FORMATS:
            raise ValueError(f"Unknown format '{fmt}' (expected one of {FORMATS})")
        self.fmt = fmt
        self.logger = logging.getLogger(__name__)
        self._schema = load_schema("report_schema.json") if fmt == "json" else None

    def render(self, report: RunReport) -> str:
        if self.fmt == "json":
            return self._render_json(report)
        return self._render_text(report)

    def _render_json(self, report: RunReport) -> str:
        document = to_jsonable(report.to_dict())
        jsonschema.validate(document, self._schema)
        return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n"

    def _render_text(self, report: RunReport) -> str:
        lines: List[str] = [f"verb: {report.verb}", f"verdict: {report.verdict}"]
        if report.seed is not None:
            lines.append(f"seed: {report.seed}")
        printed = set()
        for section in ("artifacts", "residuals"):
            scalars = {k: v for k, v in getattr(report, section).items()
                       if _is_scalar(v) and k not in printed}
            for key in sorted(scalars):
                lines.append(f"{key}: {_text_value(scalars[key])}")
            printed.update(scalars)
        for title in sorted(report.tables):
            table = report.tables[title]
            lines.append("")
            lines.append(f"[{title}]")
            if table.empty:
                lines.append("(empty)")
            else:
                lines.append(table.to_string(index=False,
                                             float_format=lambda x: format_float(x, 10)))
        return "\n".join(lines) + "\n"

    def write(self, report: RunReport, output: Optional[str] = None) -> str:
        """Render and write to `output` (stdout when None); returns the rendered text."""
        text = self.render(report)
        if output:
            Path(output).write_text(text, encoding="utf-8")
            self.logger.info(f"Report written to {output}")
        else:
            print(text, end="")
        return text


def _is_scalar(value: Any) -> bool:
    return value is None or isinstance(value, (str, bool, int, float, np.integer, np.floating))


def _text_value(value: Any) -> str:
    if isinstance(value, (float, np.floating)) and not isinstance(value, bool):
        return format_float(float(value), 10)
    return str(value)


def mapping_table(mapping: Dict[str, Any], key: str, value: str) -> pd.DataFrame:
    """Two-column table from a mapping, preserving its order."""
    return pd.DataFrame({key: list(mapping.keys()), value: list(mapping.values())})
