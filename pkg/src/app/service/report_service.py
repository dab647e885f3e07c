# src/app/service/report_service.py
from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import asdict
from pathlib import Path
from typing import Any, Iterable, Literal

import numpy as np

from app.model.experiment import SCHEMA_VERSION, ExperimentReport

log = logging.getLogger(__name__)

Format = Literal["json", "csv"]
SIGNIFICANT_DIGITS = 15


def _clean(value: Any) -> Any:
    """Zahlen auf 15 signifikante Stellen, numpy-Typen in Python-Typen, nan/inf als None."""
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{SIGNIFICANT_DIGITS}g}")
    if isinstance(value, (complex, np.complexfloating)):
        return [_clean(value.real), _clean(value.imag)]
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, np.ndarray)):
        return [_clean(v) for v in value]
    return value


class ReportService:
    """Serialisiert ExperimentReports nach JSON oder CSV und schreibt sie an den Zielort."""

    def to_dict(self, report: ExperimentReport) -> dict:
        return _clean({
            "schema_version": report.schema_version,
            "config": report.config,
            "passed": report.passed,
            "tolerances": [asdict(t) for t in report.tolerances],
            "fits": report.fits,
            "tables": report.tables,
            "diagnostics": report.diagnostics,
        })

    # -------------------- JSON --------------------

    def to_json(self, reports: Iterable[ExperimentReport]) -> str:
        reports = list(reports)
        if len(reports) == 1:
            payload = self.to_dict(reports[0])
        else:
            payload = {"schema_version": SCHEMA_VERSION, "reports": [self.to_dict(r) for r in reports]}
        return json.dumps(payload, indent=2, ensure_ascii=False) + "\n"

    # -------------------- CSV --------------------

    def _rows(self, report: ExperimentReport) -> Iterable[list[Any]]:
        data = self.to_dict(report)
        exp = data["config"].get("experiment", "")
        version = data["schema_version"]
        for t in data["tolerances"]:
            yield [version, exp, "tolerance", t["name"], "", "passed", t["passed"]]
        for name, fit in data["fits"].items():
            for key, val in fit.items():
                yield [version, exp, "fit", name, "", key, val]
        for name, rows in data["tables"].items():
            for i, row in enumerate(rows):
                for key, val in row.items():
                    yield [version, exp, "table", name, i, key, val]
        for key, val in data["diagnostics"].items():
            yield [version, exp, "diagnostic", key, "", "value", val]

    def to_csv(self, reports: Iterable[ExperimentReport]) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["schema_version", "experiment", "section", "name", "row", "key", "value"])
        for report in reports:
            for row in self._rows(report):
                *head, val = row
                writer.writerow([*head, self._cell(val)])
        return buf.getvalue()

    @staticmethod
    def _cell(value: Any) -> str:
        # gleiche Zahlendarstellung wie im JSON
        if isinstance(value, (dict, list)):
            return json.dumps(value, ensure_ascii=False)
        return json.dumps(value) if isinstance(value, (bool, int, float)) or value is None else str(value)

    # -------------------- Ausgabe --------------------

    def render(self, reports: Iterable[ExperimentReport], fmt: Format) -> str:
        return self.to_csv(reports) if fmt == "csv" else self.to_json(reports)

    def write(self, reports: Iterable[ExperimentReport], fmt: Format, out: Path | None) -> str:
        text = self.render(reports, fmt)
        if out is None:
            return text
        out = Path(out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text, encoding="utf-8")
        log.info("Report geschrieben: %s", out)
        return text


# global singleton
report_service = ReportService()
