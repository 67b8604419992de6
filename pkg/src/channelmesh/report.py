"""CSV and JSON summaries of simulation reports."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Any, Iterable

from .sim import SimReport

CSV_COLUMNS = (
    "scenario",
    "duration_s",
    "clients",
    "payments_completed",
    "payments_failed",
    "downtime_s",
    "rebalances",
    "switchovers",
)


def _num(v: Any) -> Any:
    # 2592000.0 prints as 2592000
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


def csv_row(report: SimReport) -> list[Any]:
    return [
        report.scenario,
        _num(report.duration_s),
        report.clients,
        report.payments_completed,
        report.payments_failed_total,
        _num(round(report.total_downtime_s, 6)),
        report.rebalances_executed,
        len(report.switchovers),
    ]


def to_csv(reports: Iterable[SimReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in reports:
        w.writerow(csv_row(r))
    return buf.getvalue()


def to_json(reports: Iterable[SimReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2, sort_keys=True) + "\n"


def summarize(reports: SimReport | Iterable[SimReport], csv_path: str | Path | None = None,
              json_path: str | Path | None = None) -> str:
    """Write the CSV (header once) and optional JSON; return the CSV text."""
    if isinstance(reports, SimReport):
        reports = [reports]
    reports = list(reports)
    text = to_csv(reports)
    if csv_path is not None:
        Path(csv_path).write_text(text)
    if json_path is not None:
        Path(json_path).write_text(to_json(reports))
    return text
