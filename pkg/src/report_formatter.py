# -*- coding: utf-8 -*-
"""Utilities to convert benchmark results into CSV rows and JSON payloads."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from typing import Any, Dict, Iterable, Optional, Sequence

from .utils import format_ber, parse_ber

CSV_COLUMNS = ("ber", "mode", "file_type", "trials", "successes", "rate", "ftr_accuracy", "mean_iters")


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def _text(value: Any) -> str:
    """Stable CSV text: repr for floats, empty for missing values."""
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def row_to_record(row) -> Dict[str, Any]:
    """Convert a :class:`~src.pipeline.ResultRow` into a JSON-friendly dict."""
    return {
        "ber": row.ber,
        "mode": row.mode,
        "file_type": row.file_type,
        "trials": row.trials,
        "successes": row.successes,
        "rate": _ratio(row.successes, row.trials),
        "ftr_accuracy": _ratio(row.ftr_correct, row.ftr_total),
        "mean_iters": _ratio(row.iterations, row.trials),
        "iterations": row.iterations,
        "ftr_correct": row.ftr_correct,
        "ftr_total": row.ftr_total,
    }


def render_csv(rows: Sequence) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for row in rows:
        rec = row_to_record(row)
        rec["ber"] = format_ber(row.ber)
        w.writerow([_text(rec[c]) for c in CSV_COLUMNS])
    return buf.getvalue()


def summary_payload(result, rows: Sequence, csv_sha256: str, filters: Dict[str, Any]) -> Dict[str, Any]:
    """JSON summary: the CSV rows plus everything needed to replay the run."""
    return {
        "config": result.config.to_dict(),
        "config_hash": result.config_hash,
        "seed": result.config.seed,
        "noise_streams": "stream_id = ber_index * trials + trial",
        "filters": filters,
        "rows": [row_to_record(r) for r in rows],
        "paired": [asdict(c) for c in result.comparisons],
        "csv_sha256": csv_sha256,
        "wall_seconds": round(result.wall_seconds, 3),
    }


def trial_to_json(rec) -> str:
    return json.dumps(asdict(rec), sort_keys=True)


def rows_from_summary(payload: Dict[str, Any]):
    """Rebuild result rows from a summary written by :func:`summary_payload`."""
    from .pipeline import ResultRow

    return [
        ResultRow(
            ber=parse_ber(r["ber"]),
            mode=r["mode"],
            file_type=r["file_type"],
            trials=int(r["trials"]),
            successes=int(r["successes"]),
            iterations=int(r["iterations"]),
            ftr_correct=int(r.get("ftr_correct", 0)),
            ftr_total=int(r.get("ftr_total", 0)),
        )
        for r in payload.get("rows", [])
    ]


def filter_rows(rows: Iterable, modes: Optional[Sequence[str]] = None, file_types: Optional[Sequence[str]] = None) -> list:
    return [
        r for r in rows
        if (not modes or r.mode in modes) and (not file_types or r.file_type in file_types)
    ]
