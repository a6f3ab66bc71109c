"""Bit-stable report emission.

Reports serialize to CSV (one row per ladder delta plus a fitted-order
footer) or JSON.  All floating-point text uses 17 significant digits so
identical reports produce identical bytes, which is what the
determinism guarantees are stated against.
"""

from __future__ import annotations

import io
import json
import math

from .experiment import WeakErrorReport, WeakErrorRow

__all__ = ["render_csv", "render_json", "emit_report", "report_from_json"]

CSV_HEADER = "delta,estimate,reference,abs_error,std_error,paths_failed"


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def render_csv(report: WeakErrorReport) -> str:
    lines = [CSV_HEADER]
    for r in report.rows:
        lines.append(
            ",".join(
                [
                    _fmt(r.delta),
                    _fmt(r.estimate),
                    _fmt(r.reference_estimate),
                    _fmt(r.abs_error),
                    _fmt(r.std_error),
                    str(r.paths_failed),
                ]
            )
        )
    lines.append(f"# fitted_order={_fmt(report.fitted_order)}")
    return "\n".join(lines) + "\n"


def render_json(report: WeakErrorReport) -> str:
    payload = {
        "rows": [
            {
                "delta": r.delta,
                "estimate": r.estimate,
                "reference": r.reference_estimate,
                "abs_error": r.abs_error,
                "std_error": r.std_error,
                "paths_failed": r.paths_failed,
            }
            for r in report.rows
        ],
        "fitted_order": None if math.isnan(report.fitted_order) else report.fitted_order,
        "reference_delta": report.reference_delta,
        "reference_estimate": report.reference_estimate,
        "noise_floor": report.noise_floor,
        "diagnostics": report.diagnostics,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def report_from_json(text: str) -> WeakErrorReport:
    """Rebuild a report object from its JSON rendering."""
    payload = json.loads(text)
    rows = [
        WeakErrorRow(
            delta=r["delta"],
            estimate=r["estimate"],
            reference_estimate=r["reference"],
            abs_error=r["abs_error"],
            std_error=r["std_error"],
            paths_failed=r["paths_failed"],
        )
        for r in payload["rows"]
    ]
    fitted = payload["fitted_order"]
    return WeakErrorReport(
        rows=rows,
        fitted_order=float("nan") if fitted is None else float(fitted),
        reference_delta=payload["reference_delta"],
        reference_estimate=payload["reference_estimate"],
        noise_floor=payload["noise_floor"],
        diagnostics=payload.get("diagnostics", {}),
    )


def emit_report(report: WeakErrorReport, format: str, destination) -> None:
    """Write the report to a path or text-file object.

    Two emissions of one report produce identical bytes.
    """
    if format == "csv":
        text = render_csv(report)
    elif format == "json":
        text = render_json(report)
    else:
        raise ValueError(f"format must be csv or json, got {format!r}")
    if isinstance(destination, io.TextIOBase) or hasattr(destination, "write"):
        destination.write(text)
    else:
        with open(destination, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
