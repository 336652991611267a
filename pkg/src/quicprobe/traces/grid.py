"""The scenario x implementation results grid, as static HTML and CSV.

Cells are colour-coded success / failure / error and link to the trace
file behind them; a missing (endpoint, scenario) pair is a blank cell.
"""

from __future__ import annotations

import csv
import html
import io

from .model import RunCorpus, Trace, trace_filename

_CELL_STYLES = {
    "success": "background:#c8e6c9;color:#1b5e20",
    "failure": "background:#ffcdd2;color:#b71c1c",
    "error": "background:#ffe0b2;color:#e65100",
    "blank": "background:#f5f5f5;color:#999",
}


def _outcome(code: int) -> str:
    if code == 0:
        return "success"
    if code <= 199:
        return "failure"
    return "error"


def render_grid(corpus: RunCorpus, date: str) -> tuple[str, str]:
    """(html, csv) for one run date."""
    targets = corpus.targets(date)
    scenarios = sorted({t.scenario for t in corpus.on_date(date)})

    csv_out = io.StringIO()
    writer = csv.writer(csv_out)
    writer.writerow(["scenario"] + targets)
    grid: dict[tuple[str, str], Trace] = {}
    for scenario in scenarios:
        row = [scenario]
        for target in targets:
            trace = corpus.get(date, target, scenario)
            if trace is None:
                row.append("")
            else:
                grid[(scenario, target)] = trace
                row.append(str(trace.error_code))
        writer.writerow(row)

    parts = [
        "<!DOCTYPE html><html><head><meta charset='utf-8'>",
        f"<title>Results grid {html.escape(date)}</title></head>",
        "<body style='font-family:sans-serif'>",
        f"<h1>Results grid {html.escape(date)}</h1>",
        "<p>Cell values are error codes: 0 success, 1–199 failure, 200–255 "
        "prerequisite error. Each cell links to its trace.</p>",
        "<table style='border-collapse:collapse'>",
        "<tr><th style='border:1px solid #ccc;padding:4px 8px'>scenario</th>",
    ]
    for target in targets:
        parts.append(f"<th style='border:1px solid #ccc;padding:4px 8px'>{html.escape(target)}</th>")
    parts.append("</tr>")
    for scenario in scenarios:
        parts.append(f"<tr><td style='border:1px solid #ccc;padding:4px 8px'>{html.escape(scenario)}</td>")
        for target in targets:
            trace = grid.get((scenario, target))
            if trace is None:
                parts.append(
                    f"<td style='border:1px solid #ccc;padding:4px 8px;text-align:center;"
                    f"{_CELL_STYLES['blank']}'></td>"
                )
                continue
            style = _CELL_STYLES[_outcome(trace.error_code)]
            href = html.escape(f"{date}/{trace_filename(trace)}")
            parts.append(
                f"<td style='border:1px solid #ccc;padding:4px 8px;text-align:center;{style}'>"
                f"<a style='color:inherit' href='{href}'>{trace.error_code}</a></td>"
            )
        parts.append("</tr>")
    parts.append("</table></body></html>")
    return "".join(parts), csv_out.getvalue()
