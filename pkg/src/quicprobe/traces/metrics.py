"""Longitudinal metrics over a trace corpus.

All three metrics are pure functions of the corpus: announced versions
per date, handshake successes per date, and the outcome percentages of
post-handshake tests restricted to endpoints whose same-date handshake
succeeded.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

from .model import RunCorpus


def _requires_handshake_scenarios() -> set[str]:
    from ..scenarios import ALL_SCENARIOS  # late import: scenarios depend on traces

    return {name for name, cls in ALL_SCENARIOS.items() if cls.requires_handshake}


@dataclass
class VersionsTable:
    rows: list[tuple[str, int, int]]  # (date, version, endpoints announcing it)
    tested: list[tuple[str, int]]  # (date, endpoints tested)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["date", "version", "endpoints"])
        for date, version, count in self.rows:
            writer.writerow([date, f"0x{version:08x}", count])
        return out.getvalue()

    def tested_to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out)
        writer.writerow(["date", "endpoints_tested"])
        for date, count in self.tested:
            writer.writerow([date, count])
        return out.getvalue()


def metric_versions_over_time(corpus: RunCorpus) -> VersionsTable:
    """Per date, how many endpoints announced each version; an endpoint
    announcing several versions counts once per version."""
    rows: list[tuple[str, int, int]] = []
    tested: list[tuple[str, int]] = []
    for date in corpus.dates():
        targets = corpus.targets(date)
        tested.append((date, len(targets)))
        counts: dict[int, int] = {}
        for target in targets:
            trace = corpus.get(date, target, "version_negotiation")
            if trace is None:
                continue
            versions = trace.results.get("versions") or []
            for version in set(versions):
                counts[version] = counts.get(version, 0) + 1
        for version in sorted(counts):
            rows.append((date, version, counts[version]))
    return VersionsTable(rows=rows, tested=tested)


def metric_handshake_success(corpus: RunCorpus) -> list[tuple[str, int]]:
    """Per date, how many endpoints completed the handshake test."""
    out = []
    for date in corpus.dates():
        count = sum(
            1
            for target in corpus.targets(date)
            if (trace := corpus.get(date, target, "handshake")) is not None
            and trace.error_code == 0
        )
        out.append((date, count))
    return out


def handshake_success_to_csv(rows: list[tuple[str, int]]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["date", "handshake_success"])
    writer.writerows(rows)
    return out.getvalue()


@dataclass
class OutcomeRow:
    date: str
    success_pct: float
    failure_pct: float
    error_pct: float
    endpoints: int  # qualifying (handshake-succeeding) endpoints
    tests: int  # post-handshake test executions counted


def metric_outcomes(
    corpus: RunCorpus, scenario_names: set[str] | None = None
) -> list[OutcomeRow]:
    """Success/failure/error percentages over the tests that require a
    completed handshake, keeping only endpoints whose same-date handshake
    test succeeded. Dates without a qualifying endpoint are omitted."""
    if scenario_names is None:
        scenario_names = _requires_handshake_scenarios()
    out = []
    for date in corpus.dates():
        qualifying = [
            target
            for target in corpus.targets(date)
            if (hs := corpus.get(date, target, "handshake")) is not None and hs.error_code == 0
        ]
        if not qualifying:
            continue
        success = failure = error = 0
        for trace in corpus.on_date(date):
            if trace.target.get("name") not in qualifying:
                continue
            if trace.scenario not in scenario_names:
                continue
            if trace.error_code == 0:
                success += 1
            elif 1 <= trace.error_code <= 199:
                failure += 1
            else:
                error += 1
        total = success + failure + error
        if total == 0:
            continue
        out.append(
            OutcomeRow(
                date=date,
                success_pct=100.0 * success / total,
                failure_pct=100.0 * failure / total,
                error_pct=100.0 * error / total,
                endpoints=len(qualifying),
                tests=total,
            )
        )
    return out


def outcomes_to_csv(rows: list[OutcomeRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(["date", "success_pct", "failure_pct", "error_pct", "endpoints", "tests"])
    for row in rows:
        writer.writerow(
            [
                row.date,
                f"{row.success_pct:.1f}",
                f"{row.failure_pct:.1f}",
                f"{row.error_pct:.1f}",
                row.endpoints,
                row.tests,
            ]
        )
    return out.getvalue()
