"""Result reports: machine JSON (``report/1``) and a human-readable table."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping, Sequence

from .executor import TestResult, exit_code, summarize
from .iots import FAIL, INC, PASS

REPORT_SCHEMA = "report/1"


class ReportError(ValueError):
    pass


def failed_pct(fail: int, total: int) -> float:
    return round(100.0 * fail / total, 2) if total else 0.0


def build_report(
    results: Sequence[TestResult],
    manifest: Mapping[str, Any] | None = None,
    weaknesses: Mapping[str, str] | None = None,
    timestamps: bool = False,
) -> dict[str, Any]:
    """Aggregate results per verdict, operator and strategy.

    ``weaknesses`` maps a known weakness to the operator expected to reveal it;
    the report then lists, per weakness, the mutants that failed or were
    flagged as accepted-anyway.
    """
    agg = summarize(results)
    total = len(results)
    per_op = {}
    for op, row in agg["perOperator"].items():
        n = row[PASS] + row[FAIL] + row[INC]
        per_op[op] = dict(row, mutants=n, failedPct=failed_pct(row[FAIL], n))
    strategy = (manifest or {}).get("strategy")
    origins = sorted({m["origin"]["source"] for m in (manifest or {}).get("mutants", ())})
    doc: dict[str, Any] = {
        "schema": REPORT_SCHEMA,
        "summary": dict(agg["summary"], total=total, failedPct=failed_pct(agg["summary"][FAIL], total)),
        "perOperator": per_op,
        "perStrategy": {strategy: dict(agg["summary"], total=total)} if strategy else {},
        "origins": len(origins),
        "mutants": len((manifest or {}).get("mutants", ())) or total,
        "results": [r.to_json(timestamps=timestamps) for r in results],
    }
    if weaknesses is not None:
        doc["weaknesses"] = {
            w: sorted(r.name for r in results if r.operator == op and (r.verdict == FAIL or r.warnings))
            for w, op in weaknesses.items()
        }
    doc["exitCode"] = exit_code(results)
    return doc


def load_results(source: str | Path | Mapping[str, Any] | Sequence[Any]) -> list[TestResult]:
    """Results from a report file/document or a bare list of result objects."""
    doc: Any = source
    if isinstance(source, (str, Path)):
        try:
            doc = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ReportError(f"cannot read results {source}: {exc}") from exc
    if isinstance(doc, Mapping):
        if "results" not in doc:
            raise ReportError("results document lacks a 'results' list")
        doc = doc["results"]
    if not isinstance(doc, list):
        raise ReportError("results must be a list")
    try:
        return [TestResult.from_json(r) for r in doc]
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise ReportError(f"malformed result entry: {exc}") from exc


def render_table(report: Mapping[str, Any]) -> str:
    rows = [("operator", "mutants", "pass", "fail", "inc", "flagged", "% failed")]
    for op, r in report["perOperator"].items():
        rows.append((op or "-", str(r["mutants"]), str(r[PASS]), str(r[FAIL]), str(r[INC]),
                     str(r.get("warnings", 0)), f"{r['failedPct']:.1f}"))
    s = report["summary"]
    flagged = sum(r.get("warnings", 0) for r in report["perOperator"].values())
    rows.append(("total", str(s["total"]), str(s[PASS]), str(s[FAIL]), str(s[INC]), str(flagged),
                 f"{s['failedPct']:.1f}"))
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = []
    for i, r in enumerate(rows):
        lines.append("  ".join(c.ljust(w) if j == 0 else c.rjust(w) for j, (c, w) in enumerate(zip(r, widths))))
        if i == 0 or i == len(rows) - 2:
            lines.append("  ".join("-" * w for w in widths))
    for w, hits in report.get("weaknesses", {}).items():
        lines.append(f"weakness {w!r}: {'detected by ' + str(len(hits)) + ' mutant(s)' if hits else 'not detected'}")
    return "\n".join(lines)
