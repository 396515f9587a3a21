"""Rendering aggregate reports as JSON, CSV and Markdown tables."""

from __future__ import annotations

import csv
import io
import json

from .grading import TIER_KEYS, AggregateReport, StrategyReport, TierMetrics, TrialMetrics, pct

FORMATS = ("json", "csv", "markdown")


def _tier_dict(m: TierMetrics) -> dict:
    return {"va": pct(m.va), "ex": pct(m.ex), "ts": pct(m.ts), "count": m.count, "ts_coverage": m.ts_coverage}


def _trial_dict(t: TrialMetrics) -> dict:
    return {key: _tier_dict(t[key]) for key in TIER_KEYS}


def report_to_dict(report: AggregateReport) -> dict:
    return {
        "strategies": [
            {
                "name": s.name,
                "trial_count": s.trial_count,
                "mean": _trial_dict(s.mean),
                "trials": [_trial_dict(t) for t in s.trials],
            }
            for s in report.strategies
        ]
    }


def _trial_from(d: dict) -> TrialMetrics:
    return TrialMetrics({key: TierMetrics(**d[key]) for key in TIER_KEYS})


def report_from_dict(d: dict) -> AggregateReport:
    return AggregateReport(
        tuple(
            StrategyReport(s["name"], s["trial_count"], _trial_from(s["mean"]), tuple(_trial_from(t) for t in s["trials"]))
            for s in d["strategies"]
        )
    )


def _cell(value: float | None) -> str:
    return "-" if value is None else f"{pct(value):.1f}"


def _markdown(report: AggregateReport) -> str:
    lines = [
        "### Overall",
        "",
        "| Method | VA | EX | TS |",
        "| --- | --- | --- | --- |",
    ]
    for s in report.strategies:
        m = s.mean["all"]
        lines.append(f"| {s.name} | {_cell(m.va)} | {_cell(m.ex)} | {_cell(m.ts)} |")
    lines += [
        "",
        "### Execution accuracy (EX) by difficulty",
        "",
        "| Prompt | Easy | Medium | Hard | Extra | all |",
        "| --- | --- | --- | --- | --- | --- |",
    ]
    for s in report.strategies:
        lines.append(f"| {s.name} | " + " | ".join(_cell(s.mean[k].ex) for k in TIER_KEYS) + " |")
    return "\n".join(lines) + "\n"


def _csv(report: AggregateReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "tier", "trials", "va", "ex", "ts", "count", "ts_coverage"])
    for s in report.strategies:
        for key in TIER_KEYS:
            m = s.mean[key]
            writer.writerow(
                [s.name, key, s.trial_count]
                + ["" if v is None else f"{pct(v):.1f}" for v in (m.va, m.ex, m.ts)]
                + [m.count, m.ts_coverage]
            )
    return buf.getvalue()


def render_report(report: AggregateReport, fmt: str = "json") -> bytes:
    """Byte-deterministic rendering; ``json`` is the canonical machine format."""
    if fmt == "json":
        text = json.dumps(report_to_dict(report), sort_keys=True, indent=2) + "\n"
    elif fmt == "csv":
        text = _csv(report)
    elif fmt in ("markdown", "md"):
        text = _markdown(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return text.encode("utf-8")
