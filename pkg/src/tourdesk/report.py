"""Batch-run reporting: delimited summaries plus rendered figures.

Writes ``sessions.csv`` and ``metrics.csv`` alongside two PNG figures (the
inter-spot distance histogram with the feasibility threshold, and the session
outcome funnel) so a batch of persona runs can be eyeballed at a glance.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .orchestrator import MetricsReport
from .personas import SessionSummary

SESSION_COLUMNS = [
    "session_id", "final_state", "completed", "first_spot", "second_spot",
    "distance_km", "feasible", "turns",
]


def write_report(
    summaries: list[SessionSummary],
    report: MetricsReport,
    out_dir: str | Path,
) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write_sessions_csv(summaries, out / "sessions.csv"),
        _write_metrics_csv(report, out / "metrics.csv"),
        _plot_distances(summaries, report, out / "distance_histogram.png"),
        _plot_outcomes(report, out / "outcomes.png"),
    ]
    return written


def _write_sessions_csv(summaries: list[SessionSummary], path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SESSION_COLUMNS)
        for s in summaries:
            writer.writerow([
                s.session_id, s.final_state, s.completed, s.first_spot or "",
                s.second_spot or "",
                f"{s.distance_km:.4f}" if s.distance_km is not None else "",
                "" if s.feasible is None else s.feasible,
                s.turns,
            ])
    return path


def _write_metrics_csv(report: MetricsReport, path: Path) -> Path:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sessions_total", "sessions_with_plan", "sessions_feasible", "plan_rate", "threshold_km"])
        writer.writerow([
            report.sessions_total, report.sessions_with_plan, report.sessions_feasible,
            f"{report.plan_rate:.4f}", report.threshold_km,
        ])
    return path


def _plot_distances(summaries: list[SessionSummary], report: MetricsReport, path: Path) -> Path:
    distances = [s.distance_km for s in summaries if s.distance_km is not None]
    fig, ax = plt.subplots(figsize=(6, 4))
    if distances:
        ax.hist(distances, bins=min(20, max(5, len(distances) // 3)), color="#4878a8", edgecolor="white")
    ax.axvline(report.threshold_km, color="#c44e52", linestyle="--",
               label=f"threshold {report.threshold_km:g} km")
    ax.set_xlabel("inter-spot distance (km)")
    ax.set_ylabel("sessions")
    ax.set_title("Distance between chosen spots")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _plot_outcomes(report: MetricsReport, path: Path) -> Path:
    labels = ["total", "with plan", "feasible"]
    values = [report.sessions_total, report.sessions_with_plan, report.sessions_feasible]
    fig, ax = plt.subplots(figsize=(6, 4))
    bars = ax.bar(labels, values, color=["#8c8c8c", "#4878a8", "#6aa84f"])
    ax.bar_label(bars)
    ax.set_ylabel("sessions")
    ax.set_title(f"Plan outcomes (plan rate {report.plan_rate:.2f})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
