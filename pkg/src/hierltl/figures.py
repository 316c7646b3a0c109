"""Figure rendering for evaluation reports (headless, file output only)."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

if TYPE_CHECKING:
    from .evaluation import EvalReport


def _bar_per_case(names, values, ylabel, title, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4.0, 0.5 * len(names) + 2.0), 3.2))
    ax.bar(range(len(names)), values, color="#4878a8")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=7)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_figures(report: "EvalReport", out_dir: str | Path) -> list[Path]:
    """Writes success_rate.png, travel_cost.png, completion_time.png."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    rate_path = out / "success_rate.png"
    fig, ax = plt.subplots(figsize=(4.0, 3.2))
    ax.bar(["conversion", "planning"],
           [report.conversion_rate, report.planning_rate],
           color=["#4878a8", "#6aa36a"])
    ax.set_ylim(0.0, 1.05)
    ax.set_ylabel("success rate")
    ax.set_title(f"success over {len(report.results)} cases")
    for i, v in enumerate([report.conversion_rate, report.planning_rate]):
        ax.text(i, v + 0.02, f"{v:.0%}", ha="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(rate_path, dpi=120)
    plt.close(fig)
    written.append(rate_path)

    planned = [r for r in report.results if r.planned]
    names = [r.name for r in planned]
    travel_path = out / "travel_cost.png"
    _bar_per_case(names, [r.travel_cost for r in planned],
                  "travel cost (m)", "travel cost per solved case",
                  travel_path)
    written.append(travel_path)

    completion_path = out / "completion_time.png"
    _bar_per_case(names, [r.completion_time for r in planned],
                  "completion step", "completion time per solved case",
                  completion_path)
    written.append(completion_path)
    return written
