"""Figure rendering for the report path: bar charts of the phase-wise and
metric-wise disqualification breakdowns, saved as PNG files next to the
delimited output.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .analytics import DisqualificationBreakdown

_DPI = 150


def _bar_chart(rows: dict[str, float], title: str, ylabel: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(8, 4.5))
    if rows:
        buckets = list(rows.keys())
        fractions = [rows[b] for b in buckets]
        ax.bar(range(len(buckets)), fractions, color="#4878d0")
        ax.set_xticks(range(len(buckets)))
        ax.set_xticklabels(buckets, rotation=30, ha="right", fontsize=8)
        for x, frac in enumerate(fractions):
            ax.annotate(f"{frac:.1%}", (x, frac), ha="center", va="bottom", fontsize=8)
    else:
        ax.text(0.5, 0.5, "no disqualifications", ha="center", va="center", transform=ax.transAxes)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.set_ylim(0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, bbox_inches="tight")
    plt.close(fig)


def save_breakdown_figures(breakdown: DisqualificationBreakdown, out_dir: Path | str) -> list[Path]:
    """Render phase/metric breakdown charts; returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    phase_path = out_dir / "phase_breakdown.png"
    metric_path = out_dir / "metric_breakdown.png"
    _bar_chart(
        breakdown.by_phase,
        f"First-failure phase shares ({breakdown.n_disqualified}/{breakdown.n_episodes} disqualified)",
        "fraction of disqualified episodes",
        phase_path,
    )
    _bar_chart(
        breakdown.by_metric,
        "Failed-check shares by constraint family",
        "fraction of failed checks",
        metric_path,
    )
    return [phase_path, metric_path]
