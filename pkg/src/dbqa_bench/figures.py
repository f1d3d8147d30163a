"""Matplotlib rendering of report aggregates to image files."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import SUBTASK_LABEL, BinStat, MetricsTable
from .model import CONCLUSIVE, INTERPRETIVE


def _row_label(model_id: str, strategy: str) -> str:
    return f"{model_id}\n{strategy}"


def save_ref_score_figure(table: MetricsTable, path: Path) -> Path:
    """Bar charts of conclusive match rate and interpretive mean score."""
    rows = table.interaction_rows
    labels = [_row_label(r.model_id, r.strategy) for r in rows]
    match_rates = [r.conclusive.match_rate or 0.0 for r in rows]
    scores = [r.interpretive.mean_score or 0.0 for r in rows]

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(max(8, 2 * len(rows)), 4))
    ax1.bar(labels, match_rates, color="#4c72b0")
    ax1.set_ylim(0, 1)
    ax1.set_ylabel("Match rate")
    ax1.set_title("Conclusive questions")
    ax2.bar(labels, scores, color="#dd8452")
    ax2.set_ylim(0, 5)
    ax2.set_ylabel("Mean score (1-5)")
    ax2.set_title("Interpretive questions")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", labelsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_subtask_figure(table: MetricsTable, path: Path) -> Path:
    """Grouped bars of reviewer vs meta-reviewer perfect rates per sub-task."""
    rows = table.subtask_rows
    if not rows:
        return path
    labels = [f"{r.model_id}/{r.strategy}\n{SUBTASK_LABEL[r.subtask_kind]}" for r in rows]
    reviewer = [r.reviewer_majority_fraction or 0.0 for r in rows]
    meta = [r.meta_majority_fraction or 0.0 for r in rows]
    x = range(len(rows))

    fig, ax = plt.subplots(figsize=(max(8, 1.2 * len(rows)), 4))
    width = 0.38
    ax.bar([i - width / 2 for i in x], reviewer, width, label="Reviewer majority", color="#4c72b0")
    ax.bar([i + width / 2 for i in x], meta, width, label="Meta-reviewer majority", color="#c44e52")
    ax.set_xticks(list(x))
    ax.set_xticklabels(labels, fontsize=8)
    ax.set_ylim(0, 1)
    ax.set_ylabel("Perfect fraction")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_bins_figure(bins: dict[str, list[BinStat]], path: Path) -> Path:
    """Answer quality against valid-query count, one panel per category."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for ax, category, ylim, ylabel in (
        (ax1, CONCLUSIVE, 1.0, "Match rate"),
        (ax2, INTERPRETIVE, 5.0, "Mean score"),
    ):
        stats = bins.get(category, [])
        mids = [(s.low + s.high) / 2 for s in stats]
        values = [s.value if s.value is not None else 0.0 for s in stats]
        counts = [s.count for s in stats]
        ax.plot(mids, values, marker="o", color="#4c72b0")
        for mid, value, count in zip(mids, values, counts):
            ax.annotate(f"n={count}", (mid, value), textcoords="offset points", xytext=(0, 6), fontsize=7)
        ax.set_xlabel("# valid queries")
        ax.set_ylabel(ylabel)
        ax.set_ylim(0, ylim)
        ax.set_title(category)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_report_figures(
    table: MetricsTable, out_dir: Path, bins: dict[str, list[BinStat]] | None = None
) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    written = [save_ref_score_figure(table, out_dir / "ref_scores.png")]
    if table.subtask_rows:
        written.append(save_subtask_figure(table, out_dir / "subtask_rates.png"))
    if bins:
        written.append(save_bins_figure(bins, out_dir / "valid_sql_bins.png"))
    return written
