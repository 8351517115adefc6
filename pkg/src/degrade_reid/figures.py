"""Headless matplotlib rendering for evaluation reports and benchmark grids."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def render_cmc_figure(report: dict, out_path) -> None:
    """Line plot of the CMC curve in an evaluation report."""
    cmc = report["cmc"]
    ranks = range(1, len(cmc) + 1)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(list(ranks), cmc, marker="o", markersize=3, linewidth=1.5)
    ax.set_xlabel("rank")
    ax.set_ylabel("cumulative match accuracy")
    ax.set_ylim(0.0, 1.02)
    ax.set_xlim(1, max(len(cmc), 2))
    ax.grid(True, alpha=0.3)
    ax.set_title(f"CMC over {report.get('n_queries', '?')} queries")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def render_grid_figure(grid: dict, out_path) -> None:
    """Grouped Rank-1 bars: one panel per stratum, grouped by query condition."""
    records = grid["records"]
    strata = sorted({r["stratum"] for r in records},
                    key=lambda s: ("overall", "seen", "unseen").index(s)
                    if s in ("overall", "seen", "unseen") else 99)
    conditions = []
    pipelines = []
    for r in records:
        if r["query_condition"] not in conditions:
            conditions.append(r["query_condition"])
        if r["train_pipeline"] not in pipelines:
            pipelines.append(r["train_pipeline"])
    fig, axes = plt.subplots(1, len(strata), figsize=(4.2 * len(strata), 3.8),
                             sharey=True, squeeze=False)
    width = 0.8 / max(len(pipelines), 1)
    for col, stratum in enumerate(strata):
        ax = axes[0][col]
        for pi, pipeline in enumerate(pipelines):
            xs, ys = [], []
            for ci, cond in enumerate(conditions):
                match = [r for r in records
                         if r["stratum"] == stratum and r["train_pipeline"] == pipeline
                         and r["query_condition"] == cond]
                if match:
                    xs.append(ci + (pi - (len(pipelines) - 1) / 2.0) * width)
                    ys.append(match[0]["rank_k"]["1"])
            ax.bar(xs, ys, width=width, label=f"train: {pipeline}")
        ax.set_xticks(range(len(conditions)))
        ax.set_xticklabels([f"query: {c}" for c in conditions], rotation=15)
        ax.set_ylim(0.0, 1.02)
        ax.set_title(stratum)
        ax.grid(True, axis="y", alpha=0.3)
    axes[0][0].set_ylabel("Rank-1 accuracy")
    axes[0][-1].legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
