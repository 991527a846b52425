"""Matplotlib figures written next to the CSV/JSON artifacts."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

IMPORTANT_COLOR = "#1f5fbf"
UNCERTAIN_COLOR = "#c8282d"
LABEL_COLORS = ["#1f5fbf", "#c8282d", "#2a9d55", "#8e44ad", "#e08e0b", "#555555"]

STYLE = {
    "font.family": "DejaVu Sans",
    "font.size": 9,
    "axes.titlesize": 10,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.hashsalt": "uncq",
}


def save(fig, path) -> Path:
    """Write a PNG without volatile metadata so reruns are byte-identical."""
    path = Path(path)
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def reliability_diagram(pre_bins, post_bins, temperature: float, title: str = "Reliability"):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.2, 4.0))
        ax.plot([0, 1], [0, 1], ls="--", color="0.6", lw=1)
        for bins, label, color in ((pre_bins, "T = 1", "0.55"), (post_bins, f"T = {temperature:g}", IMPORTANT_COLOR)):
            xs = [b.avg_confidence for b in bins if b.count]
            ys = [b.accuracy for b in bins if b.count]
            ax.plot(xs, ys, marker="o", ms=3.5, lw=1.2, color=color, label=label)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("confidence")
        ax.set_ylabel("accuracy")
        ax.set_title(title)
        ax.legend(loc="upper left", frameon=False)
        fig.tight_layout()
    return fig


def confidence_change_chart(reports, title: str = "Confidence after removing uncertain words"):
    """Grouped bars per original-confidence bin: original, then post-removal per method."""
    reports = [r for r in reports if r.group == "uncertain"] or list(reports)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.8, 3.4))
        if not reports:
            ax.set_axis_off()
            return fig
        edges = reports[0].edges
        x = np.arange(len(edges) - 1)
        width = 0.8 / (len(reports) + 1)
        orig = [b.mean_orig if b.mean_orig is not None else np.nan for b in reports[0].bins]
        ax.bar(x - 0.4 + width / 2, 100 * np.array(orig, dtype=float), width, color="0.7", label="Ori")
        colors = [UNCERTAIN_COLOR, IMPORTANT_COLOR, "#2a9d55", "#8e44ad"]
        for j, r in enumerate(reports):
            post = [b.mean_post if b.mean_post is not None else np.nan for b in r.bins]
            name = {"loo": "LOO", "sampling-shapley": "SS"}.get(r.method, r.method)
            ax.bar(x - 0.4 + width * (j + 1.5), 100 * np.array(post, dtype=float), width, color=colors[j % 4], label=name)
        ax.set_xticks(x)
        ax.set_xticklabels([f"{lo:.2f}-{hi:.2f}" for lo, hi in zip(edges, edges[1:])])
        ax.set_xlabel("original confidence bin")
        ax.set_ylabel("average confidence (%)")
        ax.set_ylim(100 * edges[0] - 5, 101)
        ax.set_title(title)
        ax.legend(frameon=False, loc="center left", bbox_to_anchor=(1.0, 0.5))
        fig.tight_layout()
    return fig


def lmi_scatter(dists, label_names: Optional[Sequence[str]] = None, annotate: int = 5):
    """One panel per word group; x is vocabulary frequency rank, y is normalized LMI."""
    dists = list(dists)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, max(1, len(dists)), figsize=(4.0 * max(1, len(dists)), 3.2), squeeze=False)
        for ax, dist in zip(axes[0], dists):
            ranks = np.arange(1, len(dist.vocabulary) + 1)
            for y in range(dist.n_classes):
                col = dist.values[:, y]
                nz = col > 0
                name = label_names[y] if label_names else str(y)
                ax.scatter(ranks[nz], col[nz], s=8, color=LABEL_COLORS[y % len(LABEL_COLORS)], label=name)
                for i in sorted(np.flatnonzero(nz), key=lambda i: (-col[i], i))[:annotate]:
                    ax.annotate(dist.vocabulary.tokens[i], (ranks[i], col[i]), fontsize=7, xytext=(2, 2), textcoords="offset points")
            ax.set_xscale("log")
            ax.set_xlim(1, max(10, len(dist.vocabulary)))  # fixed limits keep the log axis valid when empty
            ax.set_xlabel("word frequency rank in vocabulary")
            ax.set_ylabel("normalized LMI")
            ax.set_title(dist.group or "LMI")
            if dist.empty:
                ax.text(0.5, 0.5, "no features", transform=ax.transAxes, ha="center", color="0.5")
            else:
                ax.legend(frameon=False)
        fig.tight_layout()
    return fig
