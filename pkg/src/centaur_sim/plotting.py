"""Static figures for reports. Everything renders off-screen to files."""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .geometry import LABELS, N_CLUSTERS, lateral_endpoint  # noqa: E402

CLUSTER_COLORS = ("#1b9e77", "#66a61e", "#7570b3", "#e6ab02", "#d95f02")


def new_figure(width: float = 6.0, height: float | None = None):
    """Figure and axes with the package's house style (golden-ratio default height)."""
    if height is None:
        height = width * (math.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height), dpi=120)
    ax.grid(True, color="0.9", linewidth=0.6)
    ax.set_axisbelow(True)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_score_distribution(trajectories, final_scores, labels, path, title: str = "") -> Path:
    """Aggregated score of each candidate against its lateral endpoint, coloured by cluster.

    Positive lateral offset is to the left, so the x axis is flipped to read
    like a bird's-eye view from behind the ego vehicle.
    """
    y = np.array([lateral_endpoint(t) for t in trajectories])
    s = np.asarray(final_scores, dtype=np.float64)
    lab = np.asarray(labels)
    fig, ax = new_figure()
    for c in range(N_CLUSTERS):
        m = lab == c
        if m.any():
            ax.scatter(y[m], s[m], s=14, color=CLUSTER_COLORS[c], label=LABELS[c])
    ax.invert_xaxis()
    ax.set_xlabel("lateral endpoint [m] (left positive)")
    ax.set_ylabel("aggregated score")
    ax.set_ylim(-0.02, 1.02)
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7, frameon=False, loc="upper right")
    return _save(fig, path)


def plot_category_bars(category_pdms: dict, path, title: str = "PDMS per category") -> Path:
    cats = [c for c, v in category_pdms.items() if v is not None]
    vals = [category_pdms[c] for c in cats]
    fig, ax = new_figure(7.0)
    ax.bar(cats, vals, color="#7570b3")
    ax.set_ylabel("PDMS [%]")
    ax.set_ylim(0, 100)
    ax.set_title(title)
    ax.tick_params(axis="x", labelsize=8)
    return _save(fig, path)


def plot_threshold_sweep(classifications: Sequence, path) -> Path:
    t = [c.threshold for c in classifications]
    fig, ax = new_figure()
    ax.plot(t, [100 * c.tpr for c in classifications], "o-", label="TPR")
    ax.plot(t, [100 * c.accuracy for c in classifications], "s--", label="accuracy")
    ax.set_xlabel("uncertainty threshold")
    ax.set_ylabel("%")
    ax.set_ylim(0, 100)
    ax.legend(frameon=False)
    return _save(fig, path)
