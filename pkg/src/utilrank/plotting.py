"""Figures written next to the tabular reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from utilrank.features import FEATURE_NAMES  # noqa: E402


def pretty_plot(width: float = 7.0, height: float | None = None):
    """A figure and axes with readable font sizes; height defaults to the golden ratio."""
    if height is None:
        height = width * (np.sqrt(5) - 1.0) / 2.0
    fig, ax = plt.subplots(figsize=(width, height), facecolor="w")
    ax.tick_params(labelsize=width * 1.4)
    for side in ("top", "right"):
        ax.spines[side].set_visible(False)
    return fig, ax


def _save(fig, path) -> Path:
    path = Path(path)
    # Fixed metadata keeps the PNG bytes reproducible.
    fig.savefig(path, dpi=120, bbox_inches="tight", metadata={"Software": None})
    plt.close(fig)
    return path


def plot_feature_importance(importance: Sequence[tuple[int, float]], path, top: int = 8) -> Path:
    """Horizontal bars of the ``top`` largest gain shares."""
    items = list(importance)[:top]
    labels = [f"f{i} {FEATURE_NAMES[i - 1]}" for i, _ in items]
    shares = [s for _, s in items]
    fig, ax = pretty_plot(7.0, 0.45 * len(items) + 1.2)
    y = np.arange(len(items))[::-1]
    ax.barh(y, shares, color="#4c72b0")
    ax.set_yticks(y)
    ax.set_yticklabels(labels)
    ax.set_xlabel("gain share", fontsize=11)
    ax.set_xlim(0, max(shares + [0.0]) * 1.1 or 1.0)
    return _save(fig, path)


def plot_system_comparison(report, path) -> Path:
    """Grouped bars of accuracy and F1 for every system in an evaluation report."""
    names = list(report.systems)
    acc = [report.systems[n].accuracy for n in names]
    f1 = [report.systems[n].f1 for n in names]
    fig, ax = pretty_plot(max(5.0, 1.4 * len(names) + 2))
    x = np.arange(len(names))
    w = 0.38
    ax.bar(x - w / 2, acc, w, label="accuracy", color="#4c72b0")
    ax.bar(x + w / 2, f1, w, label="F1", color="#dd8452")
    ax.set_xticks(x)
    ax.set_xticklabels(names, fontsize=10)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False, fontsize=10)
    return _save(fig, path)
