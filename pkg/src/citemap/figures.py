"""Report figures rendered to files with matplotlib (Agg backend).

Each reporting stage of the pipeline writes these alongside its delimited
output: the topic map scatter, accuracy-vs-resolution curves, the sampling
sweep heat map, and the edge-overlap bars.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .communities import AccuracyTable
from .scimap import Topic, _CATEGORICAL_PALETTE

_DPI = 120
# Pinned metadata keeps renders byte-identical across runs.
_PNG_METADATA = {"Software": "citemap"}


def _save(fig, path: str) -> None:
    fig.savefig(path, dpi=_DPI, metadata=_PNG_METADATA)
    plt.close(fig)


def plot_map(topics: Sequence[Topic], path: str, color_by: str = "field") -> None:
    """Topic scatter with dot area proportional to topic size."""
    fig, ax = plt.subplots(figsize=(7.0, 5.0))
    xs = [t.x for t in topics]
    ys = [t.y for t in topics]
    max_size = max(t.size for t in topics)
    sizes = [600.0 * t.size / max_size + 15.0 for t in topics]
    if color_by == "field":
        fields = sorted({t.field or "unknown" for t in topics})
        colors = {f: _CATEGORICAL_PALETTE[i % len(_CATEGORICAL_PALETTE)] for i, f in enumerate(fields)}
        ax.scatter(xs, ys, s=sizes, c=[colors[t.field or "unknown"] for t in topics],
                   alpha=0.85, edgecolors="#333333", linewidths=0.5)
        handles = [plt.Line2D([], [], marker="o", linestyle="", color=colors[f], label=f) for f in fields]
        ax.legend(handles=handles, loc="upper right", fontsize=8, frameon=False)
    else:
        values = [getattr(t, color_by) for t in topics]
        sc = ax.scatter(xs, ys, s=sizes, c=values, cmap="viridis",
                        alpha=0.85, edgecolors="#333333", linewidths=0.5)
        fig.colorbar(sc, ax=ax, label=color_by)
    ax.set_xlabel("dimension 1")
    ax.set_ylabel("dimension 2")
    ax.set_title("topic map")
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    _save(fig, path)


def plot_accuracy(table: AccuracyTable, path: str) -> None:
    """Accuracy against resolution, one line per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, method in enumerate(table.methods()):
        rows = [r for r in table.rows if r.method == method]
        rows.sort(key=lambda r: r.resolution)
        ax.plot(
            [r.resolution for r in rows],
            [r.accuracy for r in rows],
            marker="o",
            color=_CATEGORICAL_PALETTE[i % len(_CATEGORICAL_PALETTE)],
            label=method,
        )
    ax.set_xscale("log")
    ax.set_xlabel("resolution")
    ax.set_ylabel("accuracy")
    ax.set_title("clustering accuracy by granularity")
    ax.legend(fontsize=8, frameon=False)
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    _save(fig, path)


def plot_sweep(rows: Sequence[dict], path: str) -> None:
    """Heat map of validation MAP over (margin, hard-negative count) cells."""
    margins = sorted({r["margin"] for r in rows})
    h_values = sorted({r["h_hard"] for r in rows})
    grid = np.full((len(margins), len(h_values)), np.nan)
    for r in rows:
        grid[margins.index(r["margin"]), h_values.index(r["h_hard"])] = r["map"]
    fig, ax = plt.subplots(figsize=(1.4 * len(h_values) + 2.5, 1.1 * len(margins) + 2.0))
    im = ax.imshow(grid, cmap="viridis", aspect="auto")
    ax.set_xticks(range(len(h_values)), [str(h) for h in h_values])
    ax.set_yticks(range(len(margins)), [str(m) for m in margins])
    ax.set_xlabel("hard negatives per anchor")
    ax.set_ylabel("margin")
    ax.set_title("validation MAP")
    for i in range(len(margins)):
        for j in range(len(h_values)):
            if not np.isnan(grid[i, j]):
                ax.text(j, i, f"{grid[i, j]:.3f}", ha="center", va="center", color="white", fontsize=9)
    fig.colorbar(im, ax=ax)
    _save(fig, path)


def plot_overlap(counts: dict[str, dict[str, int]], path: str) -> None:
    """Grouped bars of shared vs exclusive edges for each comparison."""
    names = list(counts)
    keys = ("shared", "only_first", "only_second")
    x = np.arange(len(names))
    width = 0.25
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for i, key in enumerate(keys):
        ax.bar(x + (i - 1) * width, [counts[n][key] for n in names], width,
               label=key.replace("_", " "), color=_CATEGORICAL_PALETTE[i])
    ax.set_xticks(x, names)
    ax.set_ylabel("edges")
    ax.set_title("edge overlap")
    ax.legend(fontsize=8, frameon=False)
    for spine in ("top", "right"):
        ax.spines[spine].set_visible(False)
    _save(fig, path)
