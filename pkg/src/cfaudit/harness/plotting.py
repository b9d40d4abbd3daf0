"""Static figures written next to the audit outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.colors import ListedColormap  # noqa: E402

from .grid import export_decision_grid, grid_bounds  # noqa: E402

REGION_COLORS = ("#cfe3f3", "#a9c4e8", "#f2c2bd", "#d9ead3", "#fff2cc", "#e6d0f0")
POINT_COLORS = ("#4a90c2", "#1f3f8f", "#c0392b", "#38761d", "#bf9000", "#7d3c98")
GENERATOR_COLORS = ("#f39c12", "#27ae60", "#8e44ad", "#16a085")


def _axes(width=6.0):
    fig, ax = plt.subplots(figsize=(width, width * 0.8))
    return fig, ax


def plot_decision_regions(ax, grid, resolution, n_classes):
    labels = grid[:, 2].reshape(resolution, resolution)
    x1 = grid[:resolution, 0]
    x2 = grid[::resolution, 1]
    cmap = ListedColormap(REGION_COLORS[:n_classes])
    ax.pcolormesh(x1, x2, labels, cmap=cmap, vmin=-0.5, vmax=n_classes - 0.5,
                  shading="nearest", rasterized=True)


def plot_training(ax, train, class_names):
    for k, name in enumerate(class_names):
        pts = train.X[train.y == k]
        ax.scatter(pts[:, 0], pts[:, 1], s=14, c=POINT_COLORS[k % len(POINT_COLORS)],
                   edgecolors="white", linewidths=0.4, label=name)


def save_grid_figure(grid, resolution, train, path, title=""):
    fig, ax = _axes()
    n_classes = len(train.class_names)
    plot_decision_regions(ax, grid, resolution, n_classes)
    plot_training(ax, train, train.class_names)
    ax.set_xlabel(train.feature_names[0])
    ax.set_ylabel(train.feature_names[1])
    if title:
        ax.set_title(title)
    ax.legend(loc="best", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_audit_figures(exp, rows, agg, out_dir) -> list[Path]:
    """Decision regions with every counterfactual, and proximity histograms."""
    out_dir = Path(out_dir)
    res = exp.cfg.grid.resolution
    bounds = grid_bounds(exp.data.X, exp.cfg.grid.margin)
    grid = export_decision_grid(exp.classifier, bounds, res)
    written = []

    fig, ax = _axes(6.5)
    plot_decision_regions(ax, grid, res, exp.data.n_classes)
    plot_training(ax, exp.train, exp.data.class_names)
    for k, section in enumerate(exp.cfg.generators):
        ok = [r for r in rows if r["generator"] == section.name and not r["failed"]]
        if not ok:
            continue
        cf = np.array([r["cf"] for r in ok])
        bad = np.array([r["connected"] is False for r in ok])
        color = GENERATOR_COLORS[k % len(GENERATOR_COLORS)]
        ax.scatter(cf[~bad, 0], cf[~bad, 1], s=18, marker="D", c=color, label=section.name)
        if bad.any():
            ax.scatter(cf[bad, 0], cf[bad, 1], s=40, marker="X", c=color,
                       edgecolors="black", linewidths=0.6,
                       label=f"{section.name} (not connected)")
    ax.set_xlabel(exp.data.feature_names[0])
    ax.set_ylabel(exp.data.feature_names[1])
    ax.set_xlim(*bounds[0])
    ax.set_ylim(*bounds[1])
    ax.legend(loc="best", fontsize=7, frameon=False)
    fig.tight_layout()
    path = out_dir / "counterfactuals.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    names = list(agg["generators"])
    fig, axes = plt.subplots(1, len(names), figsize=(4 * len(names), 3), squeeze=False)
    for ax, name in zip(axes[0], names):
        hist = agg["generators"][name]["proximity"]["histogram"]
        labels = [f"{a:g}" for a in hist["edges"][:-1]] + [f">={hist['edges'][-1]:g}"]
        ax.bar(range(len(hist["counts"])), hist["counts"], color="#7f8c8d")
        ax.set_xticks(range(len(labels)))
        ax.set_xticklabels(labels, rotation=60, fontsize=7)
        ax.set_title(f"{name}: proximity", fontsize=9)
    fig.tight_layout()
    path = out_dir / "proximity_hist.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
