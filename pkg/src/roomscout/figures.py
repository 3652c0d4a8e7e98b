"""Matplotlib renderers for the report paths: floor-map images, the
alpha-sweep curve, and per-method RmIoU bars. Figures are written headless
with fixed metadata so reruns produce identical bytes."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import OccupancyGrid

_SAVEFIG = {"dpi": 120, "metadata": {"Software": None}}


def save_grid_figure(grid: OccupancyGrid, path, title: str = "") -> None:
    spec = grid.spec
    extent = (spec.origin[0], spec.x_max, spec.origin[1], spec.y_max)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.imshow(grid.cells, origin="lower", extent=extent, cmap="gray_r", vmin=0.0, vmax=1.0)
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def save_alpha_sweep(tables: dict[str, list[tuple[float, float]]], path) -> None:
    """Mean selection IoU against the error rate, one curve per method."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for method in sorted(tables):
        rows = tables[method]
        ax.plot([a for a, _ in rows], [v for _, v in rows], marker="o", label=method)
    ax.set_xlabel(r"error rate $\alpha$")
    ax.set_ylabel("mean selection IoU")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)


def save_rmiou_bars(averages: dict[str, float], path) -> None:
    methods = sorted(averages)
    values = [averages[m] for m in methods]
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(np.arange(len(methods)), values, color="steelblue")
    ax.set_xticks(np.arange(len(methods)))
    ax.set_xticklabels(methods)
    ax.set_ylabel("average RmIoU")
    ax.set_ylim(0.0, 1.05)
    for i, v in enumerate(values):
        ax.text(i, v + 0.02, f"{v:.3f}", ha="center", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, **_SAVEFIG)
    plt.close(fig)
