"""Figure rendering for run artifacts.

Non-interactive backend only; every helper writes one PNG and closes the
figure, so batch runs never accumulate state.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .grids import Grid

__all__ = ["plot_field", "plot_series", "plot_bound_check", "plot_residuals"]

plt.rcParams.update({
    "figure.dpi": 140,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
})


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def plot_field(path, grid: Grid, curves: dict, title: str = "", ylabel: str = "u") -> None:
    """One line per entry in d=1; one panel per entry in d=2."""
    if grid.dim == 1:
        fig, ax = plt.subplots(figsize=(6.4, 4.2))
        x = grid.axis()
        for name, values in curves.items():
            ax.plot(x, np.asarray(values).ravel(), label=name)
        ax.set_xlabel("x")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(curves) > 1:
            ax.legend()
        _finish(fig, path)
        return
    n = len(curves)
    fig, axes = plt.subplots(1, n, figsize=(4.4 * n, 4.0), squeeze=False)
    extent = (-grid.half_width, grid.half_width, -grid.half_width, grid.half_width)
    for ax, (name, values) in zip(axes[0], curves.items()):
        img = ax.imshow(np.asarray(values).reshape(grid.shape).T, origin="lower",
                        extent=extent, aspect="equal", cmap="viridis")
        ax.set_title(name)
        ax.set_xlabel("x")
        ax.set_ylabel("y")
        fig.colorbar(img, ax=ax, shrink=0.8)
    if title:
        fig.suptitle(title)
    _finish(fig, path)


def plot_series(path, x, series: dict, title: str = "", xlabel: str = "",
                ylabel: str = "", logx: bool = False, logy: bool = False) -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    x = np.asarray(x, dtype=float)
    for name, values in series.items():
        ax.plot(x, np.asarray(values, dtype=float), marker="o", markersize=3.5,
                label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    _finish(fig, path)


def plot_bound_check(path, rows: list, title: str = "") -> None:
    """Wilson upper endpoints against the theoretical envelope, per horizon."""
    fig, ax = plt.subplots(figsize=(6.4, 4.2))
    times = sorted({row["t"] for row in rows})
    for t in times:
        sub = sorted((r for r in rows if r["t"] == t), key=lambda r: r["r"])
        rs = [r["r"] for r in sub]
        ax.plot(rs, [max(r["wilson_upper"], 1e-12) for r in sub], marker="o",
                markersize=4, label=f"upper CI, t={t:g}")
        ax.plot(rs, [max(r["bound"], 1e-12) for r in sub], marker="s",
                linestyle="--", markersize=4, label=f"envelope, t={t:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("radius")
    ax.set_ylabel("exceedance probability")
    if title:
        ax.set_title(title)
    ax.legend()
    _finish(fig, path)


def plot_residuals(path, labels: list, values: list, half_widths: list,
                   title: str = "", ylabel: str = "residual") -> None:
    """Point estimates with symmetric uncertainty bars."""
    fig, ax = plt.subplots(figsize=(5.2, 4.0))
    xs = np.arange(len(labels))
    ax.errorbar(xs, values, yerr=half_widths, fmt="o", capsize=4)
    ax.axhline(0.0, color="black", linewidth=0.8)
    ax.set_xticks(xs)
    ax.set_xticklabels(labels)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    _finish(fig, path)
