"""Static figures written next to the CSV outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

COLORS = ["tab:blue", "tab:red", "tab:green", "tab:purple", "tab:orange"]


def _shade_seasons(ax, D: float, t_end: float) -> None:
    k = 1
    while k * D < t_end:
        ax.axvspan(k * D, min((k + 1) * D, t_end), color="0.93", lw=0)
        k += 2


def plot_densities(path: str, times, dens, D: float, curves=None, title: str | None = None) -> str:
    """Density time series, season 2 shaded; ``curves`` maps label -> (t, u) overlays."""
    fig, ax = plt.subplots(figsize=(8, 3.2))
    t_end = float(times[-1]) if len(times) else 0.0
    _shade_seasons(ax, D, t_end)
    for i in range(dens.shape[1]):
        ax.plot(times, dens[:, i], color=COLORS[i % len(COLORS)], lw=1.5, label=f"species {i + 1}")
    for label, (t, u) in (curves or {}).items():
        ax.plot(t, u, "k--", lw=1, label=label)
    ax.set_xlim(0, max(t_end, 1e-12))
    ax.set_ylim(0, 1)
    ax.set_xlabel("time")
    ax.set_ylabel("density")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8, frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_sweep(path: str, rows: list, xkey: str, ykey: str | None, value: str) -> str:
    """Line plot for a 1-parameter sweep, heat map for 2 parameters."""
    fig, ax = plt.subplots(figsize=(5, 4))
    xs = np.array([float(r[xkey]) for r in rows])
    vals = np.array([float(r[value]) for r in rows])
    if ykey is None:
        order = np.argsort(xs)
        ax.plot(xs[order], vals[order], "o-")
        ax.set_xlabel(xkey)
        ax.set_ylabel(value)
        ax.set_ylim(-0.05, 1.05)
    else:
        ys = np.array([float(r[ykey]) for r in rows])
        ux, uy = np.unique(xs), np.unique(ys)
        grid = np.full((uy.size, ux.size), np.nan)
        for x, y, v in zip(xs, ys, vals):
            grid[np.searchsorted(uy, y), np.searchsorted(ux, x)] = v
        im = ax.pcolormesh(ux, uy, grid, shading="nearest", vmin=0, vmax=1)
        fig.colorbar(im, ax=ax, label=value)
        ax.set_xlabel(xkey)
        ax.set_ylabel(ykey)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
