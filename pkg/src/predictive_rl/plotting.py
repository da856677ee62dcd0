"""PNG renderings of the per-horizon plot data."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import EpisodeLog  # noqa: E402
from .io import plot_series  # noqa: E402

COLORS = {"MPC": "tab:blue", "RQL": "tab:orange", "SQL": "tab:green"}
LINESTYLES = ("-", "--", ":", "-.")

_PANELS = {
    "distance": ("distance", "distance to goal [m]"),
    "heading": ("theta", "heading error [rad]"),
    "accumulated_cost": ("accumulated_cost", "accumulated cost"),
}


def _episodes(logs: Sequence[EpisodeLog], horizon: int):
    # repetitions share a start; draw one curve per (method, start)
    seen, out = set(), []
    for e in logs:
        key = (e.method, e.start_index)
        if e.horizon == horizon and key not in seen:
            seen.add(key)
            out.append(e)
    return out


def render_horizon(logs: Sequence[EpisodeLog], horizon: int, directory) -> list:
    """Write ``distance``, ``heading``, ``accumulated_cost`` and ``trajectory`` PNGs."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    eps = [(e, plot_series(e)) for e in _episodes(logs, horizon)]
    written = []
    for name, (key, ylabel) in _PANELS.items():
        fig, ax = plt.subplots(figsize=(6, 3.5))
        for e, s in eps:
            ls = LINESTYLES[e.start_index % len(LINESTYLES)]
            label = f"{e.method} start {e.start_index}"
            ax.plot(s["t"], s[key], ls, color=COLORS.get(e.method), lw=1.2, label=label)
        ax.set_xlabel("time [s]")
        ax.set_ylabel(ylabel)
        ax.set_title(f"N = {horizon}")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=7, ncol=3)
        fig.tight_layout()
        path = directory / f"{name}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    fig, ax = plt.subplots(figsize=(5, 5))
    for e, s in eps:
        ls = LINESTYLES[e.start_index % len(LINESTYLES)]
        ax.plot(s["x"], s["y"], ls, color=COLORS.get(e.method), lw=1.2, label=f"{e.method} start {e.start_index}")
    ax.plot([0], [0], "k*", ms=10)
    ax.set_aspect("equal", adjustable="datalim")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(f"trajectories, N = {horizon}")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    path = directory / "trajectory.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written
