"""SVG figures for sweeps and single-episode trajectories.

Every figure gets a sidecar CSV (``series,x,y``) holding exactly the plotted
points, written next to the image with a ``.csv`` suffix.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .env import EpisodeResult  # noqa: E402
from .sweep import AXES, SweepRow, infer_axis  # noqa: E402

AXIS_LABELS = {
    "initial_temp": "Initial temperature (°C)",
    "deadline": "Deadline D (steps)",
    "target_temp": "Target temperature (°C)",
}
COLORS = {"bangbang": "#d62728", "mcts": "#ff7f0e", "ppo": "#1f77b4", "oracle": "#2ca02c"}
KINDS = ("scatter_by_axis", "trajectory")

plt.rcParams["svg.hashsalt"] = "heatplan"


def _series_from_rows(rows: Sequence[SweepRow], axis: str) -> dict[str, list[tuple[float, float]]]:
    series: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        series.setdefault(r.controller, []).append((float(r.grid_value(axis)), float(r.energy_wh)))
    return series


def _series_from_trajectories(trajectories: Mapping[str, EpisodeResult | Sequence[float]]):
    series = {}
    for label, traj in trajectories.items():
        temps = traj.temps if isinstance(traj, EpisodeResult) else list(traj)
        series[label] = [(float(i), float(t)) for i, t in enumerate(temps)]
    return series


def emit_plot(rows, kind: str, path: str | Path, axis: str | None = None, target_c: float | None = None) -> Path:
    """Write a figure and its sidecar CSV; returns the figure path.

    Args:
        rows: For ``scatter_by_axis``, sweep rows. For ``trajectory``, a
            mapping of series label to an EpisodeResult or a temperature
            sequence indexed by step.
        kind: ``"scatter_by_axis"`` or ``"trajectory"``.
        path: Output file; the format follows its suffix (SVG by default).
        axis: Sweep axis; inferred from the rows when omitted.
        target_c: Optional horizontal reference line for trajectories.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown plot kind {kind!r}; choose from {KINDS}")
    if not rows:
        raise ValueError("nothing to plot")
    path = Path(path)
    if path.suffix.lower() == ".csv":
        raise ValueError(f"{path}: figure path would collide with its sidecar CSV")
    if kind == "scatter_by_axis":
        axis = axis or infer_axis(rows)
        if axis not in AXES:
            raise ValueError(f"unknown axis {axis!r}")
        series = _series_from_rows(rows, axis)
        xlabel, ylabel = AXIS_LABELS[axis], "Total energy (Wh)"
    else:
        series = _series_from_trajectories(rows)
        xlabel, ylabel = "Step", "Temperature (°C)"

    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    for label, pts in series.items():
        xs, ys = zip(*pts)
        color = COLORS.get(label)
        if kind == "scatter_by_axis":
            ax.scatter(xs, ys, label=label, color=color, s=24, alpha=0.8)
        else:
            ax.plot(xs, ys, label=label, color=color, linewidth=1.4)
    if kind == "trajectory" and target_c is not None:
        ax.axhline(target_c, color="grey", linestyle="--", linewidth=0.8, label="target")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    try:
        fig.savefig(path, metadata={"Date": None} if path.suffix.lower() in ("", ".svg") else None,
                    format="svg" if path.suffix.lower() in ("", ".svg") else None)
    finally:
        plt.close(fig)

    with open(path.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["series", "x", "y"])
        for label, pts in series.items():
            for x, y in pts:
                w.writerow([label, f"{x:g}", repr(y)])
    return path
