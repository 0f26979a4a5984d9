"""Figure rendering. All figures are static SVG files written next to the
delimited outputs; nothing interactive."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .data import Scene
from .metrics import MetricReport
from .model import PredictionSet

# Color scheme: observed target history blue, ground-truth future green,
# most probable mode orange, remaining modes red, other vehicles purple.
HISTORY_COLOR = "tab:blue"
GT_COLOR = "tab:green"
MODE0_COLOR = "tab:orange"
MODES_COLOR = "tab:red"
OTHERS_COLOR = "tab:purple"


def plot_scene(scene: Scene, path, predictions: PredictionSet | None = None) -> Path:
    """Draw one scene (raw frame) with optional predicted modes."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 6))
    for tr in scene.tracks[1:]:
        hist = tr.positions[tr.timesteps <= 0]
        ax.plot(hist[:, 0], hist[:, 1], color=OTHERS_COLOR, alpha=0.7, lw=1.2)
        ax.plot(hist[-1, 0], hist[-1, 1], "o", color=OTHERS_COLOR, ms=3)
    tgt = scene.target
    hist = tgt.positions[tgt.timesteps <= 0]
    ax.plot(hist[:, 0], hist[:, 1], color=HISTORY_COLOR, lw=2.0, label="history")
    fut = tgt.positions[tgt.timesteps > 0]
    if len(fut):
        ax.plot(fut[:, 0], fut[:, 1], color=GT_COLOR, lw=2.0, label="ground truth")
    if predictions is not None:
        trajs = predictions.raw_trajectories()
        for m in range(trajs.shape[0] - 1, -1, -1):
            color = MODE0_COLOR if m == 0 else MODES_COLOR
            label = "mode 0" if m == 0 else ("modes 1+" if m == 1 else None)
            ax.plot(trajs[m, :, 0], trajs[m, :, 1], color=color, lw=1.5,
                    alpha=0.9 if m == 0 else 0.6, label=label)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    ax.set_title(scene.scene_id)
    ax.legend(loc="best", fontsize=8)
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_metric_bars(reports: Sequence[MetricReport], path) -> Path:
    """Grouped bars of minADE / minFDE / MR per report row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, 3, figsize=(10, 3.2))
    labels = [f"{r.split}@k={r.k}" for r in reports]
    for ax, metric, title in zip(
            axes,
            [[r.min_ade for r in reports], [r.min_fde for r in reports],
             [r.miss_rate for r in reports]],
            ["minADE [m]", "minFDE [m]", "miss rate"]):
        ax.bar(np.arange(len(reports)), metric, color="tab:blue")
        ax.set_xticks(np.arange(len(reports)))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_title(title, fontsize=9)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path


def plot_experiment(rows: Sequence[dict], path) -> Path:
    """Selection-experiment deltas vs the full-data reference: one panel per
    metric, grouped bars over budgets, Euclidean blue / attention orange.
    Positive bars mean degradation."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    budgets = sorted({int(r["budget"]) for r in rows if r["strategy"] != "reference"})
    strategies = [("euclidean", "tab:blue"), ("attention", "tab:orange")]

    def cell_mean(strategy, budget, col):
        vals = [r[col] for r in rows
                if r["strategy"] == strategy and str(r["budget"]) == str(budget)]
        return float(np.mean(vals)) if vals else np.nan

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.2))
    width = 0.35
    x = np.arange(len(budgets))
    for ax, col, title in zip(axes, ["d_minADE6", "d_minFDE6", "d_MR6"],
                              ["minADE@6 delta [m]", "minFDE@6 delta [m]",
                               "MR@6 delta"]):
        for s, (strategy, color) in enumerate(strategies):
            vals = [cell_mean(strategy, b, col) for b in budgets]
            ax.bar(x + (s - 0.5) * width, vals, width, color=color, label=strategy)
        ax.axhline(0.0, color="black", lw=0.8)
        ax.set_xticks(x)
        ax.set_xticklabels([str(b) for b in budgets])
        ax.set_xlabel("selection budget")
        ax.set_title(title, fontsize=9)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return path
