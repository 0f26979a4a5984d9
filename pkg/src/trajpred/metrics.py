"""Displacement metrics for multi-modal predictions of the target vehicle."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .data import DataError, Scene
from .model import TrajectoryPredictor, prepare_scene

MISS_THRESHOLD_M = 2.0


@dataclass
class MetricReport:
    split: str
    k: int
    min_ade: float
    min_fde: float
    miss_rate: float
    n_sequences: int

    def __str__(self) -> str:
        return (f"{self.split} k={self.k} n={self.n_sequences}: "
                f"minADE={self.min_ade:.4f} minFDE={self.min_fde:.4f} "
                f"MR={self.miss_rate:.4f}")


def min_ade(preds: np.ndarray, gt: np.ndarray) -> float:
    """Minimum over modes of the mean pointwise Euclidean error.

    Args:
        preds: (k, T, 2) predicted trajectories.
        gt: (T, 2) ground truth.
    """
    if preds.shape[1:] != gt.shape:
        raise ValueError(f"shape mismatch: preds {preds.shape} vs gt {gt.shape}")
    dists = np.linalg.norm(preds - gt, axis=-1)
    return float(dists.mean(axis=1).min())


def min_fde(preds: np.ndarray, gt: np.ndarray) -> float:
    """Minimum over modes of the endpoint Euclidean error."""
    if preds.shape[1:] != gt.shape:
        raise ValueError(f"shape mismatch: preds {preds.shape} vs gt {gt.shape}")
    return float(np.linalg.norm(preds[:, -1] - gt[-1], axis=-1).min())


def miss_rate(preds_per_seq: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    """Fraction of sequences where no predicted endpoint is strictly closer
    than 2 m to the ground-truth endpoint (the boundary counts as a miss)."""
    if len(preds_per_seq) == 0:
        raise DataError("miss_rate needs at least one sequence")
    misses = sum(1 for p, g in zip(preds_per_seq, gts)
                 if min_fde(p, g) >= MISS_THRESHOLD_M)
    return misses / len(preds_per_seq)


def evaluate(model: TrajectoryPredictor, scenes: Sequence[Scene], k: int,
             split: str = "val") -> MetricReport:
    """Score decoder subset {0..k-1} on the target vehicle of every scene."""
    if not scenes:
        raise DataError("empty evaluation split")
    if k < 1 or k > model.config.num_modes:
        raise ValueError(f"k={k} outside available modes (1..{model.config.num_modes})")
    preds, gts = [], []
    for scene in scenes:
        ps = prepare_scene(scene)
        if ps.gt_offsets is None:
            raise DataError(f"scene {ps.scene_id} has no ground-truth future")
        pset, _ = model.predict(scene)
        preds.append(pset.trajectories[:k])
        gts.append(ps.gt_offsets.reshape(-1, 2) + ps.pos0[0])
    ades = [min_ade(p, g) for p, g in zip(preds, gts)]
    fdes = [min_fde(p, g) for p, g in zip(preds, gts)]
    return MetricReport(split=split, k=k,
                        min_ade=float(np.mean(ades)),
                        min_fde=float(np.mean(fdes)),
                        miss_rate=miss_rate(preds, gts),
                        n_sequences=len(scenes))


REPORT_COLUMNS = ["split", "k", "minADE", "minFDE", "MR", "n"]


def save_reports(path, reports: Sequence[MetricReport]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            writer.writerow([r.split, r.k, repr(r.min_ade), repr(r.min_fde),
                             repr(r.miss_rate), r.n_sequences])
