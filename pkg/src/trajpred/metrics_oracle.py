"""Brute-force twin of the displacement metrics.

Plain nested loops with no vectorized shortcuts, kept around to cross-check
the production implementations exactly. The per-trajectory averages go
through np.mean so the floating-point summation order matches the vectorized
path; everything else is scalar arithmetic.
"""

from __future__ import annotations

import math

import numpy as np


def _dist(p, q) -> float:
    dx = p[0] - q[0]
    dy = p[1] - q[1]
    return math.sqrt(dx * dx + dy * dy)


def oracle_min_ade(preds, gt) -> float:
    best = None
    for mode in range(len(preds)):
        step_dists = []
        for t in range(len(gt)):
            step_dists.append(_dist(preds[mode][t], gt[t]))
        ade = float(np.mean(step_dists))
        if best is None or ade < best:
            best = ade
    return best


def oracle_min_fde(preds, gt) -> float:
    best = None
    for mode in range(len(preds)):
        fde = _dist(preds[mode][len(gt) - 1], gt[len(gt) - 1])
        if best is None or fde < best:
            best = fde
    return best


def oracle_miss_rate(preds_per_seq, gts, threshold: float = 2.0) -> float:
    misses = 0
    for preds, gt in zip(preds_per_seq, gts):
        closest = oracle_min_fde(preds, gt)
        if not closest < threshold:  # strictly-closer-than reading
            misses += 1
    return misses / len(preds_per_seq)
