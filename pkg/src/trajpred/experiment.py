"""Attention-vs-Euclidean vehicle selection experiment.

For each (strategy, budget, seed) cell, the training and validation splits
are reduced to the selected vehicle subsets and an independent predictor,
the attention-free model variant, is retrained from scratch on the reduced
data. Metric deltas against a full-data reference run of the same predictor
quantify how much predictive signal each selection strategy retains;
positive deltas mean degradation.

The selector producing the attention subsets is a trained full model with
the attention module; the retrained predictor never contains one, keeping
the comparison unbiased.
"""

from __future__ import annotations

import csv
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from .data import Scene
from .metrics import evaluate
from .model import ModelConfig, TrajectoryPredictor
from .selection import SelectionBudget, select
from .training import TrainConfig, train

HEADER_NOTE = ("# independent predictor: attention-free variant of the in-repo model "
               "(LSTM + graph convolution + residual decoders), retrained per cell")

TABLE_COLUMNS = ["strategy", "budget", "seed", "minADE6", "minFDE6", "MR6",
                 "d_minADE6", "d_minFDE6", "d_MR6"]


def _train_and_score(train_scenes: Sequence[Scene], val_scenes: Sequence[Scene],
                     config: TrainConfig, model_config: ModelConfig, k: int):
    result = train(train_scenes, val_scenes=None, config=config,
                   model_config=model_config)
    return evaluate(result.model, val_scenes, k=k)


def run_experiment(train_scenes: Sequence[Scene], val_scenes: Sequence[Scene],
                   selector: TrajectoryPredictor, budgets: Sequence[int],
                   seeds: Sequence[int], config: TrainConfig,
                   strategies: Sequence[str] = ("euclidean", "attention"),
                   k: int | None = None) -> list[dict]:
    """Full grid: per seed one reference run on the unreduced splits, then one
    retrained predictor per (strategy, budget). Returns the table rows."""
    k = config.num_modes if k is None else k
    predictor_config = ModelConfig(num_modes=config.num_modes, use_attention=False)
    rows: list[dict] = []
    for seed in seeds:
        cfg = replace(config, seed=int(seed))
        ref = _train_and_score(train_scenes, val_scenes, cfg, predictor_config, k)
        rows.append({"strategy": "reference", "budget": "", "seed": int(seed),
                     "minADE6": ref.min_ade, "minFDE6": ref.min_fde,
                     "MR6": ref.miss_rate, "d_minADE6": 0.0, "d_minFDE6": 0.0,
                     "d_MR6": 0.0})
        for strategy in strategies:
            for budget in budgets:
                sb = SelectionBudget(int(budget), strategy)
                red_train = [select(s, sb, model=selector) for s in train_scenes]
                red_val = [select(s, sb, model=selector) for s in val_scenes]
                rep = _train_and_score(red_train, red_val, cfg, predictor_config, k)
                rows.append({"strategy": strategy, "budget": int(budget),
                             "seed": int(seed), "minADE6": rep.min_ade,
                             "minFDE6": rep.min_fde, "MR6": rep.miss_rate,
                             "d_minADE6": rep.min_ade - ref.min_ade,
                             "d_minFDE6": rep.min_fde - ref.min_fde,
                             "d_MR6": rep.miss_rate - ref.miss_rate})
    return rows


def save_table(path, rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(HEADER_NOTE + "\n")
        writer = csv.writer(fh)
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow([row["strategy"], row["budget"], row["seed"],
                             repr(row["minADE6"]), repr(row["minFDE6"]),
                             repr(row["MR6"]), repr(row["d_minADE6"]),
                             repr(row["d_minFDE6"]), repr(row["d_MR6"])])


def load_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    rows = []
    for rec in reader:
        row = dict(rec)
        for col in TABLE_COLUMNS[3:]:
            row[col] = float(row[col])
        rows.append(row)
    return rows


def mean_delta(rows: Sequence[dict], strategy: str, budget: int,
               column: str = "d_minADE6") -> float:
    """Average of one delta column over seeds for a (strategy, budget) cell."""
    vals = [r[column] for r in rows
            if r["strategy"] == strategy and str(r["budget"]) == str(budget)]
    if not vals:
        raise ValueError(f"no rows for strategy={strategy} budget={budget}")
    return sum(vals) / len(vals)
