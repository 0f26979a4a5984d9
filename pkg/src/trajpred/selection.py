"""Vehicle subset selection strategies for the interaction-score experiment.

A reduced scene keeps the target plus at most ``max_others`` other vehicles,
chosen by Euclidean distance at t=0, by the trained model's head-averaged
attention weights for the target row, by the generator's causal label, or at
random. Ties break toward the lower vehicle index (scene order).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .data import Scene
from .model import TrajectoryPredictor

STRATEGIES = ("euclidean", "attention", "oracle-causal", "random")


@dataclass(frozen=True)
class SelectionBudget:
    max_others: int  # L_s: cap on non-target vehicles kept
    strategy: str = "euclidean"

    def __post_init__(self):
        if self.max_others < 1:
            raise ValueError("max_others must be at least 1")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")


def _reduce(scene: Scene, keep_other_indices: np.ndarray) -> Scene:
    keep = sorted(int(i) for i in keep_other_indices)
    tracks = [scene.tracks[0]] + [scene.tracks[i] for i in keep]
    reduced = replace(scene, tracks=tracks, metadata=dict(scene.metadata))
    reduced.validate()
    return reduced


def euclidean_select(scene: Scene, max_others: int) -> Scene:
    """Keep the ``max_others`` vehicles closest to the target at t=0. The
    relative distance is frame-independent, so raw scenes work as well as
    target-local ones."""
    n_others = scene.num_vehicles - 1
    if n_others <= max_others:
        return scene
    tgt = scene.target.position_at(0)
    dists = np.array([np.linalg.norm(tr.position_at(0) - tgt) for tr in scene.tracks[1:]])
    order = np.argsort(dists, kind="stable")  # ties: lower index first
    return _reduce(scene, order[:max_others] + 1)


def attention_select(scene: Scene, max_others: int, model: TrajectoryPredictor,
                     ) -> tuple[Scene, dict]:
    """Keep the vehicles with the highest head-averaged attention weights in
    the target's row (self-weight excluded). Returns the reduced scene and an
    info dict flagging a uniform-attention fallback."""
    if not model.config.use_attention:
        raise ValueError("attention selection needs a model with the attention module")
    info: dict = {"uniform_fallback": False}
    n_others = scene.num_vehicles - 1
    if n_others <= max_others:
        return scene, info
    _, record = model.predict(scene)
    weights = record.mean[0, 1:]  # target row, self excluded
    if np.allclose(weights, weights[0], atol=1e-12):
        info["uniform_fallback"] = True
    order = np.argsort(-weights, kind="stable")  # ties: lower index first
    info["weights"] = weights
    return _reduce(scene, order[:max_others] + 1), info


def oracle_causal_select(scene: Scene, max_others: int) -> Scene:
    """Synthetic-only upper bound: always keep the labeled causal vehicle,
    fill the remaining budget by distance."""
    causal = scene.metadata.get("causal_track")
    if causal is None:
        raise ValueError(f"scene {scene.scene_id} carries no causal label")
    n_others = scene.num_vehicles - 1
    if n_others <= max_others:
        return scene
    ids = [tr.track_id for tr in scene.tracks]
    causal_idx = ids.index(causal)
    tgt = scene.target.position_at(0)
    dists = np.array([np.linalg.norm(tr.position_at(0) - tgt) for tr in scene.tracks[1:]])
    order = [i + 1 for i in np.argsort(dists, kind="stable") if i + 1 != causal_idx]
    keep = [causal_idx] + order[:max_others - 1]
    return _reduce(scene, np.array(keep))


def random_select(scene: Scene, max_others: int, rng: np.random.Generator) -> Scene:
    n_others = scene.num_vehicles - 1
    if n_others <= max_others:
        return scene
    pick = rng.choice(n_others, size=max_others, replace=False) + 1
    return _reduce(scene, pick)


def select(scene: Scene, budget: SelectionBudget, *,
           model: TrajectoryPredictor | None = None,
           rng: np.random.Generator | None = None) -> Scene:
    """Dispatch over the strategies; attention needs ``model``, random ``rng``."""
    if budget.strategy == "euclidean":
        return euclidean_select(scene, budget.max_others)
    if budget.strategy == "attention":
        if model is None:
            raise ValueError("attention strategy requires a trained selector model")
        return attention_select(scene, budget.max_others, model)[0]
    if budget.strategy == "oracle-causal":
        return oracle_causal_select(scene, budget.max_others)
    if rng is None:
        raise ValueError("random strategy requires an rng")
    return random_select(scene, budget.max_others, rng)


def causal_hit_rate(scenes, max_others: int, *, strategy: str = "attention",
                    model: TrajectoryPredictor | None = None,
                    rng: np.random.Generator | None = None) -> float:
    """Fraction of labeled scenes whose causal vehicle survives selection."""
    hits = 0
    labeled = 0
    for scene in scenes:
        causal = scene.metadata.get("causal_track")
        if causal is None:
            continue
        labeled += 1
        reduced = select(scene, SelectionBudget(max_others, strategy),
                         model=model, rng=rng)
        if any(tr.track_id == causal for tr in reduced.tracks[1:]):
            hits += 1
    if labeled == 0:
        raise ValueError("no scenes with causal labels")
    return hits / labeled
