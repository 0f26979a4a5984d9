"""Vehicle selection strategies and their invariants."""

import math

import numpy as np
import pytest

from trajpred.data import Scene, Track
from trajpred.model import ModelConfig, TrajectoryPredictor
from trajpred.selection import (SelectionBudget, attention_select, causal_hit_rate,
                                euclidean_select, oracle_causal_select, random_select,
                                select)
from trajpred.synthetic import generate_synthetic

TINY = ModelConfig(hidden_size=8, attention_heads=2, norm_groups=2, num_modes=1)


def _scene_with_others(dists, angles=None):
    steps = np.arange(-19, 1)
    angles = angles if angles is not None else [0.0] * len(dists)
    target = np.zeros((20, 2))
    target[:, 0] = np.arange(-19, 1) * 1.0
    tracks = [Track("agent", steps.copy(), target, role="target")]
    for i, (d, a) in enumerate(zip(dists, angles)):
        pos = np.tile([d * math.cos(a), d * math.sin(a)], (20, 1))
        tracks.append(Track(f"o{i}", steps.copy(), pos))
    return Scene("sel", tracks)


def test_budget_validation():
    with pytest.raises(ValueError, match="at least 1"):
        SelectionBudget(0)
    with pytest.raises(ValueError, match="unknown strategy"):
        SelectionBudget(1, "psychic")


def test_euclidean_scene_unchanged_when_budget_covers_all():
    scene = _scene_with_others([1.0, 2.0])
    assert euclidean_select(scene, 5) is scene


def test_euclidean_keeps_nearest():
    scene = _scene_with_others([3.0, 1.0, 2.0])
    reduced = euclidean_select(scene, 2)
    assert [t.track_id for t in reduced.tracks] == ["agent", "o1", "o2"]
    reduced.validate()


def test_euclidean_invariant_under_rotation():
    dists = [5.0, 2.0, 9.0, 4.0]
    base = _scene_with_others(dists)
    kept_base = [t.track_id for t in euclidean_select(base, 2).tracks]
    rotated = _scene_with_others(dists, angles=[1.1, 2.2, 3.3, 4.4])
    kept_rot = [t.track_id for t in euclidean_select(rotated, 2).tracks]
    assert kept_base == kept_rot


def test_euclidean_tie_breaks_to_lower_index():
    scene = _scene_with_others([2.0, 2.0, 2.0])
    reduced = euclidean_select(scene, 1)
    assert [t.track_id for t in reduced.tracks] == ["agent", "o0"]


def test_attention_two_vehicles_always_selected():
    model = TrajectoryPredictor(TINY, seed=0)
    scene = _scene_with_others([4.0])
    reduced, info = attention_select(scene, 1, model)
    assert [t.track_id for t in reduced.tracks] == ["agent", "o0"]
    assert info["uniform_fallback"] is False


def test_attention_requires_attention_module():
    model = TrajectoryPredictor(
        ModelConfig(hidden_size=8, attention_heads=2, norm_groups=2, num_modes=1,
                    use_attention=False), seed=0)
    with pytest.raises(ValueError, match="attention module"):
        attention_select(_scene_with_others([1.0, 2.0]), 1, model)


def test_attention_argmax_row_selected():
    # craft a scene where weights differ, then verify the reduction keeps
    # exactly the argmax vehicles of the recorded target row
    model = TrajectoryPredictor(TINY, seed=3)
    scene = generate_synthetic("leader-follower", 1, seed=1)[0]
    _, record = model.predict(scene)
    weights = record.mean[0, 1:]
    expected = {scene.tracks[1 + int(np.argmax(weights))].track_id}
    reduced, _ = attention_select(scene, 1, model)
    assert {t.track_id for t in reduced.tracks[1:]} == expected


def test_attention_uniform_fallback_flagged():
    # identical stationary vehicles at the same position produce identical
    # node features, hence uniform attention
    model = TrajectoryPredictor(TINY, seed=0)
    steps = np.arange(-19, 1)
    target = np.zeros((20, 2))
    target[:, 0] = np.arange(-19, 1) * 1.0
    tracks = [Track("agent", steps.copy(), target, role="target")]
    for i in range(3):
        tracks.append(Track(f"o{i}", steps.copy(), np.tile([5.0, 1.0], (20, 1))))
    reduced, info = attention_select(Scene("uni", tracks), 1, model)
    assert info["uniform_fallback"] is True
    assert reduced.tracks[1].track_id == "o0"  # lowest index wins ties


def test_attention_selection_ignores_future_rows():
    model = TrajectoryPredictor(TINY, seed=2)
    scene = generate_synthetic("leader-follower", 1, seed=4)[0]
    reduced_full, _ = attention_select(scene, 2, model)

    from dataclasses import replace

    masked_tracks = []
    for tr in scene.tracks:
        keep = tr.timesteps <= 0
        masked_tracks.append(Track(tr.track_id, tr.timesteps[keep],
                                   tr.positions[keep], tr.role))
    masked = replace(scene, tracks=masked_tracks)
    reduced_masked, _ = attention_select(masked, 2, model)
    assert [t.track_id for t in reduced_full.tracks] == \
        [t.track_id for t in reduced_masked.tracks]


def test_oracle_causal_always_keeps_label():
    scenes = generate_synthetic("leader-follower", 8, seed=5)
    for scene in scenes:
        reduced = oracle_causal_select(scene, 1)
        assert any(t.track_id == "leader" for t in reduced.tracks[1:])
    assert causal_hit_rate(scenes, 1, strategy="oracle-causal") == 1.0


def test_random_select_seeded_and_valid():
    scene = _scene_with_others([1.0, 2.0, 3.0, 4.0])
    a = random_select(scene, 2, np.random.default_rng(0))
    b = random_select(scene, 2, np.random.default_rng(0))
    assert [t.track_id for t in a.tracks] == [t.track_id for t in b.tracks]
    a.validate()


def test_select_dispatch_requirements():
    scene = _scene_with_others([1.0, 2.0])
    with pytest.raises(ValueError, match="selector model"):
        select(scene, SelectionBudget(1, "attention"))
    with pytest.raises(ValueError, match="rng"):
        select(scene, SelectionBudget(1, "random"))


def test_reduced_scenes_keep_target_and_observability():
    model = TrajectoryPredictor(TINY, seed=1)
    rng = np.random.default_rng(3)
    for scene in generate_synthetic("leader-follower", 6, seed=6):
        for budget in (SelectionBudget(1), SelectionBudget(2, "attention"),
                       SelectionBudget(3, "random")):
            reduced = select(scene, budget, model=model, rng=rng)
            reduced.validate()
            assert reduced.tracks[0].role == "target"
            assert reduced.num_vehicles <= budget.max_others + 1
