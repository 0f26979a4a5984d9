"""Shared trained-model fixtures for the slower end-to-end tests."""

import numpy as np
import pytest

from trajpred.synthetic import generate_synthetic
from trajpred.training import TrainConfig, train


@pytest.fixture(scope="session")
def cv_overfit():
    """Stage-1-only overfit run on 10 constant-velocity scenes."""
    scenes = generate_synthetic("constant-velocity", 10, seed=3)
    cfg = TrainConfig(stage1_epochs=200, stage2_epochs=0, batch_size=32, lr=1e-2,
                      lr_drop_epoch=150, num_modes=1, seed=0, weight_decay=0.0)
    return scenes, train(scenes, None, cfg)


@pytest.fixture(scope="session")
def cv_wide():
    """Constant-velocity run with enough scenes to generalize (used by the
    vehicle-ablation harness)."""
    train_scenes = generate_synthetic("constant-velocity", 64, seed=51)
    val_scenes = generate_synthetic("constant-velocity", 16, seed=52)
    cfg = TrainConfig(stage1_epochs=60, stage2_epochs=0, batch_size=32, lr=5e-3,
                      lr_drop_epoch=45, num_modes=1, seed=0, weight_decay=1e-4)
    return val_scenes, train(train_scenes, None, cfg).model


@pytest.fixture(scope="session")
def bimodal_trained():
    """Two-stage k=2 run on the bimodal-turn suite."""
    train_scenes = generate_synthetic("bimodal-turn", 128, seed=11)
    val_scenes = generate_synthetic("bimodal-turn", 64, seed=12)
    cfg = TrainConfig(stage1_epochs=80, stage2_epochs=80, batch_size=32, lr=1e-2,
                      lr_drop_epoch=60, num_modes=2, seed=0, weight_decay=0.0)
    return val_scenes, train(train_scenes, None, cfg)


@pytest.fixture(scope="session")
def lf_suite():
    """Leader-follower splits plus a trained full-model selector."""
    train_scenes = generate_synthetic("leader-follower", 192, seed=31)
    val_scenes = generate_synthetic("leader-follower", 48, seed=32)
    cfg = TrainConfig(stage1_epochs=60, stage2_epochs=0, batch_size=32, lr=5e-3,
                      lr_drop_epoch=45, num_modes=1, seed=0, weight_decay=1e-4)
    selector = train(train_scenes, None, cfg).model
    return train_scenes, val_scenes, selector
