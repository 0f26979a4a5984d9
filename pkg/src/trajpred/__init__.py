"""Map-free, interaction-aware, multi-modal vehicle trajectory prediction."""

from .autodiff import Tensor, backward, forward_primitive
from .data import Scene, Track, encode_inputs, load_scene_csv, to_target_frame
from .gradcheck import finite_diff_check
from .metrics import evaluate, min_ade, min_fde, miss_rate
from .model import ModelConfig, TrajectoryPredictor, build_graph, load_model, save_model
from .optim import AdamState, adam_step
from .synthetic import generate_synthetic
from .training import TrainConfig, smooth_l1, train, wta_loss

__version__ = "0.1.0"

__all__ = [
    "AdamState", "ModelConfig", "Scene", "Tensor", "Track", "TrainConfig",
    "TrajectoryPredictor", "adam_step", "backward", "build_graph",
    "encode_inputs", "evaluate", "finite_diff_check", "forward_primitive",
    "generate_synthetic", "load_model", "load_scene_csv", "min_ade", "min_fde",
    "miss_rate", "save_model", "smooth_l1", "to_target_frame", "train",
    "wta_loss",
]
