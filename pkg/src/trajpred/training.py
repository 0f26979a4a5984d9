"""Two-stage training.

Stage 1 trains the whole network end-to-end with a single decoder under
smooth-L1 loss on the target vehicle. Stage 2 freezes everything, adds k - 1
decoders, and trains only those with winner-takes-all loss: per scene, only
the decoder with the smallest smooth-L1 loss receives gradient. The frozen
part runs in evaluation mode during stage 2, so stage-1 parameters and
normalization statistics stay bit-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, zero_grad
from .data import Scene
from .model import ModelConfig, PreparedScene, TrajectoryPredictor, prepare_scene, save_model
from .optim import AdamState, NumericalError, adam_step, schedule_lr


class TrainingDiverged(NumericalError):
    """Loss became non-finite during training."""


@dataclass
class TrainConfig:
    stage1_epochs: int = 36
    stage2_epochs: int = 36
    batch_size: int = 32
    lr: float = 1e-3
    lr_drop_epoch: int | None = 32  # per stage; None disables the decay step
    lr_drop_factor: float = 0.1
    weight_decay: float = 1e-2
    num_modes: int = 6
    seed: int = 0
    huber_beta: float = 1.0  # smooth-L1 transition point, meters
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    decoder_init: str = "copy-noise"  # or "fresh"
    decoder_init_noise: float = 1e-2
    wta_includes_mode0: bool = True  # frozen decoder 0 competes in the stage-2 minimum
    checkpoint_every: int = 0  # epochs between saved checkpoints; 0 = stage finals only

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)


def smooth_l1(pred, gt, beta: float = 1.0) -> Tensor:
    """Mean over all components of the smooth-L1 kernel of (pred - gt)."""
    pred = pred if isinstance(pred, Tensor) else Tensor(pred)
    gt = gt if isinstance(gt, Tensor) else Tensor(np.asarray(gt, dtype=np.float64))
    return ad.mean_all(ad.huber(ad.sub(pred, gt), beta))


def wta_loss(preds: Sequence, gt, beta: float = 1.0) -> tuple[Tensor, int]:
    """Minimum smooth-L1 over modes; the graph only contains the winning mode,
    so non-winning decoders get exactly zero gradient. Ties go to the lowest
    mode index."""
    if len(preds) < 2:
        raise ValueError("winner-takes-all needs at least two modes")
    gt_arr = np.asarray(gt, dtype=np.float64)
    values = []
    for p in preds:
        d = (p.data if isinstance(p, Tensor) else np.asarray(p, dtype=np.float64)) - gt_arr
        ax = np.abs(d)
        values.append(float(np.where(ax < beta, 0.5 * d * d / beta, ax - 0.5 * beta).mean()))
    winner = int(np.argmin(values))
    return smooth_l1(preds[winner], gt_arr, beta), winner


def _wta_batch(mode_offsets: list[Tensor], gt: np.ndarray, beta: float,
               trainable_modes: set[int], include_mode0: bool,
               ) -> tuple[Tensor | None, np.ndarray, float]:
    """Batched WTA: per-scene winners over the allowed modes, a graph loss
    covering only trainable winners, and the reported scalar loss value."""
    k = len(mode_offsets)
    per_mode = np.empty((k, gt.shape[0]))
    for m, off in enumerate(mode_offsets):
        d = off.data - gt
        ax = np.abs(d)
        per_mode[m] = np.where(ax < beta, 0.5 * d * d / beta, ax - 0.5 * beta).mean(axis=1)
    if include_mode0:
        winners = per_mode.argmin(axis=0)
    else:
        winners = per_mode[1:].argmin(axis=0) + 1
    loss_value = float(per_mode[winners, np.arange(gt.shape[0])].mean())

    terms = None
    denom = float(gt.size)
    for m in sorted(trainable_modes):
        idx = np.nonzero(winners == m)[0]
        if idx.size == 0:
            continue
        part = ad.sum_all(ad.huber(ad.sub(ad.gather_rows(mode_offsets[m], idx),
                                          Tensor(gt[idx])), beta))
        terms = part if terms is None else ad.add(terms, part)
    graph = None if terms is None else ad.scale(terms, 1.0 / denom)
    return graph, winners, loss_value


@dataclass
class TrainResult:
    model: TrajectoryPredictor
    log: list[dict]
    stage1_snapshot: dict[str, bytes]  # parameter bytes captured after stage 1
    checkpoints: list[Path] = field(default_factory=list)


def _batches(n: int, batch_size: int, order: np.ndarray):
    for lo in range(0, n, batch_size):
        yield order[lo:lo + batch_size]


def _epoch_val_minade(model: TrajectoryPredictor, val_scenes: Sequence[Scene] | None):
    if not val_scenes:
        return None
    from .metrics import evaluate

    return evaluate(model, val_scenes, k=1).min_ade


def train(train_scenes: Sequence[Scene], val_scenes: Sequence[Scene] | None,
          config: TrainConfig, model_config: ModelConfig | None = None,
          out_dir=None) -> TrainResult:
    """Run both stages and return the trained model plus the epoch log.

    With ``out_dir`` set, checkpoints land there as ``stage{1|2}_epoch{N}.ckpt``
    (plus ``final.ckpt``) and the log streams to ``log.jsonl``.
    """
    if not train_scenes:
        raise ValueError("empty training split")
    model_config = model_config or ModelConfig(num_modes=config.num_modes)
    rng = np.random.default_rng(config.seed)
    model = TrajectoryPredictor(replace(model_config, num_modes=1), seed=config.seed)
    prepared = [prepare_scene(s) for s in train_scenes]
    for ps in prepared:
        if ps.gt_offsets is None:
            raise ValueError(f"scene {ps.scene_id} has no future; cannot train on it")
    gt_all = np.stack([ps.gt_offsets for ps in prepared])
    n = len(prepared)

    out_dir = Path(out_dir) if out_dir is not None else None
    log_rows: list[dict] = []
    checkpoints: list[Path] = []
    log_fh = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        log_fh = open(out_dir / "log.jsonl", "w")

    def emit(row: dict) -> None:
        log_rows.append(row)
        if log_fh is not None:
            log_fh.write(json.dumps(row, sort_keys=True) + "\n")
            log_fh.flush()

    def maybe_checkpoint(stage: int, epoch: int, total: int) -> None:
        if out_dir is None:
            return
        due = config.checkpoint_every and epoch % config.checkpoint_every == 0
        if due or epoch == total:
            path = out_dir / f"stage{stage}_epoch{epoch}.ckpt"
            save_model(model, path)
            checkpoints.append(path)

    try:
        # ---- stage 1: full network, one decoder, smooth-L1 ----
        params = model.params
        state = AdamState(lr=config.lr, weight_decay=config.weight_decay,
                          beta1=config.adam_beta1, beta2=config.adam_beta2,
                          eps=config.adam_eps)
        for epoch in range(1, config.stage1_epochs + 1):
            state.lr = schedule_lr(epoch, config.lr, config.lr_drop_epoch,
                                   config.lr_drop_factor)
            order = rng.permutation(n)
            total_loss = 0.0
            for b, idx in enumerate(_batches(n, config.batch_size, order)):
                zero_grad(params.values())
                res = model.forward_scenes([prepared[i] for i in idx],
                                           training=True, modes=[0])
                loss = smooth_l1(res.mode_offsets[0], gt_all[idx], config.huber_beta)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingDiverged(f"stage 1 epoch {epoch} batch {b}: loss {value}")
                ad.backward(loss)
                adam_step(params, {m: p.grad for m, p in params.items()}, state)
                total_loss += value * idx.size
            emit({"stage": 1, "epoch": epoch, "lr": state.lr,
                  "train_loss": total_loss / n,
                  "val_minade1": _epoch_val_minade(model, val_scenes)})
            maybe_checkpoint(1, epoch, config.stage1_epochs)

        model.freeze_all()
        stage1_snapshot = {name: p.data.tobytes() for name, p in model.params.items()}

        # ---- stage 2: frozen backbone, k - 1 new decoders, WTA ----
        if config.num_modes > 1 and config.stage2_epochs > 0:
            model.add_decoders(config.num_modes, rng, init=config.decoder_init,
                               noise_scale=config.decoder_init_noise)
            new_params = model.trainable_params()
            trainable_modes = set(range(1, config.num_modes))
            state2 = AdamState(lr=config.lr, weight_decay=config.weight_decay,
                               beta1=config.adam_beta1, beta2=config.adam_beta2,
                               eps=config.adam_eps)
            for epoch in range(1, config.stage2_epochs + 1):
                state2.lr = schedule_lr(epoch, config.lr, config.lr_drop_epoch,
                                        config.lr_drop_factor)
                order = rng.permutation(n)
                total_loss = 0.0
                hist = np.zeros(config.num_modes, dtype=int)
                for b, idx in enumerate(_batches(n, config.batch_size, order)):
                    zero_grad(new_params.values())
                    res = model.forward_scenes([prepared[i] for i in idx],
                                               training=False)
                    graph, winners, value = _wta_batch(
                        res.mode_offsets, gt_all[idx], config.huber_beta,
                        trainable_modes, config.wta_includes_mode0)
                    if not np.isfinite(value):
                        raise TrainingDiverged(
                            f"stage 2 epoch {epoch} batch {b}: loss {value}")
                    hist += np.bincount(winners, minlength=config.num_modes)
                    if graph is not None:
                        ad.backward(graph)
                        adam_step(new_params,
                                  {m: p.grad for m, p in new_params.items()}, state2)
                    total_loss += value * idx.size
                emit({"stage": 2, "epoch": epoch, "lr": state2.lr,
                      "train_loss": total_loss / n,
                      "val_minade1": _epoch_val_minade(model, val_scenes),
                      "winner_hist": hist.tolist()})
                maybe_checkpoint(2, epoch, config.stage2_epochs)

        if out_dir is not None:
            final = out_dir / "final.ckpt"
            save_model(model, final)
            checkpoints.append(final)
    finally:
        if log_fh is not None:
            log_fh.close()

    return TrainResult(model, log_rows, stage1_snapshot, checkpoints)


def winner_histogram(model: TrajectoryPredictor, scenes: Sequence[Scene],
                     beta: float = 1.0) -> np.ndarray:
    """Per-mode win counts of the WTA criterion over a scene set."""
    counts = np.zeros(model.config.num_modes, dtype=int)
    for scene in scenes:
        ps = prepare_scene(scene)
        if ps.gt_offsets is None:
            raise ValueError(f"scene {ps.scene_id} has no future")
        res = model.forward_scenes([ps], training=False)
        _, winner = wta_loss([off for off in res.mode_offsets], ps.gt_offsets, beta)
        counts[winner] += 1
    return counts
