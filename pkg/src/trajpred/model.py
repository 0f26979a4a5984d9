"""The trajectory prediction network.

Per scene with N vehicles: a single-layer LSTM with shared weights encodes
each vehicle's displacement sequence into a 128-d state; a fully-connected
bidirectional interaction graph with relative-position edge features is
processed by two gated graph convolution layers (sigmoid gate times softplus
message over the concatenated node-pair-plus-edge vector, residual add, batch
norm, ReLU); scaled dot-product multi-head self-attention mixes the node
features; and k parallel linear-residual decoders each regress 30 future
(x, y) offsets. Decoder 0 is the most probable mode by construction of the
two-stage training procedure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from dataclasses import asdict
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .data import Scene, encode_inputs, to_target_frame


@dataclass(frozen=True)
class ModelConfig:
    history_steps: int = 20
    future_steps: int = 30
    input_size: int = 3
    hidden_size: int = 128
    gnn_layers: int = 2
    attention_heads: int = 4
    num_modes: int = 6
    use_attention: bool = True
    norm_groups: int = 32
    # Whether batch norm + ReLU also follow the last graph conv layer
    # (they always follow the earlier ones).
    gnn_norm_after_last: bool = True
    bn_momentum: float = 0.1
    bn_eps: float = 1e-5
    gn_eps: float = 1e-5

    def __post_init__(self):
        if self.hidden_size % self.attention_heads != 0:
            raise ValueError("hidden_size must be divisible by attention_heads")
        if self.hidden_size % self.norm_groups != 0:
            raise ValueError("hidden_size must be divisible by norm_groups")
        for name in ("history_steps", "future_steps", "hidden_size", "gnn_layers",
                     "attention_heads", "num_modes", "norm_groups"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.attention_heads

    @property
    def output_size(self) -> int:
        return 2 * self.future_steps

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass
class EdgeList:
    """Directed edges of the fully-connected interaction graph (no self-loops).
    ``features[r]`` is the position of vehicle ``neighbors[r]`` relative to
    vehicle ``centers[r]`` at t = 0."""

    centers: np.ndarray  # (E,) int
    neighbors: np.ndarray  # (E,) int
    features: np.ndarray  # (E, 2) meters

    @property
    def num_edges(self) -> int:
        return int(self.centers.size)


def edges_from_positions(pos0: np.ndarray, offset: int = 0) -> EdgeList:
    n = pos0.shape[0]
    centers, neighbors = [], []
    for i in range(n):
        for j in range(n):
            if i != j:
                centers.append(i)
                neighbors.append(j)
    centers = np.asarray(centers, dtype=np.intp)
    neighbors = np.asarray(neighbors, dtype=np.intp)
    feats = pos0[neighbors] - pos0[centers] if centers.size else np.zeros((0, 2))
    return EdgeList(centers + offset, neighbors + offset, feats)


def build_graph(scene: Scene) -> EdgeList:
    """Interaction graph of one target-local scene, vehicle order as encoded."""
    pos0 = np.stack([inp.pos0 for inp in encode_inputs(scene)])
    return edges_from_positions(pos0)


@dataclass
class PreparedScene:
    """A scene transformed to the target-local frame and encoded for the model."""

    scene_id: str
    features: np.ndarray  # (N, history_steps, 3)
    pos0: np.ndarray  # (N, 2)
    track_ids: list[str]
    gt_offsets: np.ndarray | None  # (2 * future_steps,) target future minus pos0
    transform: tuple[np.ndarray, float]
    metadata: dict = field(default_factory=dict)

    @property
    def num_vehicles(self) -> int:
        return self.features.shape[0]


def prepare_scene(scene: Scene) -> PreparedScene:
    local = to_target_frame(scene)
    inputs = encode_inputs(local)
    features = np.stack([inp.features for inp in inputs])
    pos0 = np.stack([inp.pos0 for inp in inputs])
    gt = None
    if local.has_future():
        gt = (local.target_future() - pos0[0]).reshape(-1)
    return PreparedScene(scene.scene_id, features, pos0,
                         [inp.track_id for inp in inputs], gt,
                         local.transform, dict(scene.metadata))


@dataclass
class AttentionRecord:
    """Row-stochastic attention weight matrices kept from a forward pass."""

    heads: list[np.ndarray]  # one (N, N) matrix per head

    @property
    def mean(self) -> np.ndarray:
        return np.mean(self.heads, axis=0)


@dataclass
class PredictionSet:
    """k predicted target trajectories in the target-local frame; index 0 is
    the most probable mode."""

    scene_id: str
    trajectories: np.ndarray  # (k, future_steps, 2)
    transform: tuple[np.ndarray, float]

    @property
    def num_modes(self) -> int:
        return self.trajectories.shape[0]

    def raw_trajectories(self) -> np.ndarray:
        from .data import from_target_frame

        return from_target_frame(self.trajectories, self.transform)


@dataclass
class ForwardResult:
    mode_offsets: list[Tensor]  # per mode: (B, 2 * future_steps) target offsets
    features: Tensor  # (M, hidden) interaction-aware features of all vehicles
    target_rows: np.ndarray  # (B,) row index of each scene's target
    target_pos0: np.ndarray  # (B, 2)
    attention: list[AttentionRecord] | None
    scene_slices: list[tuple[int, int]]


def _uniform_linear(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class TrajectoryPredictor:
    """Holds the named parameter tensors and runs the network."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        rng = np.random.default_rng(seed)
        h = config.hidden_size
        self._add_linear(rng, "encoder.ih", config.input_size, 4 * h)
        self._add_linear(rng, "encoder.hh", h, 4 * h)
        z_dim = 2 * h + 2
        for g in range(config.gnn_layers):
            self._add_linear(rng, f"gnn.{g}.gate", z_dim, h)
            self._add_linear(rng, f"gnn.{g}.msg", z_dim, h)
            self._add_norm(f"gnn.{g}.norm", h, running=True)
        if config.use_attention:
            for proj in ("q", "k", "v", "out"):
                self._add_linear(rng, f"attn.{proj}", h, h)
        for m in range(config.num_modes):
            self._init_decoder(rng, m)

    # -- parameter construction ------------------------------------------

    def _add_linear(self, rng, name: str, fan_in: int, fan_out: int) -> None:
        self.params[f"{name}.w"] = Tensor(_uniform_linear(rng, fan_in, fan_out),
                                          requires_grad=True, name=f"{name}.w")
        self.params[f"{name}.b"] = Tensor(np.zeros((1, fan_out)),
                                          requires_grad=True, name=f"{name}.b")

    def _add_norm(self, name: str, size: int, running: bool = False) -> None:
        self.params[f"{name}.gamma"] = Tensor(np.ones((1, size)),
                                              requires_grad=True, name=f"{name}.gamma")
        self.params[f"{name}.beta"] = Tensor(np.zeros((1, size)),
                                             requires_grad=True, name=f"{name}.beta")
        if running:
            self.buffers[f"{name}.running_mean"] = np.zeros((1, size))
            self.buffers[f"{name}.running_var"] = np.ones((1, size))

    def _init_decoder(self, rng, m: int) -> None:
        h = self.config.hidden_size
        self._add_linear(rng, f"dec.{m}.lin1", h, h)
        self._add_norm(f"dec.{m}.norm1", h)
        self._add_linear(rng, f"dec.{m}.lin2", h, h)
        self._add_norm(f"dec.{m}.norm2", h)
        self._add_linear(rng, f"dec.{m}.proj", h, self.config.output_size)

    def decoder_param_names(self, m: int) -> list[str]:
        return [n for n in self.params if n.startswith(f"dec.{m}.")]

    def add_decoders(self, total_modes: int, rng: np.random.Generator,
                     init: str = "copy-noise", noise_scale: float = 1e-2) -> list[str]:
        """Grow the decoder bank to ``total_modes`` (stage-2 setup). New
        decoders start as noisy copies of decoder 0, or fresh random."""
        if total_modes < self.config.num_modes:
            raise ValueError("cannot remove decoders")
        new_names = []
        for m in range(self.config.num_modes, total_modes):
            self._init_decoder(rng, m)
            if init == "copy-noise":
                for name in self.decoder_param_names(m):
                    src = self.params[name.replace(f"dec.{m}.", "dec.0.")]
                    self.params[name].data = src.data + rng.uniform(
                        -noise_scale, noise_scale, size=src.data.shape)
            elif init != "fresh":
                raise ValueError(f"unknown decoder init {init!r}")
            new_names.extend(self.decoder_param_names(m))
        self.config = replace(self.config, num_modes=total_modes)
        return new_names

    def freeze_all(self) -> None:
        for p in self.params.values():
            p.requires_grad = False
            p.grad = None

    def trainable_params(self) -> dict[str, Tensor]:
        return {n: p for n, p in self.params.items() if p.requires_grad}

    # -- forward pieces ---------------------------------------------------

    def encode_actors(self, features: np.ndarray) -> Tensor:
        """Run the shared-weight LSTM over (M, history_steps, 3) sequences and
        return the final hidden states as an (M, hidden) matrix. Gate column
        order is [input, forget, cell, output]; hidden and cell states start
        at zero."""
        cfg = self.config
        m = features.shape[0]
        h_size = cfg.hidden_size
        w_ih, b_ih = self.params["encoder.ih.w"], self.params["encoder.ih.b"]
        w_hh, b_hh = self.params["encoder.hh.w"], self.params["encoder.hh.b"]
        h = Tensor(np.zeros((m, h_size)))
        c = Tensor(np.zeros((m, h_size)))
        bias = ad.add(b_ih, b_hh)
        for t in range(features.shape[1]):
            x_t = Tensor(features[:, t, :])
            gates = ad.add(ad.add(ad.matmul(x_t, w_ih), ad.matmul(h, w_hh)), bias)
            i_g = ad.sigmoid(ad.slice_cols(gates, 0, h_size))
            f_g = ad.sigmoid(ad.slice_cols(gates, h_size, 2 * h_size))
            g_g = ad.tanh(ad.slice_cols(gates, 2 * h_size, 3 * h_size))
            o_g = ad.sigmoid(ad.slice_cols(gates, 3 * h_size, 4 * h_size))
            c = ad.add(ad.mul(f_g, c), ad.mul(i_g, g_g))
            h = ad.mul(o_g, ad.tanh(c))
        return h

    def cgconv_layer(self, v: Tensor, edges: EdgeList, layer: int, *,
                     training: bool, normalize: bool = True) -> Tensor:
        """One graph convolution: residual add of sigmoid-gated softplus
        messages over concatenated (center, neighbor, edge) features, then
        batch norm + ReLU unless ``normalize`` is off."""
        p = self.params
        if edges.num_edges:
            z = ad.concat_cols(ad.gather_rows(v, edges.centers),
                               ad.gather_rows(v, edges.neighbors),
                               Tensor(edges.features))
            gate = ad.sigmoid(ad.add(ad.matmul(z, p[f"gnn.{layer}.gate.w"]),
                                     p[f"gnn.{layer}.gate.b"]))
            msg = ad.softplus(ad.add(ad.matmul(z, p[f"gnn.{layer}.msg.w"]),
                                     p[f"gnn.{layer}.msg.b"]))
            v = ad.add(v, ad.scatter_add_rows(ad.mul(gate, msg), edges.centers,
                                              v.shape[0]))
        if normalize:
            v = ad.relu(ad.batch_norm(
                v, p[f"gnn.{layer}.norm.gamma"], p[f"gnn.{layer}.norm.beta"],
                self.buffers[f"gnn.{layer}.norm.running_mean"],
                self.buffers[f"gnn.{layer}.norm.running_var"],
                training=training, momentum=self.config.bn_momentum,
                eps=self.config.bn_eps))
        return v

    def gnn_forward(self, v: Tensor, edges: EdgeList, *, training: bool) -> Tensor:
        cfg = self.config
        for g in range(cfg.gnn_layers):
            last = g == cfg.gnn_layers - 1
            v = self.cgconv_layer(v, edges, g, training=training,
                                  normalize=not last or cfg.gnn_norm_after_last)
        return v

    def self_attention(self, v: Tensor) -> tuple[Tensor, AttentionRecord]:
        """Scaled dot-product multi-head self-attention over one scene's rows.
        Returns the projected features and the per-head weight matrices."""
        cfg = self.config
        p = self.params
        q = ad.add(ad.matmul(v, p["attn.q.w"]), p["attn.q.b"])
        k = ad.add(ad.matmul(v, p["attn.k.w"]), p["attn.k.b"])
        val = ad.add(ad.matmul(v, p["attn.v.w"]), p["attn.v.b"])
        d = cfg.head_dim
        outs, weights = [], []
        for head in range(cfg.attention_heads):
            lo, hi = head * d, (head + 1) * d
            scores = ad.scale(ad.matmul(ad.slice_cols(q, lo, hi),
                                        ad.transpose(ad.slice_cols(k, lo, hi))),
                              1.0 / math.sqrt(d))
            w = ad.row_softmax(scores)
            weights.append(w.data.copy())
            outs.append(ad.matmul(w, ad.slice_cols(val, lo, hi)))
        merged = ad.concat_cols(*outs) if len(outs) > 1 else outs[0]
        out = ad.add(ad.matmul(merged, p["attn.out.w"]), p["attn.out.b"])
        return out, AttentionRecord(weights)

    def decode(self, rows: Tensor, mode: int) -> Tensor:
        """Linear-residual decoder for one mode: two normalized linears with a
        skip connection, ReLU, then projection to 2 * future_steps offsets."""
        cfg = self.config
        p = self.params
        pre = f"dec.{mode}."
        h = ad.add(ad.matmul(rows, p[pre + "lin1.w"]), p[pre + "lin1.b"])
        h = ad.group_norm(h, p[pre + "norm1.gamma"], p[pre + "norm1.beta"],
                          groups=cfg.norm_groups, eps=cfg.gn_eps)
        h = ad.relu(h)
        h = ad.add(ad.matmul(h, p[pre + "lin2.w"]), p[pre + "lin2.b"])
        h = ad.group_norm(h, p[pre + "norm2.gamma"], p[pre + "norm2.beta"],
                          groups=cfg.norm_groups, eps=cfg.gn_eps)
        h = ad.relu(ad.add(h, rows))
        return ad.add(ad.matmul(h, p[pre + "proj.w"]), p[pre + "proj.b"])

    # -- full passes ------------------------------------------------------

    def forward_scenes(self, prepared: Sequence[PreparedScene], *, training: bool,
                       modes: Sequence[int] | None = None) -> ForwardResult:
        """Joint forward pass over a batch of scenes sharing one graph. Batch
        norm sees all vehicles of the batch; attention stays per-scene."""
        cfg = self.config
        if modes is None:
            modes = range(cfg.num_modes)
        counts = [ps.num_vehicles for ps in prepared]
        offsets = np.concatenate([[0], np.cumsum(counts)])
        features = np.concatenate([ps.features for ps in prepared], axis=0)
        pos0 = np.concatenate([ps.pos0 for ps in prepared], axis=0)

        centers, neighbors, efeat = [], [], []
        for ps, off in zip(prepared, offsets[:-1]):
            e = edges_from_positions(ps.pos0, offset=int(off))
            centers.append(e.centers)
            neighbors.append(e.neighbors)
            efeat.append(e.features)
        edges = EdgeList(np.concatenate(centers), np.concatenate(neighbors),
                         np.concatenate(efeat, axis=0))

        v = self.encode_actors(features)
        v = self.gnn_forward(v, edges, training=training)

        records = None
        if cfg.use_attention:
            outs, records = [], []
            for lo, hi in zip(offsets[:-1], offsets[1:]):
                rows = ad.gather_rows(v, np.arange(lo, hi))
                out, record = self.self_attention(rows)
                outs.append(out)
                records.append(record)
            v = ad.concat_rows(*outs) if len(outs) > 1 else outs[0]

        target_rows = offsets[:-1].astype(np.intp)
        rows = ad.gather_rows(v, target_rows)
        mode_offsets = [self.decode(rows, m) for m in modes]
        slices = [(int(lo), int(hi)) for lo, hi in zip(offsets[:-1], offsets[1:])]
        return ForwardResult(mode_offsets, v, target_rows, pos0[target_rows],
                             records, slices)

    def predict(self, scene: Scene) -> tuple[PredictionSet, AttentionRecord | None]:
        """Evaluation-mode forward of a single raw-frame scene."""
        ps = prepare_scene(scene)
        result = self.forward_scenes([ps], training=False)
        t_f = self.config.future_steps
        traj = np.stack([off.data[0].reshape(t_f, 2) + ps.pos0[0]
                         for off in result.mode_offsets])
        record = result.attention[0] if result.attention else None
        return PredictionSet(scene.scene_id, traj, ps.transform), record

    # -- bookkeeping ------------------------------------------------------

    def count_parameters(self, include_attention: bool = True) -> int:
        """Number of learnable scalars (running statistics excluded)."""
        total = 0
        for name, p in self.params.items():
            if not include_attention and name.startswith("attn."):
                continue
            total += p.data.size
        return total

    def parameter_breakdown(self) -> dict[str, int]:
        blocks: dict[str, int] = {}
        for name, p in self.params.items():
            block = name.split(".")[0]
            if block == "dec":
                block = "dec." + name.split(".")[1]
            blocks[block] = blocks.get(block, 0) + p.data.size
        blocks["total"] = sum(p.data.size for p in self.params.values())
        return blocks


def save_model(model: TrajectoryPredictor, path) -> None:
    arrays = {name: p.data for name, p in model.params.items()}
    arrays.update(model.buffers)
    meta = {"arch": model.config.to_dict(), "buffers": sorted(model.buffers)}
    save_checkpoint(path, arrays, meta)


def load_model(path) -> TrajectoryPredictor:
    arrays, meta = load_checkpoint(path)
    if "arch" not in meta:
        raise CheckpointError(f"{path}: missing architecture descriptor")
    config = ModelConfig.from_dict(meta["arch"])
    model = TrajectoryPredictor(config, seed=0)
    expected = set(model.params) | set(model.buffers)
    if expected != set(arrays):
        missing = sorted(expected - set(arrays))[:3]
        extra = sorted(set(arrays) - expected)[:3]
        raise CheckpointError(f"{path}: arrays do not match architecture "
                              f"(missing {missing}, unexpected {extra})")
    for name, p in model.params.items():
        if arrays[name].shape != p.data.shape:
            raise CheckpointError(f"{path}: shape mismatch for {name}: "
                                  f"{arrays[name].shape} vs {p.data.shape}")
        p.data = arrays[name]
    for name in model.buffers:
        model.buffers[name] = arrays[name]
    return model
