"""Command-line surface tying the pipeline together.

Subcommands: gen-data, train, eval, predict, select-experiment, plot,
param-count. Every value can come from a YAML config file (--config) and be
overridden by flags; each artifact-producing run writes its fully resolved
config next to its outputs. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from .checkpoint import CheckpointError
from .data import DataError, load_split, save_manifest, save_scene_csv, load_scene_csv
from .experiment import load_table, run_experiment, save_table
from .metrics import evaluate, save_reports
from .model import ModelConfig, TrajectoryPredictor, load_model, save_model
from .optim import NumericalError
from .plots import plot_experiment, plot_metric_bars, plot_scene
from .synthetic import KINDS, generate_synthetic
from .training import TrainConfig, train

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="trajpred", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", type=Path, default=None,
                        help="YAML file with defaults for this command")
        return sp

    sp = add("gen-data", "generate a seeded synthetic dataset as CSV scenes")
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--kind", choices=KINDS, default=None)
    sp.add_argument("--n-train", type=int, default=None)
    sp.add_argument("--n-val", type=int, default=None)
    sp.add_argument("--n-test", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)

    sp = add("train", "run the two-stage training procedure")
    sp.add_argument("--data", type=Path, default=None, help="dataset manifest")
    sp.add_argument("--out", type=Path, default=None)
    sp.add_argument("--stage1-epochs", type=int, default=None)
    sp.add_argument("--stage2-epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--lr-drop-epoch", type=int, default=None)
    sp.add_argument("--weight-decay", type=float, default=None)
    sp.add_argument("--modes", type=int, default=None)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--checkpoint-every", type=int, default=None)
    sp.add_argument("--hidden-size", type=int, default=None)
    sp.add_argument("--heads", type=int, default=None)
    sp.add_argument("--groups", type=int, default=None)
    sp.add_argument("--no-attention", action="store_true")

    sp = add("eval", "compute displacement metrics for a split")
    sp.add_argument("--data", type=Path, default=None)
    sp.add_argument("--split", default=None)
    sp.add_argument("--checkpoint", type=Path, default=None)
    sp.add_argument("--k", default=None, help="comma-separated mode counts, e.g. 1,6")
    sp.add_argument("--out", type=Path, default=None)

    sp = add("predict", "write predicted trajectories for scenes")
    sp.add_argument("--data", type=Path, default=None)
    sp.add_argument("--split", default=None)
    sp.add_argument("--scene", type=Path, default=None, help="single scene CSV")
    sp.add_argument("--checkpoint", type=Path, default=None)
    sp.add_argument("--out", type=Path, default=None)

    sp = add("select-experiment", "attention-vs-Euclidean selection grid")
    sp.add_argument("--data", type=Path, default=None)
    sp.add_argument("--selector", type=Path, default=None,
                    help="checkpoint of the trained attention model")
    sp.add_argument("--budgets", default=None, help="comma-separated, e.g. 1,3,5")
    sp.add_argument("--seeds", default=None, help="comma-separated, e.g. 0,1,2")
    sp.add_argument("--stage1-epochs", type=int, default=None)
    sp.add_argument("--stage2-epochs", type=int, default=None)
    sp.add_argument("--batch-size", type=int, default=None)
    sp.add_argument("--lr", type=float, default=None)
    sp.add_argument("--lr-drop-epoch", type=int, default=None)
    sp.add_argument("--weight-decay", type=float, default=None)
    sp.add_argument("--modes", type=int, default=None)
    sp.add_argument("--out", type=Path, default=None)

    sp = add("plot", "render scenes, metric bars, or experiment bars to SVG")
    sp.add_argument("--scene", type=Path, default=None)
    sp.add_argument("--data", type=Path, default=None)
    sp.add_argument("--split", default=None)
    sp.add_argument("--limit", type=int, default=None)
    sp.add_argument("--checkpoint", type=Path, default=None)
    sp.add_argument("--report", type=Path, default=None, help="report.csv to plot")
    sp.add_argument("--table", type=Path, default=None, help="experiment.csv to plot")
    sp.add_argument("--out", type=Path, default=None)

    sp = add("param-count", "print the learnable-parameter reconciliation")
    sp.add_argument("--modes", type=int, default=None)
    sp.add_argument("--hidden-size", type=int, default=None)

    return p


def _resolve(args, keys: dict):
    """Merge flag values over config-file values over defaults."""
    file_cfg = {}
    if args.config is not None:
        with open(args.config) as fh:
            file_cfg = yaml.safe_load(fh) or {}
        unknown = set(file_cfg) - set(keys)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
    resolved = {}
    for key, default in keys.items():
        flag = getattr(args, key, None)
        if flag not in (None, False):
            resolved[key] = flag
        elif key in file_cfg:
            resolved[key] = file_cfg[key]
        else:
            resolved[key] = default
    return resolved


def _require(cfg, *names):
    for name in names:
        if cfg[name] is None:
            raise UsageError(f"missing required option --{name.replace('_', '-')}")


def _write_resolved(out_dir: Path, command: str, cfg: dict) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dump = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    dump["command"] = command
    with open(out_dir / "config.resolved.yaml", "w") as fh:
        yaml.safe_dump(dump, fh, sort_keys=True)


def _int_list(text) -> list[int]:
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v != ""]


def _strip_future(scene):
    from dataclasses import replace as dc_replace

    from .data import Track

    tracks = []
    for tr in scene.tracks:
        mask = tr.timesteps <= 0
        tracks.append(Track(tr.track_id, tr.timesteps[mask], tr.positions[mask], tr.role))
    return dc_replace(scene, tracks=tracks)


def cmd_gen_data(args) -> int:
    cfg = _resolve(args, {"out": None, "kind": None, "n_train": 32, "n_val": 16,
                          "n_test": 0, "seed": 0})
    _require(cfg, "out", "kind")
    out = Path(cfg["out"])
    scene_dir = out / "scenes"
    entries = []
    split_seeds = {"train": cfg["seed"], "val": cfg["seed"] + 1, "test": cfg["seed"] + 2}
    for split, count in (("train", cfg["n_train"]), ("val", cfg["n_val"]),
                         ("test", cfg["n_test"])):
        if count <= 0:
            continue
        for scene in generate_synthetic(cfg["kind"], count, split_seeds[split]):
            if split == "test":
                scene = _strip_future(scene)
            rel = f"scenes/{split}-{scene.scene_id}.csv"
            save_scene_csv(scene, out / rel)
            entries.append({"scene_id": scene.scene_id, "file": rel, "split": split,
                            "kind": cfg["kind"],
                            "causal_track": scene.metadata.get("causal_track", ""),
                            "turn": scene.metadata.get("turn", "")})
    save_manifest(out / "manifest.csv", entries)
    _write_resolved(out, "gen-data", cfg)
    print(f"wrote {len(entries)} scenes under {scene_dir} (manifest: {out / 'manifest.csv'})")
    return EXIT_OK


def _train_config(cfg) -> TrainConfig:
    return TrainConfig(stage1_epochs=cfg["stage1_epochs"],
                       stage2_epochs=cfg["stage2_epochs"],
                       batch_size=cfg["batch_size"], lr=cfg["lr"],
                       lr_drop_epoch=cfg["lr_drop_epoch"],
                       weight_decay=cfg["weight_decay"],
                       num_modes=cfg["modes"], seed=cfg["seed"],
                       checkpoint_every=cfg.get("checkpoint_every", 0))


_TRAIN_KEYS = {"data": None, "out": None, "stage1_epochs": 36, "stage2_epochs": 36,
               "batch_size": 32, "lr": 1e-3, "lr_drop_epoch": 32,
               "weight_decay": 1e-2, "modes": 6, "seed": 0, "checkpoint_every": 0,
               "hidden_size": 128, "heads": 4, "groups": 32, "no_attention": False}


def cmd_train(args) -> int:
    cfg = _resolve(args, _TRAIN_KEYS)
    _require(cfg, "data", "out")
    train_scenes = load_split(cfg["data"], "train")
    try:
        val_scenes = load_split(cfg["data"], "val")
    except DataError:
        val_scenes = None
    model_config = ModelConfig(num_modes=cfg["modes"],
                               hidden_size=cfg["hidden_size"],
                               attention_heads=cfg["heads"],
                               norm_groups=cfg["groups"],
                               use_attention=not cfg["no_attention"])
    out = Path(cfg["out"])
    _write_resolved(out, "train", cfg)
    result = train(train_scenes, val_scenes, _train_config(cfg),
                   model_config=model_config, out_dir=out)
    last = result.log[-1]
    print(f"finished: stage {last['stage']} epoch {last['epoch']} "
          f"train_loss={last['train_loss']:.6f} "
          f"checkpoints={len(result.checkpoints)} -> {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _resolve(args, {"data": None, "split": "val", "checkpoint": None,
                          "k": "1,6", "out": None})
    _require(cfg, "data", "checkpoint", "out")
    model = load_model(cfg["checkpoint"])
    scenes = load_split(cfg["data"], cfg["split"])
    reports = [evaluate(model, scenes, k=k, split=cfg["split"])
               for k in _int_list(cfg["k"])]
    out = Path(cfg["out"])
    _write_resolved(out, "eval", cfg)
    save_reports(out / "report.csv", reports)
    for r in reports:
        print(r)
    return EXIT_OK


def cmd_predict(args) -> int:
    cfg = _resolve(args, {"data": None, "split": "test", "scene": None,
                          "checkpoint": None, "out": None})
    _require(cfg, "checkpoint", "out")
    if cfg["scene"] is None and cfg["data"] is None:
        raise UsageError("predict needs --scene or --data/--split")
    model = load_model(cfg["checkpoint"])
    scenes = ([load_scene_csv(cfg["scene"])] if cfg["scene"] is not None
              else load_split(cfg["data"], cfg["split"]))
    out = Path(cfg["out"])
    _write_resolved(out, "predict", cfg)
    with open(out / "predictions.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["scene_id", "mode", "step", "x", "y"])
        for scene in scenes:
            pset, _ = model.predict(scene)
            raw = pset.raw_trajectories()
            for m in range(raw.shape[0]):
                for step in range(raw.shape[1]):
                    writer.writerow([scene.scene_id, m, step + 1,
                                     repr(float(raw[m, step, 0])),
                                     repr(float(raw[m, step, 1]))])
    print(f"wrote predictions for {len(scenes)} scenes -> {out / 'predictions.csv'}")
    return EXIT_OK


def cmd_select_experiment(args) -> int:
    cfg = _resolve(args, {"data": None, "selector": None, "budgets": "1,3,5",
                          "seeds": "0,1,2", "stage1_epochs": 12, "stage2_epochs": 8,
                          "batch_size": 32, "lr": 5e-3, "lr_drop_epoch": None,
                          "weight_decay": 1e-2, "modes": 6, "out": None})
    _require(cfg, "data", "selector", "out")
    selector = load_model(cfg["selector"])
    train_scenes = load_split(cfg["data"], "train")
    val_scenes = load_split(cfg["data"], "val")
    config = _train_config({**cfg, "seed": 0, "checkpoint_every": 0})
    rows = run_experiment(train_scenes, val_scenes, selector,
                          _int_list(cfg["budgets"]), _int_list(cfg["seeds"]), config)
    out = Path(cfg["out"])
    _write_resolved(out, "select-experiment", cfg)
    save_table(out / "experiment.csv", rows)
    plot_experiment(rows, out / "experiment.svg")
    print(f"wrote {len(rows)} rows -> {out / 'experiment.csv'}")
    return EXIT_OK


def cmd_plot(args) -> int:
    cfg = _resolve(args, {"scene": None, "data": None, "split": "val", "limit": 8,
                          "checkpoint": None, "report": None, "table": None,
                          "out": None})
    _require(cfg, "out")
    out = Path(cfg["out"])
    _write_resolved(out, "plot", cfg)
    made = []
    if cfg["report"] is not None:
        with open(cfg["report"], newline="") as fh:
            from .metrics import MetricReport

            reports = [MetricReport(r["split"], int(r["k"]), float(r["minADE"]),
                                    float(r["minFDE"]), float(r["MR"]), int(r["n"]))
                       for r in csv.DictReader(fh)]
        made.append(plot_metric_bars(reports, out / "metrics.svg"))
    if cfg["table"] is not None:
        made.append(plot_experiment(load_table(cfg["table"]), out / "experiment.svg"))
    scenes = []
    if cfg["scene"] is not None:
        scenes = [load_scene_csv(cfg["scene"])]
    elif cfg["data"] is not None:
        scenes = load_split(cfg["data"], cfg["split"])[:cfg["limit"]]
    if scenes:
        model = load_model(cfg["checkpoint"]) if cfg["checkpoint"] is not None else None
        for scene in scenes:
            pset = model.predict(scene)[0] if model is not None else None
            made.append(plot_scene(scene, out / f"{scene.scene_id}.svg", pset))
    if not made:
        raise UsageError("plot needs --scene, --data, --report, or --table")
    print(f"wrote {len(made)} figures -> {out}")
    return EXIT_OK


def cmd_param_count(args) -> int:
    cfg = _resolve(args, {"modes": 6, "hidden_size": 128})
    full = TrajectoryPredictor(ModelConfig(num_modes=cfg["modes"],
                                           hidden_size=cfg["hidden_size"]), seed=0)
    breakdown = full.parameter_breakdown()
    print("learnable parameters by block:")
    for block, count in breakdown.items():
        if block != "total":
            print(f"  {block:12s} {count:10,d}")
    with_attn = full.count_parameters(include_attention=True)
    without = full.count_parameters(include_attention=False)
    print(f"total with attention    {with_attn:10,d}")
    print(f"total without attention {without:10,d}")
    print(f"attention block         {with_attn - without:10,d}")
    return EXIT_OK


_COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
    "select-experiment": cmd_select_experiment,
    "plot": cmd_plot,
    "param-count": cmd_param_count,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
