"""``realmotion`` command line: gen-data, train, eval, bench, plot.

Exit codes: 0 success, 2 config error, 3 training divergence, 4 missing artifact.
Every command writes ``manifest.json`` into its output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from .errors import ConfigInvalid, CorruptFile, FormatVersionMismatch, NonFiniteLoss, RealMotionError, SplitPointsInvalid

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_MISSING = 0, 2, 3, 4
SEED_ENV = "REALMOTION_SEED"
MANIFEST = "manifest.json"

log = logging.getLogger("realmotion")


class MissingArtifact(RealMotionError):
    pass


# ---------------------------------------------------------------- helpers

def _seed(value: Optional[int], default: int = 0) -> int:
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigInvalid(f"{SEED_ENV}={env!r} is not an integer")
    return default if value is None else value


def _int_list(text: str) -> tuple:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _require(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise MissingArtifact(f"{what} not found: {p}")
    return p


def write_manifest(out_dir, command: str, config: dict, seed: int, inputs: dict, outputs: List[str]) -> Path:
    from .config import canonical_json

    body = {"command": command, "config": json.loads(canonical_json(config)), "seed": seed,
            "inputs": inputs, "outputs": sorted(outputs)}
    path = Path(out_dir) / MANIFEST
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n")
    return path


def dataset_hash(data_dir) -> str:
    from .config import config_hash, file_hash
    from .world import list_scenes

    return config_hash([(p.name, file_hash(p)) for p in list_scenes(data_dir)], length=64)


def load_scenes(data_dir, jobs: int = 1):
    from .world import list_scenes, read_scene

    paths = list_scenes(_require(data_dir, "dataset directory"))
    if not paths:
        raise MissingArtifact(f"no scene files in {data_dir}")
    if jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(jobs) as ex:
            scenes = list(ex.map(read_scene, paths))
    else:
        scenes = [read_scene(p) for p in paths]
    return [p.stem for p in paths], scenes


# ---------------------------------------------------------------- gen-data

def cmd_gen_data(args) -> int:
    from .config import load_config
    from .world import WorldConfig, generate_dataset

    base = load_config(args.config) if args.config else {}
    cfg = WorldConfig.from_dict(base)
    cfg.seed = _seed(args.seed, cfg.seed)
    cfg.validate()
    if args.count < 0:
        raise ConfigInvalid("count must be >= 0")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    paths = generate_dataset(cfg, args.count, out, binary=args.binary, jobs=args.jobs)
    write_manifest(out, "gen-data", {"world": cfg.to_dict(), "count": args.count, "binary": args.binary},
                   cfg.seed, {"config": str(args.config) if args.config else None},
                   [p.name for p in paths])
    print(f"wrote {len(paths)} scenes to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- train

def resolve_train_configs(args):
    """Merge config file, --ablate / --streams presets and explicit flags."""
    from .config import load_config, merge
    from .model import ModelConfig
    from .training import TrainConfig

    file_cfg = load_config(args.config) if args.config else {}
    unknown = set(file_cfg) - {"model", "train"}
    if unknown:
        raise ConfigInvalid(f"unknown config sections {sorted(unknown)}")
    model_d = dict(file_cfg.get("model") or {})
    train_d = dict(file_cfg.get("train") or {})
    if args.ablate == "realmotion-i":
        model_d.update(context_stream=False, trajectory_stream=False)
        train_d.update(split_points=(50,))
    if args.streams is not None:
        names = {s.strip() for s in args.streams.split(",") if s.strip() and s.strip() != "none"}
        bad = names - {"context", "trajectory"}
        if bad:
            raise ConfigInvalid(f"unknown streams {sorted(bad)}")
        model_d.update(context_stream="context" in names, trajectory_stream="trajectory" in names)
    model_d = merge(model_d, {"dim": args.dim, "stream_depth": args.stream_depth})
    train_d = merge(train_d, {"epochs": args.epochs, "batch_size": args.batch_size, "lr": args.lr,
                              "gradient_steps": args.grad_steps, "split_points": args.split_points})
    mcfg = ModelConfig.from_dict(model_d)
    tcfg = TrainConfig.from_dict(train_d)
    tcfg.seed = _seed(args.seed, tcfg.seed)
    tcfg.resolved_steps()
    return mcfg, tcfg


def _plot_losses(history, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    epochs = [h["epoch"] for h in history]
    fig, ax = plt.subplots(figsize=(6, 4))
    for k in ("reg", "cls", "refine", "total"):
        ax.plot(epochs, [h[k] for h in history], marker="o", label=k)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def cmd_train(args) -> int:
    import torch

    from .checkpoint import save_checkpoint
    from .data import build_dataset
    from .model import RealMotion
    from .training import train

    mcfg, tcfg = resolve_train_configs(args)
    names, scenes = load_scenes(args.data, args.jobs)
    try:
        data = build_dataset(scenes, tcfg.split_points, tcfg.hist_len, horizon=mcfg.horizon)
    except SplitPointsInvalid as e:
        raise ConfigInvalid(str(e)) from e
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(tcfg.seed)
    model = RealMotion(mcfg)
    metrics_path = out / "metrics.jsonl"
    with open(metrics_path, "w") as f:
        def log_epoch(row):
            f.write(json.dumps(row, sort_keys=True) + "\n")
            f.flush()
            print(f"epoch {row['epoch']}: total {row['total']:.4f}")
        history = train(model, data, tcfg, callback=log_epoch)
    ckpt = out / "checkpoint.pt"
    h = save_checkpoint(model, ckpt, tcfg.to_dict(), extra={"dataset_hash": dataset_hash(args.data)})
    _plot_losses(history, out / "loss.png")
    write_manifest(out, "train", {"model": mcfg.to_dict(), "train": tcfg.to_dict(), "config_hash": h},
                   tcfg.seed, {"data": str(args.data), "data_hash": dataset_hash(args.data)},
                   [ckpt.name, metrics_path.name, "loss.png"])
    print(f"checkpoint {ckpt} (config {h})")
    return EXIT_OK


# ---------------------------------------------------------------- eval

def _load_model(path):
    from .checkpoint import load_checkpoint

    try:
        return load_checkpoint(_require(path, "checkpoint"))
    except FileNotFoundError as e:
        raise MissingArtifact(str(e)) from e


def cmd_eval(args) -> int:
    from .data import build_dataset
    from .geometry import local_to_global
    from .metrics import evaluate_predictions
    from .training import TrainConfig, predict

    import torch

    model, meta = _load_model(args.checkpoint)
    tcfg = TrainConfig.from_dict(meta["train_config"])
    names, scenes = load_scenes(args.data, args.jobs)
    data = build_dataset(scenes, tcfg.split_points, tcfg.hist_len, horizon=model.cfg.horizon)
    Ys, Ps = predict(model, data, all_segments=True)
    report = evaluate_predictions(Ys[-1], Ps[-1], data.segments[-1].gt.double().numpy(), names)
    report.meta = {"checkpoint_config": meta["config_hash"], "split_points": list(tcfg.split_points)}
    out = Path(args.out)
    rec = out / "predictions"
    rec.mkdir(parents=True, exist_ok=True)
    poses = torch.stack([s.pose.double() for s in data.segments])
    Y = torch.stack([local_to_global(torch.from_numpy(y), p) for y, p in zip(Ys, poses)])
    gt = torch.stack([local_to_global(s.gt.double(), p) for s, p in zip(data.segments, poses)])
    np.save(rec / "Y.npy", Y.numpy())
    np.save(rec / "probs.npy", np.stack(Ps))
    np.save(rec / "gt.npy", gt.numpy())
    np.save(rec / "pose.npy", poses.numpy())
    (rec / "index.json").write_text(json.dumps({"names": names, "data": str(args.data),
                                                "split_points": list(tcfg.split_points)}, indent=2))
    report.write(out / "report.json")
    write_manifest(out, "eval", {"checkpoint_config": meta["config_hash"]}, tcfg.seed,
                   {"checkpoint": str(args.checkpoint), "data": str(args.data), "data_hash": dataset_hash(args.data)},
                   ["report.json", "predictions"])
    print(json.dumps(report.summary(), indent=2, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------- bench

def cmd_bench(args) -> int:
    from .bench import compare
    from .data import build_dataset
    from .training import TrainConfig

    model, meta = _load_model(args.checkpoint)
    tcfg = TrainConfig.from_dict(meta["train_config"])
    if args.data:
        _, scenes = load_scenes(args.data)
        scene = scenes[0]
    else:
        from .world import WorldConfig, generate_scene
        scene = generate_scene(WorldConfig(seed=_seed(args.seed)), 0)
    data = build_dataset([scene], tcfg.split_points, tcfg.hist_len, horizon=model.cfg.horizon)
    cmp = compare(model, data.batch([0]), repetitions=args.repetitions, warmup=args.warmup)
    res = {"online": cmp["online"].summary(), "offline": cmp["offline"].summary(),
           "identical": cmp["identical"], "hardware": cmp["hardware"]}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "bench.json").write_text(json.dumps(res, indent=2, sort_keys=True) + "\n")
    write_manifest(out, "bench", {"repetitions": args.repetitions, "warmup": args.warmup}, _seed(args.seed),
                   {"checkpoint": str(args.checkpoint), "data": args.data}, ["bench.json"])
    print(f"online  median {res['online']['median_ms']:.3f} ms (IQR {res['online']['iqr_ms']:.3f})")
    print(f"offline median {res['offline']['median_ms']:.3f} ms (IQR {res['offline']['iqr_ms']:.3f})")
    return EXIT_OK


# ---------------------------------------------------------------- plot

def cmd_plot(args) -> int:
    from .plotting import plot_sequence
    from .world import list_scenes, read_scene

    rec = _require(args.predictions, "prediction records")
    index = json.loads(_require(rec / "index.json", "prediction index").read_text())
    arrays = {k: np.load(_require(rec / f"{k}.npy", f"{k}.npy")) for k in ("Y", "probs", "gt", "pose")}
    data_dir = Path(args.data or index["data"])
    by_name = {p.stem: p for p in list_scenes(_require(data_dir, "dataset directory"))}
    names = index["names"]
    wanted = args.scenes.split(",") if args.scenes else names[: args.limit]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for name in wanted:
        if name not in names or name not in by_name:
            raise MissingArtifact(f"scene {name!r} not in prediction records or dataset")
        i = names.index(name)
        scene = read_scene(by_name[name])
        path = out / f"{name}.png"
        plot_sequence(scene, index["split_points"], arrays["Y"][:, i], arrays["probs"][:, i],
                      arrays["gt"][:, i], path)
        written.append(path.name)
    write_manifest(out, "plot", {"scenes": wanted}, 0, {"predictions": str(rec), "data": str(data_dir)}, written)
    print(f"wrote {len(written)} figures to {out}")
    return EXIT_OK


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="realmotion", description="Continuous motion forecasting on synthetic scenes.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    g.add_argument("--config", help="WorldConfig YAML")
    g.add_argument("--out", required=True)
    g.add_argument("--count", type=int, default=100)
    g.add_argument("--seed", type=int)
    g.add_argument("--binary", action="store_true", help="write .rms binary files instead of JSON")
    g.add_argument("--jobs", type=int, default=1)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--config", help="YAML with optional 'model' and 'train' sections")
    t.add_argument("--ablate", choices=["realmotion-i"], help="preset: independent variant without streams")
    t.add_argument("--streams", help="comma list from {context,trajectory}, or 'none'")
    t.add_argument("--split-points", type=_int_list)
    t.add_argument("--grad-steps", type=int)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--dim", type=int)
    t.add_argument("--stream-depth", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--jobs", type=int, default=1)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--jobs", type=int, default=1)
    e.set_defaults(func=cmd_eval)

    b = sub.add_parser("bench", help="online vs offline latency")
    b.add_argument("--checkpoint", required=True)
    b.add_argument("--data", help="dataset dir; first scene is used (default: a generated scene)")
    b.add_argument("--out", required=True)
    b.add_argument("--repetitions", type=int, default=100)
    b.add_argument("--warmup", type=int, default=10)
    b.add_argument("--seed", type=int)
    b.set_defaults(func=cmd_bench)

    p = sub.add_parser("plot", help="render per-segment forecasts")
    p.add_argument("--predictions", required=True, help="predictions directory written by eval")
    p.add_argument("--data", help="dataset dir (default: the one recorded at eval time)")
    p.add_argument("--out", required=True)
    p.add_argument("--scenes", help="comma list of scene names")
    p.add_argument("--limit", type=int, default=4)
    p.set_defaults(func=cmd_plot)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except NonFiniteLoss as e:
        print(f"error: training diverged: {e}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigInvalid, SplitPointsInvalid) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingArtifact, FileNotFoundError, CorruptFile, FormatVersionMismatch) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_MISSING


if __name__ == "__main__":
    sys.exit(main())
