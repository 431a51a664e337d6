"""Ablation harness: named variants trained and evaluated under one protocol,
with results cached as JSON keyed by the run's config hash."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import torch

from .config import config_hash
from .data import SequenceDataset, build_dataset
from .errors import ConfigInvalid
from .metrics import evaluate_predictions
from .model import ModelConfig, RealMotion
from .sequencer import DEFAULT_SPLIT_POINTS
from .training import TrainConfig, predict, train
from .world import WorldConfig, generate_scene

log = logging.getLogger(__name__)

VAL_OFFSET = 1_000_000  # validation scenes use indices disjoint from training

# name -> (split points, context stream, trajectory stream)
VARIANTS: Dict[str, Tuple[Tuple[int, ...], bool, bool]] = {
    "realmotion-i": ((50,), False, False),
    "continuous": (DEFAULT_SPLIT_POINTS, False, False),
    "context": (DEFAULT_SPLIT_POINTS, True, False),
    "trajectory": (DEFAULT_SPLIT_POINTS, False, True),
    "full": (DEFAULT_SPLIT_POINTS, True, True),
}


@dataclass(frozen=True)
class AblationRun:
    variant: str = "full"
    n_train: int = 2000
    n_val: int = 1000
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    gradient_steps: Optional[int] = None
    stream_depth: int = 2
    dim: int = 64
    seed: int = 0
    world_seed: int = 0

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigInvalid(f"unknown variant {self.variant!r}; choose from {sorted(VARIANTS)}")
        if self.gradient_steps == len(self.split_points):
            # "all segments" has a single canonical spelling so cache keys agree
            object.__setattr__(self, "gradient_steps", None)

    @property
    def split_points(self) -> Tuple[int, ...]:
        return VARIANTS[self.variant][0]

    def model_config(self) -> ModelConfig:
        _, ctx, traj = VARIANTS[self.variant]
        return ModelConfig(dim=self.dim, stream_depth=self.stream_depth,
                           context_stream=ctx, trajectory_stream=traj)

    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr,
                           gradient_steps=self.gradient_steps, split_points=self.split_points,
                           seed=self.seed)

    def key(self) -> str:
        return f"{self.variant}-{config_hash(asdict(self))}"


def _scenes(cfg: WorldConfig, start: int, count: int):
    return [generate_scene(cfg, start + i) for i in range(count)]


def build_splits(run: AblationRun, world: Optional[WorldConfig] = None) -> Tuple[SequenceDataset, SequenceDataset]:
    world = world or WorldConfig(seed=run.world_seed)
    train_scenes = _scenes(world, 0, run.n_train)
    val_scenes = _scenes(world, VAL_OFFSET, run.n_val)
    sp = run.split_points
    return build_dataset(train_scenes, sp), build_dataset(val_scenes, sp)


def execute(run: AblationRun, world: Optional[WorldConfig] = None) -> dict:
    """Train one variant from scratch and report validation metrics on the final segment."""
    t0 = time.perf_counter()
    train_data, val_data = build_splits(run, world)
    torch.manual_seed(run.seed)
    model = RealMotion(run.model_config())
    history = train(model, train_data, run.train_config())
    Y, P = predict(model, val_data)
    report = evaluate_predictions(Y, P, val_data.segments[-1].gt.double().numpy())
    return {
        "run": asdict(run),
        "key": run.key(),
        "metrics": report.summary(),
        "history": history,
        "parameters": model.num_parameters(),
        "seconds": time.perf_counter() - t0,
    }


def run_cached(run: AblationRun, cache_dir, world: Optional[WorldConfig] = None, refresh: bool = False) -> dict:
    cache = Path(cache_dir)
    path = cache / f"{run.key()}.json"
    if path.is_file() and not refresh:
        return json.loads(path.read_text())
    log.info("running ablation %s", run.key())
    result = execute(run, world)
    cache.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    tmp.write_text(json.dumps(result, indent=2, sort_keys=True))
    tmp.replace(path)
    return result


def component_runs(base: AblationRun) -> Dict[str, AblationRun]:
    return {name: replace(base, variant=name) for name in VARIANTS}


def gradient_step_runs(base: AblationRun, steps: Sequence[int] = (1, 2, 3)) -> Dict[int, AblationRun]:
    return {s: replace(base, variant="full", gradient_steps=s) for s in steps}


def depth_runs(base: AblationRun, depths: Sequence[int] = (1, 2, 3)) -> Dict[int, AblationRun]:
    return {d: replace(base, variant="full", stream_depth=d) for d in depths}


def relative_gap(worse: float, better: float) -> float:
    """(worse - better) / worse; positive when ``better`` is lower."""
    return (worse - better) / worse
