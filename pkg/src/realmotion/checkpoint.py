"""Versioned model checkpoints: config, config hash and weights in one file."""
from __future__ import annotations

import os
from pathlib import Path
from typing import Optional, Tuple

import torch

from .config import config_hash
from .errors import CheckpointWriteError, CorruptFile, FormatVersionMismatch
from .model import ModelConfig, RealMotion

CHECKPOINT_FORMAT = "realmotion-ckpt/1"


def save_checkpoint(model: RealMotion, path, train_config: Optional[dict] = None, extra: Optional[dict] = None) -> str:
    """Write atomically (temp file + rename). Returns the config hash."""
    cfg = model.cfg.to_dict()
    h = config_hash({"model": cfg, "train": train_config})
    payload = {
        "format": CHECKPOINT_FORMAT,
        "model_config": cfg,
        "train_config": train_config,
        "config_hash": h,
        "state_dict": model.state_dict(),
        "extra": extra or {},
    }
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        torch.save(payload, tmp)
        os.replace(tmp, path)
    except OSError as e:
        raise CheckpointWriteError(f"cannot write checkpoint {path}: {e}") from e
    return h


def load_checkpoint(path) -> Tuple[RealMotion, dict]:
    """Rebuild the model. Returns ``(model, payload_without_weights)``."""
    try:
        payload = torch.load(path, map_location="cpu", weights_only=True)
    except FileNotFoundError:
        raise
    except Exception as e:
        raise CorruptFile(f"unreadable checkpoint {path}: {e}") from e
    if not isinstance(payload, dict) or "format" not in payload:
        raise CorruptFile(f"{path}: not a checkpoint")
    if payload["format"] != CHECKPOINT_FORMAT:
        raise FormatVersionMismatch(f"{path}: format {payload['format']!r}, expected {CHECKPOINT_FORMAT!r}")
    h = config_hash({"model": payload["model_config"], "train": payload["train_config"]})
    if h != payload["config_hash"]:
        raise CorruptFile(f"{path}: config hash mismatch")
    model = RealMotion(ModelConfig.from_dict(payload["model_config"]))
    model.load_state_dict(payload["state_dict"])
    meta = {k: v for k, v in payload.items() if k != "state_dict"}
    return model, meta
