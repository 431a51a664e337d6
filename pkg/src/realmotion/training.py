"""Winner-takes-all losses and multi-segment training."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch.nn import functional as F

from .backbone import Forecast
from .data import SequenceDataset
from .errors import ConfigInvalid, NonFiniteLoss
from .model import RealMotion, StreamState
from .sequencer import DEFAULT_SPLIT_POINTS

log = logging.getLogger(__name__)


@dataclass
class LossBreakdown:
    reg: torch.Tensor
    cls: torch.Tensor
    refine: torch.Tensor

    @property
    def total(self) -> torch.Tensor:
        return self.reg + self.cls + self.refine

    def item(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("reg", "cls", "refine", "total")}


def best_mode(Y: torch.Tensor, gt: torch.Tensor) -> torch.Tensor:
    """Index of the mode with the smallest final displacement; ties go to the lowest index."""
    fde = torch.linalg.vector_norm(Y[:, :, -1] - gt[:, None, -1], dim=-1)
    return fde.argmin(dim=-1)


def _pick(Y: torch.Tensor, idx: torch.Tensor) -> torch.Tensor:
    return Y[torch.arange(Y.shape[0], device=Y.device), idx]


def compute_losses(forecast: Forecast, refined: Optional[Forecast], gt: torch.Tensor,
                   aux_gt: Optional[torch.Tensor] = None, aux_mask: Optional[torch.Tensor] = None) -> LossBreakdown:
    """Regression (best initial mode + auxiliary trajectories), classification and
    refinement losses, each averaged over the batch. ``refined=None`` means no
    refinement stage and contributes zero."""
    best = best_mode(forecast.Y_mo.detach(), gt)
    reg = F.smooth_l1_loss(_pick(forecast.Y_mo, best), gt, beta=1.0)
    if aux_gt is not None and forecast.aux is not None and aux_mask is not None:
        m = aux_mask.unsqueeze(-1).to(gt.dtype)
        n = m.sum() * 2
        if float(n) > 0:
            per = F.smooth_l1_loss(forecast.aux, aux_gt, beta=1.0, reduction="none")
            reg = reg + (per * m).sum() / n
    cls = F.cross_entropy(forecast.logits, best)
    if refined is None:
        refine = torch.zeros((), dtype=gt.dtype, device=gt.device)
    else:
        rbest = best_mode(refined.Y_mo.detach(), gt)
        refine = F.smooth_l1_loss(_pick(refined.Y_mo, rbest), gt, beta=1.0)
    out = LossBreakdown(reg, cls, refine)
    if not torch.isfinite(out.total):
        raise NonFiniteLoss(f"loss diverged: {out.item()}")
    return out


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    weight_decay: float = 0.01
    gradient_steps: Optional[int] = None  # trailing segments with gradients; None = all
    split_points: Tuple[int, ...] = DEFAULT_SPLIT_POINTS
    hist_len: Optional[int] = None
    seed: int = 0

    def resolved_steps(self) -> int:
        n = len(self.split_points)
        steps = n if self.gradient_steps is None else self.gradient_steps
        if not 1 <= steps <= n:
            raise ConfigInvalid(f"gradient_steps={steps} outside [1, {n}]")
        return steps

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_points"] = list(self.split_points)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "split_points" in d:
            d["split_points"] = tuple(int(p) for p in d["split_points"])
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigInvalid(f"unknown TrainConfig fields {sorted(extra)}")
        return cls(**d)


def sequence_loss(model: RealMotion, segments, steps: int) -> Tuple[torch.Tensor, List[LossBreakdown]]:
    """Run all segments in order; only the last ``steps`` keep gradients and are supervised."""
    n = len(segments)
    state: Optional[StreamState] = None
    total, parts = None, []
    for k, seg in enumerate(segments):
        if k < n - steps:
            with torch.no_grad():
                state = model.forward_segment(seg, state).state
            continue
        out = model.forward_segment(seg, state)
        state = out.state
        refined = out.refined if model.trajectory is not None else None
        lb = compute_losses(out.initial, refined, seg.gt, seg.aux_gt, seg.aux_mask)
        parts.append(lb)
        total = lb.total if total is None else total + lb.total
    return total, parts


def train(model: RealMotion, data: SequenceDataset, cfg: TrainConfig, callback=None) -> List[dict]:
    """Train in place; returns one summary dict per epoch."""
    steps = cfg.resolved_steps()
    if len(data) == 0:
        raise ConfigInvalid("empty dataset")
    if len(data.segments) != len(cfg.split_points):
        raise ConfigInvalid("dataset segmentation does not match split_points")
    torch.manual_seed(cfg.seed)
    gen = torch.Generator().manual_seed(cfg.seed)
    opt = torch.optim.AdamW(model.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay)
    history = []
    for epoch in range(cfg.epochs):
        model.train()
        perm = torch.randperm(len(data), generator=gen)
        sums = {"reg": 0.0, "cls": 0.0, "refine": 0.0, "total": 0.0}
        batches = 0
        for start in range(0, len(data), cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            loss, parts = sequence_loss(model, data.batch(idx), steps)
            opt.zero_grad(set_to_none=True)
            loss.backward()
            opt.step()
            for p in parts:
                for k, v in p.item().items():
                    sums[k] += v
            batches += 1
        row = {"epoch": epoch + 1, **{k: v / batches for k, v in sums.items()}}
        history.append(row)
        log.info("epoch %d total %.4f", epoch + 1, row["total"])
        if callback is not None:
            callback(row)
    return history


@torch.no_grad()
def predict(model: RealMotion, data: SequenceDataset, batch_size: int = 64, all_segments: bool = False):
    """Refined forecasts of the final segment (or every segment) for all sequences.

    Returns numpy arrays ``(Y, probs)`` shaped (N, modes, K, 2) and (N, modes),
    or lists of those per segment when ``all_segments``.
    """
    model.eval()
    n_seg = len(data.segments)
    Ys = [[] for _ in range(n_seg)]
    Ps = [[] for _ in range(n_seg)]
    for start in range(0, len(data), batch_size):
        idx = torch.arange(start, min(start + batch_size, len(data)))
        outs = model.forward_sequence(data.batch(idx))
        for k, o in enumerate(outs):
            Ys[k].append(o.refined.Y_mo.double().numpy())
            Ps[k].append(o.refined.probs.double().numpy())
    Ys = [np.concatenate(y) for y in Ys]
    Ps = [np.concatenate(p) for p in Ps]
    if all_segments:
        return Ys, Ps
    return Ys[-1], Ps[-1]
