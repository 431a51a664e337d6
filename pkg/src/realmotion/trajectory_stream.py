"""Agent trajectory stream: FIFO memory of past predictions, alignment to the
current frame and trajectory relaying with residual offsets.

Stored trajectories are global and carry the prediction-time focal position as
point 0, followed by the K predicted points. Aligning at time offset dt uses
point ``round(dt * q)`` as origin, i.e. where that entry expected the agent to
be now; the K predicted points are returned.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from torch import nn

from .backbone import OUTPUT_SCALE
from .context_stream import MotionAwareLayerNorm
from .errors import EmptyBank, ShapeMismatch, StaleEntry
from .geometry import Pose2, local_to_global, relative_motion_t
from .layers import CrossAttentionBlock, FeedForward

TRAJ_SCALE = 20.0


@dataclass
class MemoryEntry:
    y: np.ndarray  # (K + 1, 2) global, anchor first
    f: np.ndarray  # (D,)
    origin_pose: Pose2


@dataclass
class MemoryBank:
    """Per-focal-agent FIFO memories, batched along dim 0.

    Every batch row receives the same number of entries per update, so FIFO
    order is shared and eviction is a slice.
    """

    trajs: torch.Tensor  # (B, L, K + 1, 2)
    feats: torch.Tensor  # (B, L, D)
    poses: torch.Tensor  # (B, L, 4)
    capacity: int = 12
    owners: Optional[List[str]] = None

    @classmethod
    def empty(cls, batch: int, horizon: int, dim: int, capacity: int = 12, owners=None,
              dtype=torch.float32, device=None) -> "MemoryBank":
        return cls(torch.zeros(batch, 0, horizon + 1, 2, dtype=dtype, device=device),
                   torch.zeros(batch, 0, dim, dtype=dtype, device=device),
                   torch.zeros(batch, 0, 4, dtype=dtype, device=device), capacity, owners)

    def __len__(self) -> int:
        return self.trajs.shape[1]

    @property
    def horizon(self) -> int:
        return self.trajs.shape[2] - 1

    def entries(self, row: int = 0) -> List[MemoryEntry]:
        return [MemoryEntry(self.trajs[row, i].detach().cpu().numpy(),
                            self.feats[row, i].detach().cpu().numpy(),
                            Pose2.from_array(self.poses[row, i].detach().cpu().numpy()))
                for i in range(len(self))]

    def update(self, Y_local: torch.Tensor, F_mo: torch.Tensor, pose: torch.Tensor) -> "MemoryBank":
        """Append all modes (B, M, K, 2) projected to global, evicting the oldest past capacity."""
        B, M, K, _ = Y_local.shape
        if K != self.horizon or F_mo.shape[:2] != (B, M):
            raise ShapeMismatch("memory update shapes inconsistent with bank")
        anchor = torch.zeros(B, M, 1, 2, dtype=Y_local.dtype, device=Y_local.device)
        local = torch.cat([anchor, Y_local], dim=2)
        glob = local_to_global(local, pose)
        trajs = torch.cat([self.trajs, glob], dim=1)[:, -self.capacity:]
        feats = torch.cat([self.feats, F_mo], dim=1)[:, -self.capacity:]
        poses = torch.cat([self.poses, pose[:, None, :].expand(B, M, 4)], dim=1)[:, -self.capacity:]
        return MemoryBank(trajs, feats, poses, self.capacity, self.owners)

    def evict_stale(self, current_pose: torch.Tensor, q: float) -> "MemoryBank":
        """Drop entries whose origin index reaches their horizon (dt * q >= K)."""
        if len(self) == 0:
            return self
        idx = torch.round((current_pose[:, None, 3] - self.poses[..., 3]) * q)
        keep = (idx < self.horizon).all(dim=0)
        if bool(keep.all()):
            return self
        return MemoryBank(self.trajs[:, keep], self.feats[:, keep], self.poses[:, keep],
                          self.capacity, self.owners)

    def align_trajectories(self, current_pose: torch.Tensor, q: float) -> torch.Tensor:
        """(B, L, K, 2) memory trajectories re-expressed at the current frame."""
        if len(self) == 0:
            raise EmptyBank("memory bank is empty")
        B, L, K1, _ = self.trajs.shape
        dt = current_pose[:, None, 3] - self.poses[..., 3]
        idx = torch.round(dt * q).long()
        if bool((idx >= K1 - 1).any()) or bool((idx < 0).any()):
            raise StaleEntry("entry older than its own horizon")
        origin = torch.gather(self.trajs, 2, idx[..., None, None].expand(B, L, 1, 2))
        e = self.trajs - origin
        th = current_pose[:, 2].view(B, 1, 1)
        c, s = torch.cos(th), torch.sin(th)
        local = torch.stack([c * e[..., 0] + s * e[..., 1], -s * e[..., 0] + c * e[..., 1]], dim=-1)
        return local[:, :, 1:]

    def motions(self, current_pose: torch.Tensor) -> torch.Tensor:
        """(B, L, 4) relative motion from each entry's origin pose to the current pose."""
        return relative_motion_t(self.poses, current_pose[:, None, :].expand_as(self.poses))


class TrajectoryEmbedding(nn.Module):
    """Single linear layer over the flattened (scaled) trajectory."""

    def __init__(self, horizon: int, dim: int):
        super().__init__()
        self.proj = nn.Linear(2 * horizon, dim)

    def forward(self, Y: torch.Tensor) -> torch.Tensor:
        return self.proj(Y.flatten(-2) / TRAJ_SCALE)


class TrajectoryStream(nn.Module):
    def __init__(self, dim: int, horizon: int, depth: int = 2, heads: int = 4, capacity: int = 12,
                 align: bool = True, use_te: bool = True):
        super().__init__()
        self.capacity = capacity
        self.align = align
        self.use_te = use_te
        self.mln = MotionAwareLayerNorm(dim)
        self.te = TrajectoryEmbedding(horizon, dim)
        self.blocks = nn.ModuleList([CrossAttentionBlock(dim, heads) for _ in range(depth)])
        self.offset_head = FeedForward(dim, dim, horizon * 2)
        nn.init.zeros_(self.offset_head.net[-1].weight)
        nn.init.zeros_(self.offset_head.net[-1].bias)
        self.horizon = horizon

    def align_memory(self, bank: MemoryBank, current_pose: torch.Tensor, q: float) -> Tuple[torch.Tensor, torch.Tensor]:
        Y_b = bank.align_trajectories(current_pose, q)
        if self.align:
            F_b = self.mln(bank.feats, bank.motions(current_pose))
        else:
            F_b = bank.feats
        return F_b, Y_b

    def relay(self, F_mo, Y_mo, F_b, Y_b) -> Tuple[torch.Tensor, torch.Tensor]:
        if Y_mo.shape[-2:] != (self.horizon, 2) or Y_b.shape[-2:] != (self.horizon, 2):
            raise ShapeMismatch("trajectory horizon mismatch")
        if F_b.shape[:2] != Y_b.shape[:2]:
            raise ShapeMismatch("memory features and trajectories disagree")
        q_pos = self.te(Y_mo) if self.use_te else None
        k_pos = self.te(Y_b) if self.use_te else None
        f = F_mo
        for blk in self.blocks:
            f = blk(f, F_b, query_pos=q_pos, key_pos=k_pos)
        offsets = self.offset_head(f).view(Y_mo.shape) * OUTPUT_SCALE
        return f, Y_mo + offsets

    def forward(self, F_mo, Y_mo, bank: Optional[MemoryBank], current_pose, q: float):
        if bank is None or len(bank) == 0:
            return F_mo, Y_mo
        F_b, Y_b = self.align_memory(bank, current_pose, q)
        return self.relay(F_mo, Y_mo, F_b, Y_b)
