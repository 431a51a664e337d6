"""RealMotion: backbone plus scene-context and agent-trajectory streams, run
segment by segment with a carried stream state."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional

import torch
from torch import nn

from .backbone import Backbone, Forecast, SceneFeatures
from .context_stream import ContextStream
from .errors import ConfigInvalid
from .geometry import relative_motion_t
from .trajectory_stream import MemoryBank, TrajectoryStream


@dataclass
class ModelConfig:
    dim: int = 64
    heads: int = 4
    depth: int = 2  # scene encoder and agent encoder blocks
    stream_depth: int = 2  # cross-attention blocks in each stream
    window: int = 10
    modes: int = 6
    horizon: int = 60
    max_len: int = 64
    q: float = 10.0
    context_stream: bool = True
    trajectory_stream: bool = True
    context_align: bool = True
    trajectory_align: bool = True
    trajectory_embedding: bool = True
    memory_capacity: int = 12

    def to_dict(self) -> dict:
        return asdict(self)

    def validate(self) -> "ModelConfig":
        if self.dim <= 0 or self.dim % self.heads:
            raise ConfigInvalid(f"dim={self.dim} must be positive and divisible by heads={self.heads}")
        if min(self.depth, self.stream_depth, self.window, self.modes, self.horizon, self.max_len) < 1:
            raise ConfigInvalid("depths, window, modes, horizon and max_len must be >= 1")
        if self.q <= 0 or self.memory_capacity < 1:
            raise ConfigInvalid("q and memory_capacity must be positive")
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        extra = set(d) - set(cls.__dataclass_fields__)
        if extra:
            raise ConfigInvalid(f"unknown ModelConfig fields {sorted(extra)}")
        return cls(**d).validate()


@dataclass
class SegmentBatch:
    """Collated tensors for one segment of B sequences."""

    A: torch.Tensor  # (B, N_a, T, 9)
    frame_mask: torch.Tensor  # (B, N_a, T) bool
    M: torch.Tensor  # (B, N_m, P, 2)
    map_mask: torch.Tensor  # (B, N_m) bool
    focal_index: torch.Tensor  # (B,) long
    pose: torch.Tensor  # (B, 4) global focal pose (x, y, theta, t)
    gt: Optional[torch.Tensor] = None  # (B, K, 2) local
    aux_gt: Optional[torch.Tensor] = None  # (B, N_a, K, 2) local, relative to each agent's last seen position
    aux_mask: Optional[torch.Tensor] = None  # (B, N_a, K) bool

    def to(self, dtype=None, device=None) -> "SegmentBatch":
        def conv(t):
            if t is None:
                return None
            if t.is_floating_point():
                return t.to(device=device, dtype=dtype or t.dtype)
            return t.to(device=device)
        return SegmentBatch(**{k: conv(v) for k, v in self.__dict__.items()})

    def index(self, idx) -> "SegmentBatch":
        return SegmentBatch(**{k: (None if v is None else v[idx]) for k, v in self.__dict__.items()})

    @property
    def batch_size(self) -> int:
        return self.A.shape[0]


@dataclass
class StreamState:
    prev_scene: Optional[SceneFeatures] = None
    prev_pose: Optional[torch.Tensor] = None
    memory: Optional[MemoryBank] = None

    def detach(self) -> "StreamState":
        prev = None
        if self.prev_scene is not None:
            p = self.prev_scene
            prev = SceneFeatures(p.F_a.detach(), p.F_m.detach(), p.agent_mask, p.map_mask)
        mem = None
        if self.memory is not None:
            m = self.memory
            mem = MemoryBank(m.trajs.detach(), m.feats.detach(), m.poses.detach(), m.capacity, m.owners)
        pose = None if self.prev_pose is None else self.prev_pose.detach()
        return StreamState(prev, pose, mem)


@dataclass
class SegmentOutput:
    initial: Forecast
    refined: Forecast
    state: StreamState


class RealMotion(nn.Module):
    def __init__(self, cfg: ModelConfig = None):
        super().__init__()
        cfg = (cfg or ModelConfig()).validate()
        self.cfg = cfg
        self.backbone = Backbone(cfg.dim, cfg.horizon, cfg.modes, cfg.depth, cfg.heads, cfg.window, cfg.max_len)
        self.context = (ContextStream(cfg.dim, cfg.stream_depth, cfg.heads, cfg.context_align)
                        if cfg.context_stream else None)
        self.trajectory = (TrajectoryStream(cfg.dim, cfg.horizon, cfg.stream_depth, cfg.heads,
                                            cfg.memory_capacity, cfg.trajectory_align, cfg.trajectory_embedding)
                           if cfg.trajectory_stream else None)

    def forward_segment(self, batch: SegmentBatch, state: Optional[StreamState] = None) -> SegmentOutput:
        state = state or StreamState()
        scene = self.backbone.encode(batch.A, batch.frame_mask, batch.M, batch.map_mask)
        if self.context is not None and state.prev_scene is not None:
            motion = relative_motion_t(state.prev_pose, batch.pose)
            scene = self.context(scene, state.prev_scene, motion)
        initial = self.backbone.decoder(scene, batch.focal_index)
        refined = initial
        memory = state.memory
        if self.trajectory is not None:
            if memory is None:
                memory = MemoryBank.empty(batch.batch_size, self.cfg.horizon, self.cfg.dim,
                                          self.cfg.memory_capacity, dtype=batch.A.dtype, device=batch.A.device)
            memory = memory.evict_stale(batch.pose, self.cfg.q)
            F_ref, Y_ref = self.trajectory(initial.F_mo, initial.Y_mo, memory, batch.pose, self.cfg.q)
            refined = Forecast(Y_ref, initial.logits, F_ref, initial.aux)
            memory = memory.update(Y_ref, F_ref, batch.pose)
        new_state = StreamState(scene if self.context is not None else None, batch.pose, memory)
        return SegmentOutput(initial, refined, new_state)

    def forward_sequence(self, segments: List[SegmentBatch], state: Optional[StreamState] = None) -> List[SegmentOutput]:
        outs = []
        for seg in segments:
            out = self.forward_segment(seg, state)
            state = out.state
            outs.append(out)
        return outs

    def num_parameters(self) -> int:
        return sum(p.numel() for p in self.parameters())
