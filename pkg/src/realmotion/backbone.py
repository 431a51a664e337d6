"""Plain encoder-decoder: polyline map encoder, neighborhood-attention agent
encoder, scene transformer and multimodal decoding heads.

All modules take batched tensors with a leading batch dim B.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
from torch import nn

from .errors import ShapeMismatch
from .layers import FeedForward, SelfAttentionBlock, zero_masked
from .scene import AGENT_CHANNELS, MAP_CHANNELS

# fixed input scaling: positions, heading (cos, sin), velocity, acceleration, valid
_AGENT_SCALE = (1 / 20, 1 / 20, 1.0, 1.0, 1 / 10, 1 / 10, 1 / 5, 1 / 5, 1.0)
_MAP_SCALE = 1 / 50
OUTPUT_SCALE = 10.0  # meters per unit of decoder head output


@dataclass
class SceneFeatures:
    F_a: torch.Tensor  # (B, N_a, D)
    F_m: torch.Tensor  # (B, N_m, D)
    agent_mask: torch.Tensor  # (B, N_a) bool
    map_mask: torch.Tensor  # (B, N_m) bool

    @property
    def F_s(self) -> torch.Tensor:
        return torch.cat([self.F_a, self.F_m], dim=1)

    @property
    def scene_mask(self) -> torch.Tensor:
        return torch.cat([self.agent_mask, self.map_mask], dim=1)

    @property
    def num_agents(self) -> int:
        return self.F_a.shape[1]


@dataclass
class Forecast:
    Y_mo: torch.Tensor  # (B, modes, K, 2), local frame
    logits: torch.Tensor  # (B, modes)
    F_mo: torch.Tensor  # (B, modes, D)
    aux: Optional[torch.Tensor] = None  # (B, N_a, K, 2)

    @property
    def probs(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=-1)


def _check(t: torch.Tensor, dims: int, name: str, last: Optional[int] = None):
    if t.dim() != dims or (last is not None and t.shape[-1] != last):
        raise ShapeMismatch(f"{name}: unexpected shape {tuple(t.shape)}")


class MapEncoder(nn.Module):
    """Shared per-point MLP, max-pool over points, then a projection."""

    def __init__(self, dim: int, in_channels: int = MAP_CHANNELS):
        super().__init__()
        self.in_channels = in_channels
        self.point_mlp = nn.Sequential(nn.Linear(in_channels, dim), nn.GELU(), nn.Linear(dim, dim))
        self.post = nn.Sequential(nn.GELU(), nn.Linear(dim, dim))
        self.norm = nn.LayerNorm(dim)

    def forward(self, M: torch.Tensor, map_mask: torch.Tensor) -> torch.Tensor:
        _check(M, 4, "M", self.in_channels)
        x = self.point_mlp(M * _MAP_SCALE)
        x = x.max(dim=2).values
        x = self.norm(self.post(x))
        return zero_masked(x, map_mask)


def neighborhood_mask(T: int, window: int, device=None) -> torch.Tensor:
    """(T, T) bool: query i sees the ``window`` frames nearest to it, the window
    clamped inside the sequence. ``window >= T`` gives full attention."""
    w = min(window, T)
    i = torch.arange(T, device=device)
    start = (i - w // 2).clamp(0, T - w)
    j = torch.arange(T, device=device)
    return (j[None, :] >= start[:, None]) & (j[None, :] < start[:, None] + w)


class AgentEncoder(nn.Module):
    """Per-agent temporal encoder: stacked neighborhood-attention blocks, then the
    feature of the last valid frame."""

    def __init__(self, dim: int, depth: int = 2, heads: int = 4, window: int = 10, max_len: int = 64):
        super().__init__()
        self.window = window
        self.register_buffer("scale", torch.tensor(_AGENT_SCALE), persistent=False)
        self.embed = nn.Sequential(nn.Linear(AGENT_CHANNELS, dim), nn.GELU(), nn.Linear(dim, dim))
        self.pos = nn.Parameter(torch.randn(max_len, dim) * 0.02)
        self.blocks = nn.ModuleList([SelfAttentionBlock(dim, heads) for _ in range(depth)])
        self.norm = nn.LayerNorm(dim)

    def forward(self, A: torch.Tensor, frame_mask: torch.Tensor) -> torch.Tensor:
        _check(A, 4, "A", AGENT_CHANNELS)
        B, N, T, _ = A.shape
        if T > self.pos.shape[0]:
            raise ShapeMismatch(f"history of {T} frames exceeds max_len {self.pos.shape[0]}")
        x = self.embed(A * self.scale.to(A.dtype)) + self.pos[-T:]
        x = x.reshape(B * N, T, -1)
        fm = frame_mask.reshape(B * N, T)
        x = zero_masked(x, fm)
        attn_mask = neighborhood_mask(T, self.window, A.device).unsqueeze(0)
        for blk in self.blocks:
            x = blk(x, fm, attn_mask)
        # last valid frame per agent
        idx = torch.arange(T, device=A.device).expand(B * N, T)
        last = torch.where(fm, idx, torch.full_like(idx, -1)).max(dim=1).values
        agent_valid = last >= 0
        pooled = x[torch.arange(B * N, device=A.device), last.clamp(min=0)]
        pooled = zero_masked(self.norm(pooled), agent_valid)
        return pooled.view(B, N, -1)


class SceneEncoder(nn.Module):
    def __init__(self, dim: int, depth: int = 2, heads: int = 4):
        super().__init__()
        self.type_embed = nn.Parameter(torch.randn(2, dim) * 0.02)
        self.blocks = nn.ModuleList([SelfAttentionBlock(dim, heads) for _ in range(depth)])

    def forward(self, F_a, F_m, agent_mask, map_mask) -> SceneFeatures:
        if F_a.shape[-1] != F_m.shape[-1]:
            raise ShapeMismatch("agent and map features differ in width")
        N_a = F_a.shape[1]
        x = torch.cat([F_a + self.type_embed[0], F_m + self.type_embed[1]], dim=1)
        mask = torch.cat([agent_mask, map_mask], dim=1)
        x = zero_masked(x, mask)
        for blk in self.blocks:
            x = blk(x, mask)
        return SceneFeatures(x[:, :N_a], x[:, N_a:], agent_mask, map_mask)


class Decoder(nn.Module):
    """Mode features from focal feature + learned mode embeddings; MLP heads for
    trajectories, mode logits and the auxiliary single-trajectory forecast.

    Auxiliary trajectories are displacements from each agent's last observed
    position, in the focal frame."""

    def __init__(self, dim: int, horizon: int, modes: int = 6, hidden: Optional[int] = None):
        super().__init__()
        hidden = hidden or dim
        self.horizon, self.modes = horizon, modes
        self.mode_embed = nn.Parameter(torch.randn(modes, dim))
        self.mode_norm = nn.LayerNorm(dim)
        self.mode_ffn = FeedForward(dim)
        self.traj_head = FeedForward(dim, hidden, horizon * 2)
        self.prob_head = FeedForward(dim, hidden, 1)
        self.aux_head = FeedForward(dim, hidden, horizon * 2)

    def forward(self, scene: SceneFeatures, focal_index: torch.Tensor) -> Forecast:
        B = scene.F_a.shape[0]
        if focal_index.shape != (B,) or int(focal_index.max()) >= scene.num_agents:
            raise ShapeMismatch("focal_index must be (B,) and inside the agent rows")
        focal = scene.F_a[torch.arange(B, device=focal_index.device), focal_index]
        f = focal[:, None, :] + self.mode_embed[None]
        f = f + self.mode_ffn(self.mode_norm(f))
        Y = self.traj_head(f).view(B, self.modes, self.horizon, 2) * OUTPUT_SCALE
        logits = self.prob_head(f).squeeze(-1)
        aux = self.aux_head(scene.F_a).view(B, scene.num_agents, self.horizon, 2) * OUTPUT_SCALE
        return Forecast(Y_mo=Y, logits=logits, F_mo=f, aux=aux)


class Backbone(nn.Module):
    def __init__(self, dim: int = 64, horizon: int = 60, modes: int = 6, depth: int = 2, heads: int = 4,
                 window: int = 10, max_len: int = 64):
        super().__init__()
        self.map_encoder = MapEncoder(dim)
        self.agent_encoder = AgentEncoder(dim, depth, heads, window, max_len)
        self.scene_encoder = SceneEncoder(dim, depth, heads)
        self.decoder = Decoder(dim, horizon, modes)

    def encode(self, A, frame_mask, M, map_mask) -> SceneFeatures:
        F_m = self.map_encoder(M, map_mask)
        F_a = self.agent_encoder(A, frame_mask)
        return self.scene_encoder(F_a, F_m, frame_mask.any(dim=-1), map_mask)
