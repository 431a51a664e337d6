"""Scene context stream: motion-aware alignment of the previous scene features
and map-map / agent-scene cross-attention into the current ones."""
from __future__ import annotations

import torch
from torch import nn
from torch.nn import functional as F

from .backbone import SceneFeatures
from .errors import ShapeMismatch
from .layers import CrossAttentionBlock, zero_masked


class MotionEncoding(nn.Module):
    """(dx, dy, dtheta, dt) -> D-vector; dtheta enters as (sin, cos)."""

    def __init__(self, dim: int):
        super().__init__()
        self.proj = nn.Linear(5, dim)

    @staticmethod
    def raw_features(motion: torch.Tensor) -> torch.Tensor:
        dx, dy, dth, dt = motion.unbind(-1)
        return torch.stack([dx / 10, dy / 10, torch.sin(dth), torch.cos(dth), dt], dim=-1)

    def forward(self, motion: torch.Tensor) -> torch.Tensor:
        return F.gelu(self.proj(self.raw_features(motion)))


class MotionAwareLayerNorm(nn.Module):
    """``(1 + W_g c) * LayerNorm(F) + W_b c`` with c the encoded motion.

    ``W_g`` and ``W_b`` start at zero, so a fresh module is a plain LayerNorm.
    """

    def __init__(self, dim: int):
        super().__init__()
        self.encode = MotionEncoding(dim)
        self.gamma = nn.Linear(dim, dim)
        self.beta = nn.Linear(dim, dim)
        for lin in (self.gamma, self.beta):
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)
        self.dim = dim

    def forward(self, feats: torch.Tensor, motion: torch.Tensor) -> torch.Tensor:
        """feats (B, L, D); motion (B, 4) shared by all rows or (B, L, 4) per row."""
        if feats.shape[-1] != self.dim:
            raise ShapeMismatch(f"expected width {self.dim}, got {feats.shape[-1]}")
        c = self.encode(motion)
        if c.dim() == 2:
            c = c.unsqueeze(1)
        normed = F.layer_norm(feats, (self.dim,))
        return (1 + self.gamma(c)) * normed + self.beta(c)


class ContextStream(nn.Module):
    def __init__(self, dim: int, depth: int = 2, heads: int = 4, align: bool = True):
        super().__init__()
        self.align = align
        self.mln = MotionAwareLayerNorm(dim)
        self.map_blocks = nn.ModuleList([CrossAttentionBlock(dim, heads) for _ in range(depth)])
        self.agent_blocks = nn.ModuleList([CrossAttentionBlock(dim, heads) for _ in range(depth)])

    def align_features(self, prev: SceneFeatures, motion: torch.Tensor) -> SceneFeatures:
        """Re-express ``prev`` for the current frame; ``motion`` is (B, 4)."""
        if self.align:
            F_a = zero_masked(self.mln(prev.F_a, motion), prev.agent_mask)
            F_m = zero_masked(self.mln(prev.F_m, motion), prev.map_mask)
        else:
            F_a, F_m = prev.F_a, prev.F_m
        return SceneFeatures(F_a, F_m, prev.agent_mask, prev.map_mask)

    def reference_context(self, current: SceneFeatures, aligned_prev: SceneFeatures) -> SceneFeatures:
        if current.F_a.shape[-1] != aligned_prev.F_a.shape[-1]:
            raise ShapeMismatch("current and previous features differ in width")
        F_m = current.F_m
        for blk in self.map_blocks:
            F_m = blk(F_m, aligned_prev.F_m, current.map_mask, aligned_prev.map_mask)
        prev_s, prev_mask = aligned_prev.F_s, aligned_prev.scene_mask
        F_a = current.F_a
        for blk in self.agent_blocks:
            F_a = blk(F_a, prev_s, current.agent_mask, prev_mask)
        return SceneFeatures(F_a, F_m, current.agent_mask, current.map_mask)

    def forward(self, current: SceneFeatures, prev: SceneFeatures = None, motion: torch.Tensor = None) -> SceneFeatures:
        if prev is None:
            return current
        return self.reference_context(current, self.align_features(prev, motion))
