"""Attention primitives with exact masking.

Masked keys get weight exactly 0 and masked query rows are zeroed, so padded
tokens neither influence nor receive gradient from valid ones.
"""
from __future__ import annotations

import math
from typing import Optional

import torch
from torch import nn
from torch.nn import functional as F

_NEG = -1e9


def masked_softmax(logits: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    """Softmax over the last dim; rows with no allowed entry come out all-zero."""
    if mask is None:
        return torch.softmax(logits, dim=-1)
    logits = logits.masked_fill(~mask, _NEG)
    w = torch.softmax(logits, dim=-1)
    return w * mask.to(w.dtype)


class MultiHeadAttention(nn.Module):
    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q_proj = nn.Linear(dim, dim)
        self.k_proj = nn.Linear(dim, dim)
        self.v_proj = nn.Linear(dim, dim)
        self.out_proj = nn.Linear(dim, dim)

    def forward(self, q, k, v, mask: Optional[torch.Tensor] = None, return_weights: bool = False):
        """q (B, Lq, D), k/v (B, Lk, D); mask broadcastable to (B, Lq, Lk), True = attend."""
        B, Lq, D = q.shape
        Lk = k.shape[1]
        h, dh = self.heads, D // self.heads
        qh = self.q_proj(q).view(B, Lq, h, dh).transpose(1, 2)
        kh = self.k_proj(k).view(B, Lk, h, dh).transpose(1, 2)
        vh = self.v_proj(v).view(B, Lk, h, dh).transpose(1, 2)
        logits = qh @ kh.transpose(-1, -2) / math.sqrt(dh)
        if mask is not None:
            mask = mask.unsqueeze(1)  # broadcast over heads
        w = masked_softmax(logits, mask)
        out = (w @ vh).transpose(1, 2).reshape(B, Lq, D)
        out = self.out_proj(out)
        return (out, w) if return_weights else out


class FeedForward(nn.Module):
    def __init__(self, dim: int, hidden: Optional[int] = None, out: Optional[int] = None):
        super().__init__()
        hidden = hidden or 2 * dim
        self.net = nn.Sequential(nn.Linear(dim, hidden), nn.GELU(), nn.Linear(hidden, out or dim))

    def forward(self, x):
        return self.net(x)


def zero_masked(x: torch.Tensor, mask: Optional[torch.Tensor]) -> torch.Tensor:
    if mask is None:
        return x
    return x * mask.unsqueeze(-1).to(x.dtype)


class SelfAttentionBlock(nn.Module):
    """Pre-norm transformer encoder layer."""

    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim)

    def forward(self, x, token_mask=None, attn_mask=None):
        """token_mask (B, L) marks valid tokens; attn_mask (B|1, L, L) further restricts keys."""
        mask = None
        if token_mask is not None:
            mask = token_mask.unsqueeze(1).expand(-1, x.shape[1], -1)
        if attn_mask is not None:
            mask = attn_mask if mask is None else mask & attn_mask
        h = self.norm1(x)
        x = x + self.attn(h, h, h, mask)
        x = x + self.ffn(self.norm2(x))
        return zero_masked(x, token_mask)


class CrossAttentionBlock(nn.Module):
    """Pre-norm cross-attention with residual and feed-forward sublayer."""

    def __init__(self, dim: int, heads: int = 4):
        super().__init__()
        self.norm_q = nn.LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm2 = nn.LayerNorm(dim)
        self.ffn = FeedForward(dim)

    def forward(self, x, memory, x_mask=None, memory_mask=None, query_pos=None, key_pos=None):
        q = self.norm_q(x)
        if query_pos is not None:
            q = q + query_pos
        k = memory if key_pos is None else memory + key_pos
        mask = None
        if memory_mask is not None:
            mask = memory_mask.unsqueeze(1).expand(-1, x.shape[1], -1)
        a = self.attn(q, k, memory, mask)
        if memory_mask is not None:
            # a query with no valid key gets no update
            a = a * memory_mask.any(dim=-1).view(-1, 1, 1).to(a.dtype)
        x = x + a
        x = x + self.ffn(self.norm2(x))
        return zero_masked(x, x_mask)
