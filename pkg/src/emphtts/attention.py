"""Multi-head attention primitives shared by the context encoders, fusion
modules, and synthesizer. All modules operate on single unbatched sequences
(rows = positions) and return their attention weights for inspection.
"""

from __future__ import annotations

import math

import torch
from torch import nn

# queries and keys share their initial projection (scaled up) whenever the
# input spaces match, so dot products reflect input similarity from step 0
QK_INIT_GAIN = 2.0


def _share_qk_init(q_proj: nn.Linear, k_proj: nn.Linear) -> None:
    if q_proj.weight.shape != k_proj.weight.shape:
        return
    with torch.no_grad():
        k_proj.weight.copy_(q_proj.weight * QK_INIT_GAIN)
        q_proj.weight.mul_(QK_INIT_GAIN)
        q_proj.bias.zero_()
        k_proj.bias.zero_()


class MultiHeadAttention(nn.Module):
    """Scaled dot-product attention with query/key/value/output projections."""

    def __init__(self, d_query_in: int, d_kv_in: int, d_attn: int, heads: int, d_out: int | None = None):
        super().__init__()
        if d_attn % heads != 0:
            raise ValueError(f"d_attn {d_attn} not divisible by heads {heads}")
        self.heads = heads
        self.d_head = d_attn // heads
        self.q_proj = nn.Linear(d_query_in, d_attn)
        self.k_proj = nn.Linear(d_kv_in, d_attn)
        self.v_proj = nn.Linear(d_kv_in, d_attn)
        self.out_proj = nn.Linear(d_attn, d_out if d_out is not None else d_attn)
        _share_qk_init(self.q_proj, self.k_proj)

    def forward(
        self, query: torch.Tensor, keys: torch.Tensor, values: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        """query: [q, d_query_in]; keys/values: [k, d_kv_in].

        Returns (output [q, d_out], weights [heads, q, k]).
        """
        q = self.q_proj(query).view(-1, self.heads, self.d_head).transpose(0, 1)
        k = self.k_proj(keys).view(-1, self.heads, self.d_head).transpose(0, 1)
        v = self.v_proj(values).view(-1, self.heads, self.d_head).transpose(0, 1)
        logits = q @ k.transpose(1, 2) / math.sqrt(self.d_head)
        weights = torch.softmax(logits, dim=-1)
        mixed = weights @ v
        out = mixed.transpose(0, 1).reshape(query.shape[0], -1)
        return self.out_proj(out), weights


class PoolingAttention(nn.Module):
    """Attention whose output is a convex mixture of the *raw* value rows.

    Only queries and keys are projected; per-head mixtures are averaged, so
    every output row stays inside the convex hull of the memory rows.
    """

    def __init__(self, d_in: int, d_attn: int, heads: int):
        super().__init__()
        if d_attn % heads != 0:
            raise ValueError(f"d_attn {d_attn} not divisible by heads {heads}")
        self.heads = heads
        self.d_head = d_attn // heads
        self.q_proj = nn.Linear(d_in, d_attn)
        self.k_proj = nn.Linear(d_in, d_attn)
        _share_qk_init(self.q_proj, self.k_proj)

    def forward(self, query: torch.Tensor, memory: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """query: [q, d_in]; memory: [k, d_in] used as both keys and values.

        Returns (output [q, d_in], weights [heads, q, k]).
        """
        q = self.q_proj(query).view(-1, self.heads, self.d_head).transpose(0, 1)
        k = self.k_proj(memory).view(-1, self.heads, self.d_head).transpose(0, 1)
        logits = q @ k.transpose(1, 2) / math.sqrt(self.d_head)
        weights = torch.softmax(logits, dim=-1)
        out = (weights @ memory.unsqueeze(0)).mean(dim=0)
        return out, weights


class SelfAttentionBlock(nn.Module):
    """Pre-norm transformer block (self-attention + feed-forward)."""

    def __init__(self, d_model: int, heads: int, d_ff: int | None = None):
        super().__init__()
        self.norm1 = nn.LayerNorm(d_model)
        self.attn = MultiHeadAttention(d_model, d_model, d_model, heads)
        self.norm2 = nn.LayerNorm(d_model)
        d_ff = d_ff or 4 * d_model
        self.ff = nn.Sequential(nn.Linear(d_model, d_ff), nn.ReLU(), nn.Linear(d_ff, d_model))

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attended, _ = self.attn(h, h, h)
        x = x + attended
        return x + self.ff(self.norm2(x))


def sinusoidal_positions(length: int, d_model: int, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    position = torch.arange(length, dtype=dtype).unsqueeze(1)
    div = torch.exp(torch.arange(0, d_model, 2, dtype=dtype) * (-math.log(10000.0) / d_model))
    enc = torch.zeros(length, d_model, dtype=dtype)
    enc[:, 0::2] = torch.sin(position * div)
    enc[:, 1::2] = torch.cos(position * div[: d_model // 2])
    return enc
