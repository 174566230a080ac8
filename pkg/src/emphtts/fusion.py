"""Context fusion and the word-level emphasis intensity predictor.

Hybrid-grained fusion broadcasts a coarse (sentence-level) context vector
onto the current utterance's word features and cross-attends into the
fine-grained context; cross-modality fusion attends from fused text onto
fused audio with a residual connection. The predictor maps each fused word
feature through a 64-unit hidden layer (exposed as the emphasis hidden
feature) to a sigmoid intensity.
"""

from __future__ import annotations

import torch
from torch import nn

from .attention import MultiHeadAttention

BCE_EPS = 1e-7


class FusionError(ValueError):
    """Shape mismatch between fusion operands."""


class HybridFusion(nn.Module):
    """Fuse one modality's coarse vector and fine matrix onto the current
    utterance's word features.

    Attention path: query = words + coarse (broadcast), key/value = fine,
    with the query kept as a residual so per-word identity survives the
    mixing (the same stabilization the cross-modality fusion uses).
    Addition path (ablation): operands are added instead, row-aligned fine
    matrices directly and others via their row mean.
    """

    def __init__(self, d_fuse: int, heads: int = 2):
        super().__init__()
        self.attn = MultiHeadAttention(d_fuse, d_fuse, d_fuse, heads)

    def forward(
        self,
        coarse: torch.Tensor,
        current_words: torch.Tensor,
        fine: torch.Tensor,
        use_attention: bool = True,
        return_weights: bool = False,
    ):
        """coarse: [d_fuse]; current_words: [w, d_fuse]; fine: [f, d_fuse]."""
        if coarse.ndim != 1 or coarse.shape[0] != current_words.shape[1]:
            raise FusionError(
                f"coarse vector {tuple(coarse.shape)} does not match word dim "
                f"{current_words.shape[1]}"
            )
        if fine.shape[1] != current_words.shape[1]:
            raise FusionError(
                f"fine dim {fine.shape[1]} does not match word dim {current_words.shape[1]}"
            )
        global_words = current_words + coarse.unsqueeze(0)
        if use_attention:
            attended, weights = self.attn(global_words, fine, fine)
            fused = global_words + attended
        else:
            if fine.shape[0] == global_words.shape[0]:
                fused = global_words + fine
            else:
                fused = global_words + fine.mean(dim=0, keepdim=True)
            weights = None
        if return_weights:
            return fused, weights
        return fused


class CrossModalFusion(nn.Module):
    """Attend from fused text features onto fused audio features, with a
    residual keeping the text path."""

    def __init__(self, d_fuse: int, heads: int = 2):
        super().__init__()
        self.attn = MultiHeadAttention(d_fuse, d_fuse, d_fuse, heads)

    def forward(
        self,
        f_t: torch.Tensor,
        f_a: torch.Tensor,
        use_attention: bool = True,
        return_weights: bool = False,
    ):
        """f_t, f_a: [w, d_fuse] with matching shapes."""
        if f_t.shape != f_a.shape:
            raise FusionError(f"text {tuple(f_t.shape)} vs audio {tuple(f_a.shape)} mismatch")
        if use_attention:
            attended, weights = self.attn(f_t, f_a, f_a)
            fused = f_t + attended
        else:
            fused = f_t + f_a
            weights = None
        if return_weights:
            return fused, weights
        return fused


class IntensityPredictor(nn.Module):
    """Two-layer MLP per word: d_fuse -> 64 hidden (the emphasis hidden
    feature) -> sigmoid intensity."""

    def __init__(self, d_fuse: int, d_hidden: int = 64):
        super().__init__()
        self.hidden = nn.Linear(d_fuse, d_hidden)
        self.act = nn.ReLU()
        self.out = nn.Linear(d_hidden, 1)

    def forward(self, fused: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """fused: [w, d_fuse]. Returns (intensities [w], hidden [w, 64])."""
        if not torch.isfinite(fused).all():
            raise FusionError("predictor input is not finite")
        h = self.act(self.hidden(fused))
        intensity = torch.sigmoid(self.out(h)).squeeze(-1)
        return intensity, h


def emphasis_bce(predicted: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean binary cross entropy against soft intensity targets in [0, 1]."""
    if predicted.shape != target.shape:
        raise FusionError(
            f"predicted {tuple(predicted.shape)} vs target {tuple(target.shape)} mismatch"
        )
    p = predicted.clamp(BCE_EPS, 1.0 - BCE_EPS)
    t = target.to(p.dtype)
    return -(t * torch.log(p) + (1.0 - t) * torch.log(1.0 - p)).mean()
