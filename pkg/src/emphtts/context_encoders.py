"""Dialogue-history context encoders.

Four speaker-conditioned encoders read the history at two granularities per
modality: recurrent sentence-level encoders for text and audio, and
bidirectional memory-enhanced fine-grained encoders over word and frame
features. Every encoder projects to the shared fusion dimension.

Speaker conditioning is a bias-free linear projection of the turn's speaker
vector added to that turn's vectors before encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import torch
from torch import nn

from .attention import MultiHeadAttention, PoolingAttention


class EncoderError(ValueError):
    """Invalid encoder input (empty history, mismatched lengths)."""


@dataclass
class ContextBundle:
    """The five context features consumed by fusion, all at d_fuse."""

    f_t_coar: torch.Tensor  # [d_fuse] coarse text
    f_t_fine: torch.Tensor  # [words, d_fuse] memory-enhanced fine text
    f_a_coar: torch.Tensor  # [d_fuse] coarse audio
    f_a_fine: torch.Tensor  # [frames, d_fuse] memory-enhanced fine audio
    f_t_fine_current: torch.Tensor  # [words, d_fuse] current utterance words

    def assert_finite(self) -> None:
        for name in ("f_t_coar", "f_t_fine", "f_a_coar", "f_a_fine", "f_t_fine_current"):
            if not torch.isfinite(getattr(self, name)).all():
                raise EncoderError(f"context feature {name} is not finite")


def emphasis_softmax(intensity: torch.Tensor) -> torch.Tensor:
    """Normalize one turn's word-level emphasis intensities to sum to 1."""
    if intensity.ndim != 1:
        raise EncoderError(f"intensity must be 1-D, got shape {tuple(intensity.shape)}")
    return torch.softmax(intensity, dim=0)


class SpeakerConditioner(nn.Module):
    """Bias-free projection added to a turn's vectors.

    Zero-initialized: speaker influence starts at nothing (keeping input
    geometry intact for the attention modules) and grows only where
    training finds it useful. A zero speaker vector contributes nothing
    at any point in training.
    """

    def __init__(self, d_speaker: int, d_target: int):
        super().__init__()
        self.proj = nn.Linear(d_speaker, d_target, bias=False)
        nn.init.zeros_(self.proj.weight)

    def forward(self, vectors: torch.Tensor, speaker: torch.Tensor) -> torch.Tensor:
        return vectors + self.proj(speaker)


class CoarseTextEncoder(nn.Module):
    """Recurrent encoder over history sentence vectors, concatenated with the
    current sentence vector and projected to the fusion dimension."""

    def __init__(
        self,
        d_sentence: int,
        d_speaker: int,
        hidden: int,
        layers: int,
        d_fuse: int,
        bidirectional: bool = True,
    ):
        super().__init__()
        self.speaker = SpeakerConditioner(d_speaker, d_sentence)
        self.gru = nn.GRU(d_sentence, hidden, num_layers=layers, bidirectional=bidirectional)
        dirs = 2 if bidirectional else 1
        self.out = nn.Linear(hidden * dirs + d_sentence, d_fuse)
        self.bidirectional = bidirectional

    def forward(
        self,
        history: torch.Tensor,
        current: torch.Tensor,
        speaker_history: torch.Tensor,
        speaker_current: torch.Tensor,
    ) -> torch.Tensor:
        """history: [n, d_sentence]; current: [d_sentence];
        speaker_history: [n, d_speaker]; speaker_current: [d_speaker]."""
        if history.shape[0] == 0:
            raise EncoderError("coarse text encoder requires at least one history turn")
        x = self.speaker(history, speaker_history)
        _, h_n = self.gru(x.unsqueeze(1))
        if self.bidirectional:
            state = torch.cat([h_n[-2, 0], h_n[-1, 0]])
        else:
            state = h_n[-1, 0]
        cur = self.speaker(current, speaker_current)
        return self.out(torch.cat([state, cur]))


class CoarseAudioEncoder(nn.Module):
    """Recurrent encoder over history sentence-level prosody vectors. There
    is no current-utterance audio to concatenate."""

    def __init__(
        self,
        d_sentence_audio: int,
        d_speaker: int,
        hidden: int,
        layers: int,
        d_fuse: int,
        bidirectional: bool = True,
    ):
        super().__init__()
        self.speaker = SpeakerConditioner(d_speaker, d_sentence_audio)
        self.gru = nn.GRU(d_sentence_audio, hidden, num_layers=layers, bidirectional=bidirectional)
        dirs = 2 if bidirectional else 1
        self.out = nn.Linear(hidden * dirs, d_fuse)
        self.bidirectional = bidirectional

    def forward(self, history: torch.Tensor, speaker_history: torch.Tensor) -> torch.Tensor:
        if history.shape[0] == 0:
            raise EncoderError("coarse audio encoder requires at least one history turn")
        x = self.speaker(history, speaker_history)
        _, h_n = self.gru(x.unsqueeze(1))
        if self.bidirectional:
            state = torch.cat([h_n[-2, 0], h_n[-1, 0]])
        else:
            state = h_n[-1, 0]
        return self.out(state)


class FineTextMemoryEncoder(nn.Module):
    """Memory-enhanced fine-grained text encoder.

    Each direction walks the history turn by turn: the turn's word matrix
    (plus the mean of the previous turn's enhanced words) is scaled by the
    softmax of that turn's emphasis intensities; the terminal enhanced matrix
    becomes the key/value memory for cross-attention from the current
    utterance's words. Both directions are concatenated and projected.

    With memory disabled, each direction instead attends over the plain
    concatenation of all history word rows.
    """

    def __init__(
        self,
        d_word_history: int,
        d_word_current: int,
        d_speaker: int,
        d_attn: int,
        heads: int,
        d_fuse: int,
        bidirectional: bool = True,
        memory: bool = True,
        tie_directions: bool = False,
    ):
        super().__init__()
        self.speaker_history = SpeakerConditioner(d_speaker, d_word_history)
        self.speaker_current = SpeakerConditioner(d_speaker, d_word_current)
        self.fwd_attn = MultiHeadAttention(d_word_current, d_word_history, d_attn, heads)
        self.bwd_attn = self.fwd_attn if tie_directions else MultiHeadAttention(
            d_word_current, d_word_history, d_attn, heads
        )
        dirs = 2 if bidirectional else 1
        self.out = nn.Linear(d_attn * dirs, d_fuse)
        self.bidirectional = bidirectional
        self.memory = memory

    def _validate(
        self, history_words: Sequence[torch.Tensor], history_intensities: Sequence[torch.Tensor]
    ) -> None:
        if len(history_words) == 0:
            raise EncoderError("fine text encoder requires at least one history turn")
        if len(history_intensities) != len(history_words):
            raise EncoderError(
                f"{len(history_intensities)} intensity vectors for {len(history_words)} turns"
            )
        for j, (mat, inten) in enumerate(zip(history_words, history_intensities)):
            if mat.shape[0] == 0:
                raise EncoderError(f"history turn {j} has no word rows")
            if inten.shape[0] != mat.shape[0]:
                raise EncoderError(
                    f"history turn {j}: {inten.shape[0]} intensities for {mat.shape[0]} words"
                )

    def _memory_pass(
        self, turns: list[torch.Tensor], intensities: list[torch.Tensor]
    ) -> tuple[torch.Tensor, list[torch.Tensor]]:
        carry = torch.zeros_like(turns[0][0])
        enhanced_turns = []
        enhanced = turns[0]
        for mat, inten in zip(turns, intensities):
            weights = emphasis_softmax(inten)
            enhanced = (mat + carry) * weights.unsqueeze(1)
            carry = enhanced.mean(dim=0)
            enhanced_turns.append(enhanced)
        return enhanced, enhanced_turns

    def forward(
        self,
        history_words: Sequence[torch.Tensor],
        history_intensities: Sequence[torch.Tensor],
        current_words: torch.Tensor,
        speaker_history: Sequence[torch.Tensor],
        speaker_current: torch.Tensor,
        return_details: bool = False,
    ):
        """history_words: per-turn [w_j, d_word_history]; history_intensities:
        per-turn [w_j]; current_words: [w, d_word_current]."""
        self._validate(history_words, history_intensities)
        conditioned = [
            self.speaker_history(mat, spk) for mat, spk in zip(history_words, speaker_history)
        ]
        intensities = [t.to(current_words.dtype) for t in history_intensities]
        query = self.speaker_current(current_words, speaker_current)

        details: dict = {}
        if self.memory:
            fwd_memory, fwd_enhanced = self._memory_pass(conditioned, intensities)
            details["fwd_enhanced"] = fwd_enhanced
        else:
            fwd_memory = torch.cat(conditioned, dim=0)
        fwd_out, fwd_w = self.fwd_attn(query, fwd_memory, fwd_memory)
        details["fwd_weights"] = fwd_w

        if self.bidirectional:
            if self.memory:
                bwd_memory, bwd_enhanced = self._memory_pass(
                    conditioned[::-1], intensities[::-1]
                )
                details["bwd_enhanced"] = bwd_enhanced
            else:
                bwd_memory = torch.cat(conditioned[::-1], dim=0)
            bwd_out, bwd_w = self.bwd_attn(query, bwd_memory, bwd_memory)
            details["bwd_weights"] = bwd_w
            details["direction_outputs"] = (fwd_out, bwd_out)
            result = self.out(torch.cat([fwd_out, bwd_out], dim=1))
        else:
            details["direction_outputs"] = (fwd_out, None)
            result = self.out(fwd_out)
        if return_details:
            return result, details
        return result


class FineAudioMemoryEncoder(nn.Module):
    """Memory-enhanced fine-grained audio encoder over per-turn frame
    matrices.

    Each direction accumulates: the current turn's frames query the previous
    accumulated frames (attention weights mix the *raw* previous rows), and
    the mixture is added to the current frames. The terminal accumulations of
    the two directions are stacked row-wise and projected; with a single
    history turn each direction degenerates to a pass-through of that turn.
    """

    def __init__(
        self,
        d_frame: int,
        d_speaker: int,
        d_attn: int,
        heads: int,
        d_fuse: int,
        bidirectional: bool = True,
        memory: bool = True,
        tie_directions: bool = False,
    ):
        super().__init__()
        self.speaker = SpeakerConditioner(d_speaker, d_frame)
        self.fwd_attn = PoolingAttention(d_frame, d_attn, heads)
        self.bwd_attn = self.fwd_attn if tie_directions else PoolingAttention(d_frame, d_attn, heads)
        self.out = nn.Linear(d_frame, d_fuse)
        self.bidirectional = bidirectional
        self.memory = memory

    def _memory_pass(
        self, turns: list[torch.Tensor], attn: PoolingAttention
    ) -> tuple[torch.Tensor, list[torch.Tensor], list[torch.Tensor]]:
        acc = turns[0]
        step_outputs = []
        step_weights = []
        for cur in turns[1:]:
            attended, weights = attn(cur, acc)
            step_outputs.append(attended)
            step_weights.append(weights)
            acc = attended + cur
        return acc, step_outputs, step_weights

    def forward(
        self,
        history_frames: Sequence[torch.Tensor],
        speaker_history: Sequence[torch.Tensor],
        return_details: bool = False,
    ):
        """history_frames: per-turn [f_j, d_frame]."""
        if len(history_frames) == 0:
            raise EncoderError("fine audio encoder requires at least one history turn")
        for j, mat in enumerate(history_frames):
            if mat.shape[0] == 0:
                raise EncoderError(f"history turn {j} has an empty frame matrix")
        conditioned = [
            self.speaker(mat, spk) for mat, spk in zip(history_frames, speaker_history)
        ]
        details: dict = {}
        if self.memory:
            fwd_terminal, fwd_steps, fwd_w = self._memory_pass(conditioned, self.fwd_attn)
            details.update(fwd_steps=fwd_steps, fwd_weights=fwd_w)
        else:
            memory_all = torch.cat(conditioned, dim=0)
            attended, w = self.fwd_attn(conditioned[-1], memory_all)
            fwd_terminal = attended + conditioned[-1]
            details.update(fwd_steps=[attended], fwd_weights=[w])

        if self.bidirectional:
            if self.memory:
                bwd_terminal, bwd_steps, bwd_w = self._memory_pass(
                    conditioned[::-1], self.bwd_attn
                )
            else:
                memory_all = torch.cat(conditioned[::-1], dim=0)
                attended, w = self.bwd_attn(conditioned[0], memory_all)
                bwd_terminal = attended + conditioned[0]
                bwd_steps, bwd_w = [attended], [w]
            details.update(bwd_steps=bwd_steps, bwd_weights=bwd_w)
            details["direction_outputs"] = (fwd_terminal, bwd_terminal)
            rows = torch.cat([fwd_terminal, bwd_terminal], dim=0)
        else:
            details["direction_outputs"] = (fwd_terminal, None)
            rows = fwd_terminal
        result = self.out(rows)
        if return_details:
            return result, details
        return result
