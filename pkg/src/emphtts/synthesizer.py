"""Miniature FastSpeech2-style acoustic model with an emphasis regulator.

The regulator injects each word's 64-dim emphasis hidden feature into that
word's phoneme encodings (following the word-phoneme alignment) together
with the current speaker's vector. The variance adaptor predicts
log-duration per phoneme and pitch/energy per frame in corpus z-score
units; duration/pitch/energy targets are teacher-forced during training.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch
from torch import nn

from . import SAMPLE_RATE
from .attention import SelfAttentionBlock, sinusoidal_positions
from .audio import (
    energy_track,
    f0_track,
    log_mel_spectrogram,
    reconstruct_from_log_mel,
)

N_VARIANCE_BINS = 64
Z_RANGE = 4.0
DURATION_RECONCILE_LIMIT = 2


class SynthesizerError(ValueError):
    """Invalid synthesizer input (unknown phoneme, shape mismatch)."""


@dataclass
class AcousticTargets:
    """Teacher-forcing targets: per-phoneme durations and per-frame
    pitch (Hz, 0 = unvoiced), energy (RMS), and log-mel matrix."""

    durations: np.ndarray
    pitch: np.ndarray
    energy: np.ndarray
    mel: np.ndarray

    def __post_init__(self) -> None:
        frames = int(np.sum(self.durations))
        for name in ("pitch", "energy", "mel"):
            arr = getattr(self, name)
            if arr.shape[0] != frames:
                raise SynthesizerError(
                    f"{name} has {arr.shape[0]} frames, durations sum to {frames}"
                )


@dataclass
class SynthOutput:
    mel: torch.Tensor  # [frames, n_mels]
    log_duration: torch.Tensor  # [phonemes]
    durations_used: torch.Tensor  # [phonemes] int
    pitch: torch.Tensor  # [frames] z-scored prediction
    energy: torch.Tensor  # [frames] z-scored prediction
    frame_hidden: torch.Tensor  # [frames, d_model]
    regulated: torch.Tensor  # [phonemes, d_model] encoder output after emphasis injection


def length_regulate(encoding: torch.Tensor, durations: torch.Tensor) -> torch.Tensor:
    """Repeat phoneme row i durations[i] times; output rows = sum(durations)."""
    if encoding.shape[0] != durations.shape[0]:
        raise SynthesizerError(
            f"{encoding.shape[0]} phoneme rows vs {durations.shape[0]} durations"
        )
    if torch.any(durations < 1):
        raise SynthesizerError("durations must be >= 1")
    return torch.repeat_interleave(encoding, durations, dim=0)


class PhonemeEncoder(nn.Module):
    """Embedding lookup over a closed phoneme inventory plus a small
    self-attention stack."""

    def __init__(self, inventory: Sequence[str], d_model: int, heads: int = 2, layers: int = 2):
        super().__init__()
        if len(set(inventory)) != len(inventory):
            raise ValueError("duplicate phonemes in inventory")
        self.inventory = tuple(inventory)
        self._index = {p: i for i, p in enumerate(self.inventory)}
        self.embedding = nn.Embedding(len(self.inventory), d_model)
        self.blocks = nn.ModuleList(SelfAttentionBlock(d_model, heads) for _ in range(layers))
        self.d_model = d_model

    def indices(self, phonemes: Sequence[str]) -> torch.Tensor:
        idx = []
        for p in phonemes:
            if p not in self._index:
                raise SynthesizerError(f"unknown phoneme {p!r}; not in inventory")
            idx.append(self._index[p])
        return torch.tensor(idx, dtype=torch.long)

    def forward(self, phonemes: Sequence[str]) -> torch.Tensor:
        if len(phonemes) == 0:
            raise SynthesizerError("cannot encode an empty phoneme sequence")
        x = self.embedding(self.indices(phonemes))
        x = x + sinusoidal_positions(x.shape[0], self.d_model, dtype=x.dtype)
        for block in self.blocks:
            x = block(x)
        return x


class EmphasisRegulator(nn.Module):
    """Add each word's projected emphasis hidden feature to that word's
    phoneme rows, plus the projected speaker vector everywhere. Projections
    are bias-free so zero inputs leave the encoding untouched."""

    def __init__(self, d_emphasis: int, d_speaker: int, d_model: int):
        super().__init__()
        self.emphasis_proj = nn.Linear(d_emphasis, d_model, bias=False)
        # standard init (unlike the zero-init context conditioners): this is
        # the path that keeps the speaker table trainable from step one
        self.speaker_proj = nn.Linear(d_speaker, d_model, bias=False)

    def forward(
        self,
        encoding: torch.Tensor,
        emphasis_hidden: torch.Tensor,
        word_phoneme_spans: Sequence[tuple[int, int]],
        speaker: torch.Tensor,
    ) -> torch.Tensor:
        """encoding: [p, d_model]; emphasis_hidden: [words, d_emphasis]."""
        if len(word_phoneme_spans) != emphasis_hidden.shape[0]:
            raise SynthesizerError(
                f"{emphasis_hidden.shape[0]} emphasis rows for "
                f"{len(word_phoneme_spans)} word spans"
            )
        cursor = 0
        for start, end in word_phoneme_spans:
            if start != cursor or end < start:
                raise SynthesizerError("word_phoneme_spans do not partition the phonemes")
            cursor = end
        if cursor != encoding.shape[0]:
            raise SynthesizerError(
                f"spans cover {cursor} phonemes, encoding has {encoding.shape[0]} rows"
            )
        offsets = self.emphasis_proj(emphasis_hidden)
        out = encoding + self.speaker_proj(speaker).unsqueeze(0)
        pieces = []
        for w, (start, end) in enumerate(word_phoneme_spans):
            pieces.append(out[start:end] + offsets[w])
        return torch.cat(pieces, dim=0) if pieces else out


class VariancePredictor(nn.Module):
    """Per-position scalar predictor (two-layer MLP)."""

    def __init__(self, d_model: int, d_hidden: int | None = None):
        super().__init__()
        d_hidden = d_hidden or d_model
        self.net = nn.Sequential(
            nn.Linear(d_model, d_hidden),
            nn.ReLU(),
            nn.LayerNorm(d_hidden),
            nn.Linear(d_hidden, 1),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.net(x).squeeze(-1)


class VarianceAdaptor(nn.Module):
    """Duration prediction + length regulation + frame-level pitch/energy
    prediction with quantized-embedding conditioning."""

    def __init__(
        self,
        d_model: int,
        pitch_stats: tuple[float, float] = (0.0, 1.0),
        energy_stats: tuple[float, float] = (0.0, 1.0),
        n_bins: int = N_VARIANCE_BINS,
    ):
        super().__init__()
        self.duration_predictor = VariancePredictor(d_model)
        self.pitch_predictor = VariancePredictor(d_model)
        self.energy_predictor = VariancePredictor(d_model)
        self.pitch_embedding = nn.Embedding(n_bins, d_model)
        self.energy_embedding = nn.Embedding(n_bins, d_model)
        self.n_bins = n_bins
        self.register_buffer("pitch_mean", torch.tensor(float(pitch_stats[0])))
        self.register_buffer("pitch_std", torch.tensor(max(float(pitch_stats[1]), 1e-6)))
        self.register_buffer("energy_mean", torch.tensor(float(energy_stats[0])))
        self.register_buffer("energy_std", torch.tensor(max(float(energy_stats[1]), 1e-6)))

    def z_pitch(self, pitch: torch.Tensor) -> torch.Tensor:
        return (pitch - self.pitch_mean) / self.pitch_std

    def z_energy(self, energy: torch.Tensor) -> torch.Tensor:
        return (energy - self.energy_mean) / self.energy_std

    def _bucket(self, z: torch.Tensor) -> torch.Tensor:
        scaled = (z.clamp(-Z_RANGE, Z_RANGE) + Z_RANGE) / (2 * Z_RANGE)
        return (scaled * (self.n_bins - 1)).round().long()

    def forward(
        self, encoding: torch.Tensor, targets: AcousticTargets | None = None
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor, torch.Tensor]:
        """Returns (frame_hidden, log_duration_pred, durations_used,
        pitch_pred_z, energy_pred_z)."""
        log_duration = self.duration_predictor(encoding)
        if targets is not None:
            durations = torch.as_tensor(targets.durations, dtype=torch.long)
        else:
            durations = torch.exp(log_duration).round().long().clamp(min=1)
        frames = length_regulate(encoding, durations)
        pitch_pred = self.pitch_predictor(frames)
        energy_pred = self.energy_predictor(frames)
        if targets is not None:
            pitch_used = self.z_pitch(torch.as_tensor(targets.pitch, dtype=frames.dtype))
            energy_used = self.z_energy(torch.as_tensor(targets.energy, dtype=frames.dtype))
        else:
            pitch_used = pitch_pred
            energy_used = energy_pred
        hidden = (
            frames
            + self.pitch_embedding(self._bucket(pitch_used))
            + self.energy_embedding(self._bucket(energy_used))
        )
        return hidden, log_duration, durations, pitch_pred, energy_pred


class MelDecoder(nn.Module):
    def __init__(self, d_model: int, n_mels: int = 80, heads: int = 2, layers: int = 2):
        super().__init__()
        self.blocks = nn.ModuleList(SelfAttentionBlock(d_model, heads) for _ in range(layers))
        self.out = nn.Linear(d_model, n_mels)
        self.d_model = d_model

    def forward(self, frame_hidden: torch.Tensor) -> torch.Tensor:
        x = frame_hidden + sinusoidal_positions(
            frame_hidden.shape[0], self.d_model, dtype=frame_hidden.dtype
        )
        for block in self.blocks:
            x = block(x)
        return self.out(x)


class AcousticModel(nn.Module):
    """Phoneme encoder -> emphasis regulator -> variance adaptor -> mel decoder."""

    def __init__(
        self,
        inventory: Sequence[str],
        d_model: int,
        d_speaker: int,
        d_emphasis: int = 64,
        n_mels: int = 80,
        heads: int = 2,
        encoder_layers: int = 2,
        decoder_layers: int = 2,
        pitch_stats: tuple[float, float] = (0.0, 1.0),
        energy_stats: tuple[float, float] = (0.0, 1.0),
    ):
        super().__init__()
        self.encoder = PhonemeEncoder(inventory, d_model, heads, encoder_layers)
        self.regulator = EmphasisRegulator(d_emphasis, d_speaker, d_model)
        self.adaptor = VarianceAdaptor(d_model, pitch_stats, energy_stats)
        self.decoder = MelDecoder(d_model, n_mels, heads, decoder_layers)

    def forward(
        self,
        phonemes: Sequence[str],
        word_phoneme_spans: Sequence[tuple[int, int]],
        emphasis_hidden: torch.Tensor,
        speaker: torch.Tensor,
        targets: AcousticTargets | None = None,
    ) -> SynthOutput:
        encoding = self.encoder(phonemes)
        regulated = self.regulator(encoding, emphasis_hidden, word_phoneme_spans, speaker)
        hidden, log_duration, durations, pitch, energy = self.adaptor(regulated, targets)
        mel = self.decoder(hidden)
        return SynthOutput(
            mel=mel,
            log_duration=log_duration,
            durations_used=durations,
            pitch=pitch,
            energy=energy,
            frame_hidden=hidden,
            regulated=regulated,
        )


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def tts_loss(
    output: SynthOutput,
    targets: AcousticTargets,
    adaptor: VarianceAdaptor,
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0),
) -> dict[str, torch.Tensor]:
    """Mel L1 plus MSE on log-duration and z-scored pitch/energy.

    Teacher-forced shapes are required: the output must have been produced
    with these targets.
    """
    dtype = output.mel.dtype
    mel_t = torch.as_tensor(targets.mel, dtype=dtype)
    if output.mel.shape != mel_t.shape:
        raise SynthesizerError(
            f"mel shape {tuple(output.mel.shape)} vs target {tuple(mel_t.shape)}"
        )
    dur_t = torch.as_tensor(targets.durations, dtype=dtype)
    if output.log_duration.shape != dur_t.shape:
        raise SynthesizerError("duration shape mismatch")
    mel_l1 = (output.mel - mel_t).abs().mean()
    duration_mse = ((output.log_duration - torch.log(dur_t)) ** 2).mean()
    pitch_mse = ((output.pitch - adaptor.z_pitch(torch.as_tensor(targets.pitch, dtype=dtype))) ** 2).mean()
    energy_mse = ((output.energy - adaptor.z_energy(torch.as_tensor(targets.energy, dtype=dtype))) ** 2).mean()
    w = weights
    total = w[0] * mel_l1 + w[1] * duration_mse + w[2] * pitch_mse + w[3] * energy_mse
    return {
        "mel_l1": mel_l1,
        "duration_mse": duration_mse,
        "pitch_mse": pitch_mse,
        "energy_mse": energy_mse,
        "total": total,
    }


def total_loss(
    tts_components: dict[str, torch.Tensor],
    emphasis_loss: torch.Tensor,
    lambda_emphasis: float = 1.0,
) -> torch.Tensor:
    return tts_components["total"] + lambda_emphasis * emphasis_loss


# ---------------------------------------------------------------------------
# Target extraction and audition
# ---------------------------------------------------------------------------


def extract_targets(
    waveform: np.ndarray,
    phoneme_durations: Sequence[int],
    sample_rate: int = SAMPLE_RATE,
    n_mels: int = 80,
) -> AcousticTargets:
    """Mel/F0/energy from audio with duration passthrough; the last phoneme
    is padded or trimmed by at most 2 frames to reconcile frame counts."""
    mel = log_mel_spectrogram(waveform, sample_rate, n_mels=n_mels)
    pitch = f0_track(waveform, sample_rate)
    energy = energy_track(waveform, sample_rate)
    durations = np.asarray(phoneme_durations, dtype=np.int64).copy()
    frames = mel.shape[0]
    diff = frames - int(durations.sum())
    if abs(diff) > DURATION_RECONCILE_LIMIT:
        raise SynthesizerError(
            f"durations sum to {durations.sum()} but audio has {frames} frames "
            f"(difference exceeds {DURATION_RECONCILE_LIMIT})"
        )
    durations[-1] += diff
    if durations[-1] < 1:
        raise SynthesizerError("duration reconciliation would empty the last phoneme")
    return AcousticTargets(durations=durations, pitch=pitch, energy=energy, mel=mel)


def reconstruct_waveform(mel: np.ndarray | torch.Tensor, n_iter: int = 32) -> np.ndarray:
    """Naive iterative phase reconstruction from a log mel matrix, for
    audition only."""
    if isinstance(mel, torch.Tensor):
        mel = mel.detach().cpu().numpy()
    return reconstruct_from_log_mel(mel, n_iter=n_iter)
