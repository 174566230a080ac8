"""Pluggable text/audio feature extractors with deterministic toy
implementations, so the full system runs without pretrained models.

The shipping extractors are seeded-hash (text) and DSP summary (audio)
stand-ins registered under "toy-hash" / "toy-dsp"; real backends can be
registered under their own names without touching the callers.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from . import SAMPLE_RATE
from .audio import (
    AudioError,
    f0_track,
    frame_rms,
    frame_signal,
    log_mel_spectrogram,
    shift_samples,
    window_samples,
)
from .corpus import Utterance

LOG_ENERGY_FLOOR = -50.0
FRAME_MEL_BANDS = 16

SUMMARY_FEATURES = ("rms", "log_power", "f0_mean", "f0_std", "spectral_centroid")


class FrontendError(ValueError):
    """Invalid input to a feature extractor."""


@dataclass(frozen=True)
class EmbedderConfig:
    """Dimensions for every extractor role; toy default is 16 everywhere."""

    d_sentence_text: int = 16
    d_word_history: int = 16
    d_word_current: int = 16
    d_frame_audio: int = 16
    d_sentence_audio: int = 16
    d_speaker: int = 16
    seed: int = 0

    def __post_init__(self) -> None:
        for name in (
            "d_sentence_text",
            "d_word_history",
            "d_word_current",
            "d_frame_audio",
            "d_sentence_audio",
            "d_speaker",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


def paper_dims(seed: int = 0) -> EmbedderConfig:
    """Dimension preset used by the full-scale system."""
    return EmbedderConfig(
        d_sentence_text=512,
        d_word_history=768,
        d_word_current=1024,
        d_frame_audio=768,
        d_sentence_audio=768,
        d_speaker=768,
        seed=seed,
    )


@dataclass
class FeatureMatrix:
    """Real matrix with named axes, e.g. ("word", "dim")."""

    axes: tuple[str, str]
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise FrontendError(f"feature matrix must be 2-D, got shape {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise FrontendError("feature matrix contains NaN or Inf")

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __len__(self) -> int:
        return self.values.shape[0]


def _hash_rng(key: str, seed: int) -> np.random.Generator:
    digest = hashlib.blake2b(f"{seed}:{key}".encode("utf-8"), digest_size=8).digest()
    return np.random.default_rng(int.from_bytes(digest, "big"))


def hash_vector(key: str, dim: int, seed: int) -> np.ndarray:
    """Unit-norm pseudo-random vector, a pure function of (key, dim, seed)."""
    v = _hash_rng(key, seed).standard_normal(dim)
    return v / np.linalg.norm(v)


class HashTextEmbedder:
    """Seeded feature-hash text features. Sentence vectors are unit-norm
    hashes of the token multiset; word rows are position-tagged token hashes
    (the token hash itself is shared across roles so that the same token is
    recognizable between history and current views)."""

    kind = "toy-hash"

    def __init__(self, config: EmbedderConfig):
        self.config = config

    def sentence_embed(self, text: str) -> np.ndarray:
        tokens = text.split()
        if not tokens:
            raise FrontendError("cannot embed empty text")
        d = self.config.d_sentence_text
        acc = np.zeros(d)
        for tok in tokens:
            acc += hash_vector(f"sent-token:{tok}", d, self.config.seed)
        norm = np.linalg.norm(acc)
        if norm < 1e-12:
            acc = hash_vector("sent-token:<degenerate>", d, self.config.seed)
            norm = 1.0
        return acc / norm

    def word_embed(self, words: tuple[str, ...] | list[str], role: str) -> FeatureMatrix:
        if role == "history":
            d = self.config.d_word_history
        elif role == "current":
            d = self.config.d_word_current
        else:
            raise FrontendError(f"unknown word-embedding role {role!r}")
        if not words:
            raise FrontendError("cannot embed an utterance with no words")
        rows = np.stack(
            [
                hash_vector(f"word:{tok}", d, self.config.seed)
                + 0.25 * hash_vector(f"pos:{i}", d, self.config.seed)
                for i, tok in enumerate(words)
            ]
        )
        return FeatureMatrix(axes=("word", "dim"), values=rows)


class DspAudioEmbedder:
    """Summary-statistic audio features projected to the configured dims.

    Sentence features: RMS, log mean power (exact, so doubling the amplitude
    shifts it by ln 4), autocorrelation F0 mean/std, spectral centroid.
    Frame features: mel band log energies, F0, RMS per 25 ms / 10 ms frame.
    """

    kind = "toy-dsp"

    def __init__(self, config: EmbedderConfig, sample_rate: int = SAMPLE_RATE):
        self.config = config
        self.sample_rate = sample_rate
        self.window = window_samples(sample_rate)
        self.shift = shift_samples(sample_rate)
        n_summary = len(SUMMARY_FEATURES)
        self._sentence_proj = np.stack(
            [
                hash_vector(f"audio-sent-proj:{i}", config.d_sentence_audio, config.seed)
                for i in range(n_summary)
            ]
        )
        n_frame_feats = FRAME_MEL_BANDS + 2
        self._frame_proj = np.stack(
            [
                hash_vector(f"audio-frame-proj:{i}", config.d_frame_audio, config.seed)
                for i in range(n_frame_feats)
            ]
        )

    def _check(self, waveform: np.ndarray) -> np.ndarray:
        x = np.asarray(waveform, dtype=np.float64)
        if x.ndim != 1:
            raise FrontendError(f"expected mono waveform, got shape {x.shape}")
        if len(x) < self.window:
            raise FrontendError(
                f"waveform of {len(x)} samples is shorter than one {self.window}-sample window"
            )
        return x

    def summary_features(self, waveform: np.ndarray) -> np.ndarray:
        x = self._check(waveform)
        power = float(np.mean(x**2))
        rms = float(np.sqrt(power))
        log_power = float(np.log(power)) if power > 0 else LOG_ENERGY_FLOOR
        f0 = f0_track(x, self.sample_rate, self.window, self.shift)
        voiced = f0[f0 > 0]
        f0_mean = float(voiced.mean()) if len(voiced) else 0.0
        f0_std = float(voiced.std()) if len(voiced) else 0.0
        spec = np.abs(np.fft.rfft(x))
        freqs = np.fft.rfftfreq(len(x), d=1.0 / self.sample_rate)
        total = spec.sum()
        centroid = float((freqs * spec).sum() / total) if total > 0 else 0.0
        return np.array([rms, log_power, f0_mean, f0_std, centroid])

    def sentence_embed(self, waveform: np.ndarray) -> np.ndarray:
        return self.summary_features(waveform) @ self._sentence_proj

    def frame_features(self, waveform: np.ndarray) -> np.ndarray:
        """Raw per-frame features [mel bands..., f0, rms], one row per frame."""
        x = self._check(waveform)
        mel = log_mel_spectrogram(
            x, self.sample_rate, n_mels=FRAME_MEL_BANDS, window=self.window, shift=self.shift
        )
        f0 = f0_track(x, self.sample_rate, self.window, self.shift)
        rms = frame_rms(frame_signal(x, self.window, self.shift))
        return np.column_stack([mel, f0, rms])

    def frame_embed(self, waveform: np.ndarray) -> FeatureMatrix:
        values = self.frame_features(waveform) @ self._frame_proj
        return FeatureMatrix(axes=("frame", "dim"), values=values)


class SpeakerTable(nn.Module):
    """Learned lookup over a closed speaker set."""

    def __init__(self, speakers: list[str] | tuple[str, ...], d_speaker: int, seed: int = 0):
        super().__init__()
        if len(set(speakers)) != len(speakers):
            raise ValueError("duplicate speaker ids")
        self.speakers = tuple(speakers)
        self._index = {s: i for i, s in enumerate(self.speakers)}
        gen = torch.Generator().manual_seed(seed)
        weight = torch.randn(len(self.speakers), d_speaker, generator=gen)
        self.table = nn.Embedding(len(self.speakers), d_speaker, _weight=weight)

    def index_of(self, speaker_id: str) -> int:
        try:
            return self._index[speaker_id]
        except KeyError:
            raise FrontendError(
                f"unknown speaker {speaker_id!r}; registered: {list(self.speakers)}"
            ) from None

    def forward(self, speaker_id: str) -> torch.Tensor:
        idx = torch.tensor(self.index_of(speaker_id))
        return self.table(idx)

    def __len__(self) -> int:
        return len(self.speakers)


TEXT_EMBEDDERS = {"toy-hash": HashTextEmbedder}
AUDIO_EMBEDDERS = {"toy-dsp": DspAudioEmbedder}


def make_text_embedder(kind: str, config: EmbedderConfig) -> HashTextEmbedder:
    try:
        return TEXT_EMBEDDERS[kind](config)
    except KeyError:
        raise FrontendError(
            f"unknown text frontend {kind!r}; registered: {sorted(TEXT_EMBEDDERS)}"
        ) from None


def make_audio_embedder(kind: str, config: EmbedderConfig) -> DspAudioEmbedder:
    try:
        return AUDIO_EMBEDDERS[kind](config)
    except KeyError:
        raise FrontendError(
            f"unknown audio frontend {kind!r}; registered: {sorted(AUDIO_EMBEDDERS)}"
        ) from None


def sentence_text_embed(embedder: HashTextEmbedder, utterance: Utterance) -> np.ndarray:
    return embedder.sentence_embed(utterance.text)


def word_text_embed(embedder: HashTextEmbedder, utterance: Utterance, role: str) -> FeatureMatrix:
    return embedder.word_embed(utterance.words, role)
