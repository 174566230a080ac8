"""Feature preparation for training and inference: per-turn embedding
caches, dialogue example construction with history truncation, and corpus
pitch/energy statistics."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .audio import load_wav
from .config import RunConfig
from .corpus import Conversation, CorpusError, Utterance
from .frontends import (
    EmbedderConfig,
    make_audio_embedder,
    make_text_embedder,
)
from .synthesizer import AcousticTargets, extract_targets


@dataclass
class TurnFeatures:
    """Everything the model needs to read one turn."""

    conversation_id: str
    turn_index: int
    speaker_id: str
    words: tuple[str, ...]
    phonemes: tuple[str, ...]
    word_phoneme_spans: tuple[tuple[int, int], ...]
    phoneme_durations: tuple[int, ...] | None
    sentence_text: torch.Tensor  # [d_sentence_text]
    words_history_role: torch.Tensor  # [w, d_word_history]
    words_current_role: torch.Tensor  # [w, d_word_current]
    sentence_audio: torch.Tensor | None  # [d_sentence_audio]
    frames: torch.Tensor | None  # [frames, d_frame_audio]
    intensity: torch.Tensor | None  # [w] floats in [0, 1]
    targets: AcousticTargets | None


@dataclass
class DialogueExample:
    """Predict the current turn's emphasis from the preceding history."""

    conversation_id: str
    turn_index: int
    history: list[TurnFeatures]
    current: TurnFeatures


def scan_speakers(conversations: list[Conversation]) -> tuple[str, ...]:
    return tuple(sorted({u.speaker_id for c in conversations for u in c.turns}))


def scan_phonemes(conversations: list[Conversation]) -> tuple[str, ...]:
    return tuple(sorted({p for c in conversations for u in c.turns for p in u.phonemes}))


class FeatureExtractor:
    """Computes and caches per-turn features for a corpus."""

    def __init__(self, config: RunConfig, corpus_root: str | Path | None = None):
        self.config = config
        dims = EmbedderConfig(
            d_sentence_text=config.d_sentence_text,
            d_word_history=config.d_word_history,
            d_word_current=config.d_word_current,
            d_frame_audio=config.d_frame_audio,
            d_sentence_audio=config.d_sentence_audio,
            d_speaker=config.d_speaker,
            seed=config.seed,
        )
        self.text = make_text_embedder(config.text_kind, dims)
        self.audio = make_audio_embedder(config.audio_kind, dims)
        self.corpus_root = Path(corpus_root) if corpus_root is not None else None
        self._cache: dict[tuple[str, int], TurnFeatures] = {}

    def waveform(self, utt: Utterance) -> np.ndarray | None:
        if utt.waveform is not None:
            return utt.waveform
        if utt.audio_path is None:
            return None
        base = self.corpus_root if self.corpus_root is not None else Path(".")
        return load_wav(base / utt.audio_path)

    def turn_features(self, conv: Conversation, utt: Utterance) -> TurnFeatures:
        key = (conv.conversation_id, utt.index)
        if key in self._cache:
            return self._cache[key]
        wave = self.waveform(utt)
        sentence_audio = frames = None
        targets = None
        if wave is not None:
            sentence_audio = torch.as_tensor(
                self.audio.sentence_embed(wave), dtype=torch.float32
            )
            frames = torch.as_tensor(self.audio.frame_embed(wave).values, dtype=torch.float32)
            if utt.phoneme_durations is not None:
                targets = extract_targets(wave, utt.phoneme_durations, n_mels=self.config.n_mels)
        intensity = None
        if utt.emphasis_intensity is not None:
            intensity = torch.tensor(utt.emphasis_intensity.as_floats(), dtype=torch.float32)
        features = TurnFeatures(
            conversation_id=conv.conversation_id,
            turn_index=utt.index,
            speaker_id=utt.speaker_id,
            words=utt.words,
            phonemes=utt.phonemes,
            word_phoneme_spans=utt.word_phoneme_spans,
            phoneme_durations=utt.phoneme_durations,
            sentence_text=torch.as_tensor(self.text.sentence_embed(utt.text), dtype=torch.float32),
            words_history_role=torch.as_tensor(
                self.text.word_embed(utt.words, "history").values, dtype=torch.float32
            ),
            words_current_role=torch.as_tensor(
                self.text.word_embed(utt.words, "current").values, dtype=torch.float32
            ),
            sentence_audio=sentence_audio,
            frames=frames,
            intensity=intensity,
            targets=targets,
        )
        self._cache[key] = features
        return features


def build_examples(
    conversations: list[Conversation],
    extractor: FeatureExtractor,
    context_length: int | None = None,
    require_intensity: bool = True,
    require_targets: bool = True,
) -> list[DialogueExample]:
    """One example per turn with non-empty history; histories keep the most
    recent ``context_length`` turns."""
    context_length = context_length if context_length is not None else extractor.config.context_length
    examples = []
    for conv in conversations:
        features = [extractor.turn_features(conv, utt) for utt in conv.turns]
        for n in range(2, len(conv.turns) + 1):
            current = features[n - 1]
            history = features[max(0, n - 1 - context_length) : n - 1]
            if require_intensity and current.intensity is None:
                raise CorpusError(
                    f"conversation {conv.conversation_id!r} turn {n}: training "
                    "requires aggregated emphasis intensities"
                )
            for h in history:
                if require_intensity and h.intensity is None:
                    raise CorpusError(
                        f"conversation {conv.conversation_id!r} turn {h.turn_index}: "
                        "history turn lacks emphasis intensities"
                    )
                if h.frames is None:
                    raise CorpusError(
                        f"conversation {conv.conversation_id!r} turn {h.turn_index}: "
                        "history turn lacks audio"
                    )
            if require_targets and current.targets is None:
                raise CorpusError(
                    f"conversation {conv.conversation_id!r} turn {n}: no acoustic "
                    "targets (audio or durations missing)"
                )
            examples.append(
                DialogueExample(
                    conversation_id=conv.conversation_id,
                    turn_index=n,
                    history=list(history),
                    current=current,
                )
            )
    return examples


def corpus_variance_stats(
    conversations: list[Conversation], extractor: FeatureExtractor
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Per-corpus (mean, std) for voiced pitch and frame energy."""
    pitches = []
    energies = []
    for conv in conversations:
        for utt in conv.turns:
            features = extractor.turn_features(conv, utt)
            if features.targets is None:
                continue
            voiced = features.targets.pitch[features.targets.pitch > 0]
            pitches.append(voiced)
            energies.append(features.targets.energy)
    if not energies:
        return (0.0, 1.0), (0.0, 1.0)
    pitch_all = np.concatenate(pitches) if pitches else np.zeros(0)
    energy_all = np.concatenate(energies)
    pitch_stats = (
        (float(pitch_all.mean()), float(pitch_all.std() + 1e-6)) if pitch_all.size else (0.0, 1.0)
    )
    energy_stats = (float(energy_all.mean()), float(energy_all.std() + 1e-6))
    return pitch_stats, energy_stats
