"""Deterministic toy dialogue corpus with a planted emphasis rule.

Each turn after the first repeats exactly one word from the previous turn,
and that repeated word is the emphasized one (full annotator agreement).
The repeated word is always the previous turn's emphasized word, so the
emphasized token cascades through a conversation and the history's
intensity labels point at exactly the token worth matching. Filler words
never overlap the previous turn, so a string matcher against the previous
turn recovers the emphasized word exactly. Audio is a seeded sinusoid
mixture whose amplitude doubles on emphasized words, making the planted
labels visible in energy as well as text.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from . import SAMPLE_RATE
from .audio import save_wav, shift_samples, window_samples
from .corpus import Conversation, IntensityVector, Utterance

VOCABULARY = (
    "time coffee river music garden stone yellow window cloud dream "
    "paper light ocean silver forest candle mirror planet bridge hollow "
    "autumn winter spring summer violet copper meadow shadow branch ember "
    "quiet laughter journey harbor lantern whisper thunder breeze marble velvet"
).split()

SPEAKERS = ("spk_a", "spk_b")
SPEAKER_F0 = {"spk_a": 220.0, "spk_b": 155.0}

BASE_AMPLITUDE = 0.18
EMPHASIS_GAIN = 2.0
ANNOTATORS = 6


def _stable_hash(key: str) -> int:
    return int.from_bytes(hashlib.blake2b(key.encode("utf-8"), digest_size=8).digest(), "big")


def _phoneme_duration(ch: str, emphasized: bool) -> int:
    base = 3 + _stable_hash(f"dur:{ch}") % 4
    return base + 2 if emphasized else base


def _phoneme_tone_hz(ch: str) -> float:
    return 600.0 + (_stable_hash(f"tone:{ch}") % 40) * 55.0


def synthesize_utterance_audio(utt: Utterance, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Sinusoid-mixture waveform whose frame count equals the duration sum."""
    if utt.phoneme_durations is None:
        raise ValueError("utterance needs phoneme_durations before audio synthesis")
    shift = shift_samples(sample_rate)
    tail = window_samples(sample_rate) - shift
    seg_lengths = [d * shift for d in utt.phoneme_durations]
    seg_lengths[-1] += tail

    emphasized = [False] * len(utt.phonemes)
    if utt.emphasis_intensity is not None:
        for w, (start, end) in enumerate(utt.word_phoneme_spans):
            if utt.emphasis_intensity.counts[w] * 2 > utt.emphasis_intensity.annotator_count:
                for p in range(start, end):
                    emphasized[p] = True

    f0 = SPEAKER_F0.get(utt.speaker_id, 180.0)
    total = sum(seg_lengths)
    t = np.arange(total) / sample_rate
    amp = np.empty(total)
    tone = np.empty(total)
    cursor = 0
    for p, (ch, length) in enumerate(zip(utt.phonemes, seg_lengths)):
        amp[cursor : cursor + length] = BASE_AMPLITUDE * (EMPHASIS_GAIN if emphasized[p] else 1.0)
        tone[cursor : cursor + length] = _phoneme_tone_hz(ch)
        cursor += length
    x = amp * (
        0.55 * np.sin(2 * np.pi * f0 * t)
        + 0.25 * np.sin(2 * np.pi * 2 * f0 * t)
        + 0.20 * np.sin(2 * np.pi * tone * t)
    )
    return x


def build_utterance(index: int, speaker_id: str, words: list[str], emphasized_word: int) -> Utterance:
    """Toy utterance with characters as phonemes, hash-derived durations,
    unanimous emphasis on one word, and synthesized audio attached."""
    phonemes: list[str] = []
    spans: list[tuple[int, int]] = []
    durations: list[int] = []
    for w, word in enumerate(words):
        start = len(phonemes)
        for ch in word:
            phonemes.append(ch)
            durations.append(_phoneme_duration(ch, emphasized=w == emphasized_word))
        spans.append((start, len(phonemes)))
    counts = tuple(ANNOTATORS if w == emphasized_word else 0 for w in range(len(words)))
    utt = Utterance(
        index=index,
        speaker_id=speaker_id,
        text=" ".join(words),
        words=tuple(words),
        phonemes=tuple(phonemes),
        word_phoneme_spans=tuple(spans),
        phoneme_durations=tuple(durations),
        emphasis_intensity=IntensityVector(counts=counts, annotator_count=ANNOTATORS),
    )
    utt.waveform = synthesize_utterance_audio(utt)
    return utt


def make_toy_corpus(
    num_conversations: int,
    turns_range: tuple[int, int] = (3, 6),
    seed: int = 0,
    audio_dir: str | Path | None = None,
    words_range: tuple[int, int] = (3, 6),
) -> list[Conversation]:
    """Generate planted-rule conversations; optionally write WAVs to audio_dir."""
    rng = np.random.default_rng(seed)
    conversations = []
    for c in range(num_conversations):
        cid = f"conv{c:03d}"
        n_turns = int(rng.integers(turns_range[0], turns_range[1] + 1))
        turns: list[Utterance] = []
        prev_words: list[str] = []
        prev_emphasized = -1
        for i in range(1, n_turns + 1):
            n_words = int(rng.integers(words_range[0], words_range[1] + 1))
            pool = [w for w in VOCABULARY if w not in prev_words]
            words = [str(w) for w in rng.choice(pool, size=n_words, replace=False)]
            emphasized = int(rng.integers(0, n_words))
            if i > 1:
                words[emphasized] = prev_words[prev_emphasized]
            turns.append(build_utterance(i, SPEAKERS[(i - 1) % 2], words, emphasized))
            prev_words = words
            prev_emphasized = emphasized
        conversations.append(Conversation(conversation_id=cid, turns=turns))

    if audio_dir is not None:
        audio_dir = Path(audio_dir)
        audio_dir.mkdir(parents=True, exist_ok=True)
        for conv in conversations:
            for utt in conv.turns:
                name = f"{conv.conversation_id}_turn{utt.index:02d}.wav"
                save_wav(audio_dir / name, utt.waveform)
                utt.audio_path = name
    return conversations
