"""Toy feature extractors: determinism, shapes, analytic feature checks."""

import numpy as np
import pytest
import torch

from emphtts import SAMPLE_RATE
from emphtts.frontends import (
    EmbedderConfig,
    FrontendError,
    DspAudioEmbedder,
    HashTextEmbedder,
    SpeakerTable,
    hash_vector,
    make_audio_embedder,
    make_text_embedder,
    paper_dims,
)
from emphtts.toy import make_toy_corpus


@pytest.fixture(scope="module")
def text_embedder():
    return HashTextEmbedder(EmbedderConfig(seed=11))


@pytest.fixture(scope="module")
def audio_embedder():
    return DspAudioEmbedder(EmbedderConfig(seed=11))


def tone(freq=220.0, seconds=0.5, amp=0.3):
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return amp * np.sin(2 * np.pi * freq * t)


class TestSentenceText:
    def test_deterministic(self, text_embedder):
        a = text_embedder.sentence_embed("hello out there")
        b = text_embedder.sentence_embed("hello out there")
        assert np.array_equal(a, b)

    def test_unit_norm(self, text_embedder):
        v = text_embedder.sentence_embed("one two three four")
        assert abs(np.linalg.norm(v) - 1.0) < 1e-6

    def test_single_word_change_differs(self, text_embedder):
        a = text_embedder.sentence_embed("the river was cold")
        b = text_embedder.sentence_embed("the river was warm")
        assert not np.allclose(a, b)

    def test_empty_text_rejected(self, text_embedder):
        with pytest.raises(FrontendError):
            text_embedder.sentence_embed("   ")


class TestWordText:
    def test_shape_current_role(self, text_embedder):
        m = text_embedder.word_embed(("a", "b", "c", "d", "e"), role="current")
        assert m.values.shape == (5, 16)
        assert m.axes == ("word", "dim")

    def test_paper_dims_per_role(self):
        emb = HashTextEmbedder(paper_dims())
        hist = emb.word_embed(("x", "y"), role="history")
        cur = emb.word_embed(("x", "y"), role="current")
        assert hist.dim == 768
        assert cur.dim == 1024

    def test_row_depends_on_token_and_position(self, text_embedder):
        cfg = text_embedder.config
        m = text_embedder.word_embed(("left", "right"), role="history")
        expected_row0 = hash_vector("word:left", 16, cfg.seed) + 0.25 * hash_vector(
            "pos:0", 16, cfg.seed
        )
        assert np.allclose(m.values[0], expected_row0)
        swapped = text_embedder.word_embed(("right", "left"), role="history")
        assert not np.allclose(m.values[0], swapped.values[0])

    def test_repeated_token_distinct_rows(self, text_embedder):
        m = text_embedder.word_embed(("echo", "echo"), role="history")
        assert not np.allclose(m.values[0], m.values[1])

    def test_no_words_rejected(self, text_embedder):
        with pytest.raises(FrontendError):
            text_embedder.word_embed((), role="current")


class TestSentenceAudio:
    def test_silence_finite_zero_energy(self, audio_embedder):
        feats = audio_embedder.summary_features(np.zeros(SAMPLE_RATE // 2))
        assert np.all(np.isfinite(feats))
        assert feats[0] == 0.0  # rms
        v = audio_embedder.sentence_embed(np.zeros(SAMPLE_RATE // 2))
        assert np.all(np.isfinite(v))

    def test_deterministic(self, audio_embedder):
        x = tone()
        assert np.array_equal(audio_embedder.sentence_embed(x), audio_embedder.sentence_embed(x))

    def test_double_amplitude_shifts_log_power_by_ln4(self, audio_embedder):
        x = tone(amp=0.2)
        base = audio_embedder.summary_features(x)
        loud = audio_embedder.summary_features(2.0 * x)
        assert loud[1] - base[1] == pytest.approx(np.log(4.0), abs=1e-9)

    def test_short_audio_rejected(self, audio_embedder):
        with pytest.raises(FrontendError):
            audio_embedder.sentence_embed(np.zeros(100))


class TestFrameAudio:
    def test_one_second_is_98_frames(self, audio_embedder):
        m = audio_embedder.frame_embed(tone(seconds=1.0))
        assert m.values.shape == (98, 16)

    def test_zero_audio_zero_energy_column(self, audio_embedder):
        feats = audio_embedder.frame_features(np.zeros(SAMPLE_RATE))
        assert np.all(feats[:, -1] == 0.0)

    def test_finite_on_toy_audio(self, audio_embedder):
        conv = make_toy_corpus(1, seed=9)[0]
        m = audio_embedder.frame_embed(conv.turns[0].waveform)
        assert np.all(np.isfinite(m.values))


class TestSpeakerTable:
    def test_distinct_rows_at_init(self):
        table = SpeakerTable(["a", "b"], d_speaker=16, seed=0)
        va = table("a").detach().numpy()
        vb = table("b").detach().numpy()
        assert not np.allclose(va, vb)

    def test_stable_lookup(self):
        table = SpeakerTable(["a", "b"], d_speaker=8, seed=1)
        assert torch.equal(table("a"), table("a"))

    def test_size_matches_registrations(self):
        table = SpeakerTable(["a", "b", "c"], d_speaker=4, seed=0)
        assert len(table) == 3
        assert table.table.weight.shape == (3, 4)

    def test_unknown_speaker_rejected(self):
        table = SpeakerTable(["a"], d_speaker=4, seed=0)
        with pytest.raises(FrontendError, match="unknown speaker"):
            table("zz")


class TestRegistry:
    def test_known_kinds(self):
        cfg = EmbedderConfig()
        assert isinstance(make_text_embedder("toy-hash", cfg), HashTextEmbedder)
        assert isinstance(make_audio_embedder("toy-dsp", cfg), DspAudioEmbedder)

    def test_unknown_kind_lists_registered(self):
        with pytest.raises(FrontendError, match="toy-hash"):
            make_text_embedder("xlnet", EmbedderConfig())


def test_no_nan_inf_property():
    """Embedder outputs stay finite across a random toy corpus."""
    cfg = EmbedderConfig(seed=3)
    text = HashTextEmbedder(cfg)
    audio = DspAudioEmbedder(cfg)
    for conv in make_toy_corpus(3, seed=13):
        for utt in conv.turns:
            assert np.all(np.isfinite(text.sentence_embed(utt.text)))
            for role in ("history", "current"):
                assert np.all(np.isfinite(text.word_embed(utt.words, role).values))
            assert np.all(np.isfinite(audio.sentence_embed(utt.waveform)))
            assert np.all(np.isfinite(audio.frame_embed(utt.waveform).values))
