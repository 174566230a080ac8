"""Acoustic model: encoder, emphasis regulator, variance adaptor, decoder,
losses, and target extraction."""

import numpy as np
import pytest
import torch

from emphtts import SAMPLE_RATE
from emphtts.synthesizer import (
    AcousticModel,
    AcousticTargets,
    EmphasisRegulator,
    MelDecoder,
    PhonemeEncoder,
    SynthesizerError,
    VarianceAdaptor,
    extract_targets,
    length_regulate,
    reconstruct_waveform,
    total_loss,
    tts_loss,
)
from emphtts.toy import make_toy_corpus

D_MODEL = 16
INVENTORY = tuple("abcdefgh")


def _encoder(seed=0):
    torch.manual_seed(seed)
    return PhonemeEncoder(INVENTORY, D_MODEL)


def _regulator(seed=0):
    torch.manual_seed(seed)
    return EmphasisRegulator(d_emphasis=8, d_speaker=8, d_model=D_MODEL)


class TestPhonemeEncoder:
    def test_single_phoneme_shape(self):
        assert _encoder()(["a"]).shape == (1, D_MODEL)

    def test_eval_deterministic(self):
        enc = _encoder()
        enc.eval()
        assert torch.equal(enc(["a", "b", "c"]), enc(["a", "b", "c"]))

    def test_positional_sensitivity(self):
        enc = _encoder()
        enc.eval()
        assert not torch.allclose(enc(["a", "b"]), enc(["b", "a"]).flip(0))

    def test_unknown_phoneme_names_symbol(self):
        with pytest.raises(SynthesizerError, match="'zz'"):
            _encoder()(["a", "zz"])

    def test_empty_rejected(self):
        with pytest.raises(SynthesizerError):
            _encoder()([])


class TestEmphasisRegulator:
    def test_zero_inputs_identity(self):
        reg = _regulator()
        enc = torch.randn(6, D_MODEL)
        out = reg(enc, torch.zeros(2, 8), [(0, 3), (3, 6)], torch.zeros(8))
        assert torch.equal(out, enc)

    def test_single_word_uniform_offset(self):
        reg = _regulator()
        enc = torch.randn(5, D_MODEL)
        h = torch.randn(1, 8)
        out = reg(enc, h, [(0, 5)], torch.zeros(8))
        delta = out - enc
        for row in delta[1:]:
            assert torch.allclose(row, delta[0])

    def test_per_word_offsets_differ(self):
        reg = _regulator()
        enc = torch.randn(6, D_MODEL)
        h = torch.randn(2, 8)
        out = reg(enc, h, [(0, 2), (2, 6)], torch.zeros(8))
        delta = out - enc
        # rows only match up to float32 rounding of (x + offset) - x
        assert torch.allclose(delta[0], delta[1], atol=1e-5)
        assert torch.allclose(delta[2], delta[5], atol=1e-5)
        assert not torch.allclose(delta[0], delta[2], atol=1e-3)

    def test_locality(self):
        """Perturbing one word's emphasis row changes only its span."""
        reg = _regulator()
        enc = torch.randn(7, D_MODEL)
        h = torch.randn(3, 8)
        spans = [(0, 2), (2, 5), (5, 7)]
        spk = torch.randn(8)
        base = reg(enc, h, spans, spk)
        h2 = h.clone()
        h2[1] += 1.0
        moved = reg(enc, h2, spans, spk)
        diff = (moved - base).abs().sum(dim=1)
        assert torch.all(diff[0:2] == 0)
        assert torch.all(diff[2:5] > 0)
        assert torch.all(diff[5:7] == 0)

    def test_span_mismatch_rejected(self):
        reg = _regulator()
        with pytest.raises(SynthesizerError):
            reg(torch.randn(4, D_MODEL), torch.randn(1, 8), [(0, 2), (2, 4)], torch.zeros(8))


class TestLengthRegulator:
    def test_repeat_rows(self):
        x = torch.arange(2.0).unsqueeze(1).repeat(1, 3)
        out = length_regulate(x, torch.tensor([2, 3]))
        assert out.shape == (5, 3)
        assert torch.all(out[:2] == 0)
        assert torch.all(out[2:] == 1)

    def test_conservation_random(self):
        gen = np.random.default_rng(1)
        for _ in range(100):
            n = int(gen.integers(1, 12))
            durations = torch.tensor(gen.integers(1, 9, size=n))
            x = torch.randn(n, 4)
            assert length_regulate(x, durations).shape[0] == int(durations.sum())

    def test_zero_duration_rejected(self):
        with pytest.raises(SynthesizerError):
            length_regulate(torch.randn(2, 3), torch.tensor([1, 0]))


class TestVarianceAdaptor:
    def test_zero_weights_duration_one(self):
        torch.manual_seed(0)
        adaptor = VarianceAdaptor(D_MODEL)
        with torch.no_grad():
            for p in adaptor.duration_predictor.parameters():
                p.zero_()
        _, log_d, durations, _, _ = adaptor(torch.randn(3, D_MODEL))
        assert torch.all(log_d == 0)
        assert torch.all(durations == 1)

    def test_teacher_forced_frames(self):
        torch.manual_seed(0)
        adaptor = VarianceAdaptor(D_MODEL)
        durations = np.array([2, 3])
        targets = AcousticTargets(
            durations=durations,
            pitch=np.zeros(5),
            energy=np.zeros(5),
            mel=np.zeros((5, 80)),
        )
        hidden, _, used, pitch, energy = adaptor(torch.randn(2, D_MODEL), targets)
        assert hidden.shape == (5, D_MODEL)
        assert torch.equal(used, torch.tensor([2, 3]))
        assert pitch.shape == energy.shape == (5,)

    def test_inference_duration_clamped(self):
        torch.manual_seed(1)
        adaptor = VarianceAdaptor(D_MODEL)
        with torch.no_grad():
            for p in adaptor.duration_predictor.parameters():
                p.zero_()
            adaptor.duration_predictor.net[-1].bias.fill_(-3.0)  # exp(-3) rounds to 0
        _, _, durations, _, _ = adaptor(torch.randn(4, D_MODEL))
        assert torch.all(durations == 1)


class TestMelDecoder:
    def test_shape_and_finite(self):
        torch.manual_seed(0)
        dec = MelDecoder(D_MODEL, n_mels=80)
        out = dec(torch.randn(5, D_MODEL))
        assert out.shape == (5, 80)
        assert torch.isfinite(out).all()

    def test_eval_deterministic(self):
        torch.manual_seed(0)
        dec = MelDecoder(D_MODEL)
        dec.eval()
        x = torch.randn(4, D_MODEL)
        assert torch.equal(dec(x), dec(x))


class TestLosses:
    def _setup(self):
        torch.manual_seed(0)
        model = AcousticModel(INVENTORY, D_MODEL, d_speaker=8, d_emphasis=8, n_mels=80)
        phonemes = ["a", "b", "c"]
        spans = [(0, 1), (1, 3)]
        durations = np.array([2, 2, 3])
        frames = int(durations.sum())
        targets = AcousticTargets(
            durations=durations,
            pitch=np.full(frames, 200.0),
            energy=np.full(frames, 0.1),
            mel=np.zeros((frames, 80)),
        )
        out = model(phonemes, spans, torch.randn(2, 8), torch.randn(8), targets)
        return model, out, targets

    def test_perfect_prediction_zero_loss(self):
        model, out, targets = self._setup()
        perfect = type(out)(
            mel=torch.as_tensor(targets.mel, dtype=torch.float32),
            log_duration=torch.log(torch.as_tensor(targets.durations, dtype=torch.float32)),
            durations_used=out.durations_used,
            pitch=model.adaptor.z_pitch(torch.as_tensor(targets.pitch, dtype=torch.float32)),
            energy=model.adaptor.z_energy(torch.as_tensor(targets.energy, dtype=torch.float32)),
            frame_hidden=out.frame_hidden,
            regulated=out.regulated,
        )
        comps = tts_loss(perfect, targets, model.adaptor)
        for name in ("mel_l1", "duration_mse", "pitch_mse", "energy_mse", "total"):
            assert comps[name].item() == pytest.approx(0.0, abs=1e-10)

    def test_mel_constant_offset(self):
        model, out, targets = self._setup()
        shifted = type(out)(
            mel=torch.as_tensor(targets.mel, dtype=torch.float32) + 1.0,
            log_duration=torch.log(torch.as_tensor(targets.durations, dtype=torch.float32)),
            durations_used=out.durations_used,
            pitch=model.adaptor.z_pitch(torch.as_tensor(targets.pitch, dtype=torch.float32)),
            energy=model.adaptor.z_energy(torch.as_tensor(targets.energy, dtype=torch.float32)),
            frame_hidden=out.frame_hidden,
            regulated=out.regulated,
        )
        comps = tts_loss(shifted, targets, model.adaptor)
        assert comps["mel_l1"].item() == pytest.approx(1.0, abs=1e-6)

    def test_total_is_sum_with_unit_weights(self):
        model, out, targets = self._setup()
        comps = tts_loss(out, targets, model.adaptor)
        expected = (
            comps["mel_l1"] + comps["duration_mse"] + comps["pitch_mse"] + comps["energy_mse"]
        )
        assert comps["total"].item() == pytest.approx(expected.item(), rel=1e-6)

    def test_total_loss_lambda(self):
        model, out, targets = self._setup()
        comps = tts_loss(out, targets, model.adaptor)
        emp = torch.tensor(float(np.log(2.0)))
        assert total_loss(comps, emp, 0.0).item() == pytest.approx(comps["total"].item())
        zero = {k: torch.tensor(0.0) for k in comps}
        assert total_loss(zero, emp, 1.0).item() == pytest.approx(float(np.log(2.0)))

    def test_shape_mismatch_rejected(self):
        model, out, targets = self._setup()
        bad = AcousticTargets(
            durations=targets.durations,
            pitch=targets.pitch,
            energy=targets.energy,
            mel=np.zeros((int(targets.durations.sum()), 40)),
        )
        with pytest.raises(SynthesizerError):
            tts_loss(out, bad, model.adaptor)


class TestExtractTargets:
    def test_pure_tone_f0(self):
        t = np.arange(SAMPLE_RATE) / SAMPLE_RATE
        x = 0.3 * np.sin(2 * np.pi * 220.0 * t)
        targets = extract_targets(x, [49, 49])
        voiced = targets.pitch[targets.pitch > 0]
        assert 215 <= np.median(voiced) <= 225

    def test_silence_unvoiced(self):
        x = np.zeros(SAMPLE_RATE)
        targets = extract_targets(x, [50, 48])
        assert np.all(targets.pitch == 0)

    def test_frame_counts_match(self):
        conv = make_toy_corpus(1, seed=3)[0]
        utt = conv.turns[0]
        targets = extract_targets(utt.waveform, utt.phoneme_durations)
        assert targets.mel.shape[0] == len(targets.energy) == len(targets.pitch)
        assert int(targets.durations.sum()) == targets.mel.shape[0]

    def test_reconcile_limit(self):
        x = np.zeros(SAMPLE_RATE)  # 98 frames
        with pytest.raises(SynthesizerError, match="difference exceeds"):
            extract_targets(x, [40, 40])  # off by 18


class TestReconstruction:
    def test_end_to_end_waveform(self):
        torch.manual_seed(0)
        model = AcousticModel(INVENTORY, D_MODEL, d_speaker=8, d_emphasis=8, n_mels=80)
        model.eval()
        out = model(["a", "b"], [(0, 2)], torch.zeros(1, 8), torch.zeros(8))
        wave = reconstruct_waveform(out.mel, n_iter=2)
        assert np.all(np.isfinite(wave))
