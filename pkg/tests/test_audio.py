"""DSP utilities: framing, F0, mel analysis, phase reconstruction."""

import numpy as np
import pytest

from emphtts import SAMPLE_RATE
from emphtts.audio import (
    AudioError,
    energy_track,
    f0_track,
    frame_count,
    load_wav,
    log_mel_spectrogram,
    reconstruct_from_log_mel,
    save_wav,
    shift_samples,
    window_samples,
)


def sine(freq, seconds=1.0, amp=0.3):
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    return amp * np.sin(2 * np.pi * freq * t)


def test_frame_count_one_second():
    assert frame_count(SAMPLE_RATE, window_samples(), shift_samples()) == 98


def test_frame_params_from_25_10_ms():
    assert window_samples() == int(SAMPLE_RATE * 0.025)
    assert shift_samples() == int(SAMPLE_RATE * 0.010)


def test_too_short_audio_rejected():
    with pytest.raises(AudioError):
        frame_count(100, window_samples(), shift_samples())


def test_f0_pure_tone():
    f0 = f0_track(sine(220.0))
    voiced = f0[f0 > 0]
    assert len(voiced) == len(f0)
    assert 215 <= np.median(voiced) <= 225


def test_f0_silence_unvoiced():
    f0 = f0_track(np.zeros(SAMPLE_RATE))
    assert np.all(f0 == 0.0)


def test_mel_and_energy_frame_counts_match():
    x = sine(330.0, seconds=0.5)
    mel = log_mel_spectrogram(x)
    energy = energy_track(x)
    assert mel.shape == (len(energy), 80)


def test_wav_round_trip(tmp_path):
    x = sine(440.0, seconds=0.2)
    path = tmp_path / "t.wav"
    save_wav(path, x)
    y = load_wav(path)
    assert len(y) == len(x)
    assert np.max(np.abs(x - y)) < 1e-3


def test_wav_rejects_wrong_rate(tmp_path):
    path = tmp_path / "t.wav"
    save_wav(path, sine(440.0, seconds=0.1), sample_rate=16000)
    with pytest.raises(AudioError, match="sample rate"):
        load_wav(path)


class TestReconstruction:
    def test_silence_mel_near_silent(self):
        mel = np.full((40, 80), np.log(1e-10))
        x = reconstruct_from_log_mel(mel, n_iter=4)
        assert np.sqrt(np.mean(x**2)) < 1e-3

    def test_output_length(self):
        mel = log_mel_spectrogram(sine(220.0, seconds=0.5))
        x = reconstruct_from_log_mel(mel, n_iter=2)
        expected = (mel.shape[0] - 1) * shift_samples() + window_samples()
        assert len(x) == expected

    def test_deterministic(self):
        mel = log_mel_spectrogram(sine(220.0, seconds=0.3))
        a = reconstruct_from_log_mel(mel, n_iter=3)
        b = reconstruct_from_log_mel(mel, n_iter=3)
        assert np.array_equal(a, b)

    def test_tone_survives_round_trip(self):
        x = sine(220.0, seconds=0.5)
        mel = log_mel_spectrogram(x)
        y = reconstruct_from_log_mel(mel, n_iter=16)
        f0 = f0_track(y)
        voiced = f0[f0 > 0]
        assert len(voiced) > 0
        assert 200 <= np.median(voiced) <= 240
