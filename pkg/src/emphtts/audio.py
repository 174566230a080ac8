"""Waveform I/O and DSP: framing, mel analysis, F0 tracking, and iterative
phase reconstruction for audition.

All analysis uses a 25 ms window and 10 ms shift at 22,050 Hz unless
overridden. Frame count is floor((samples - window) / shift) + 1.
"""

from __future__ import annotations

import io
import wave
from pathlib import Path

import numpy as np

from . import SAMPLE_RATE

WINDOW_MS = 25.0
SHIFT_MS = 10.0
N_FFT = 1024
LOG_FLOOR = 1e-10


class AudioError(ValueError):
    """Unusable audio input (wrong rate, channels, or too short)."""


def window_samples(sample_rate: int = SAMPLE_RATE, window_ms: float = WINDOW_MS) -> int:
    return int(sample_rate * window_ms / 1000.0)


def shift_samples(sample_rate: int = SAMPLE_RATE, shift_ms: float = SHIFT_MS) -> int:
    return int(sample_rate * shift_ms / 1000.0)


def frame_count(n_samples: int, window: int, shift: int) -> int:
    if n_samples < window:
        raise AudioError(f"audio has {n_samples} samples, shorter than one {window}-sample window")
    return (n_samples - window) // shift + 1


# ---------------------------------------------------------------------------
# WAV I/O (16-bit mono PCM)
# ---------------------------------------------------------------------------


def save_wav(path: str | Path, waveform: np.ndarray, sample_rate: int = SAMPLE_RATE) -> None:
    data = wav_bytes(waveform, sample_rate)
    Path(path).write_bytes(data)


def wav_bytes(waveform: np.ndarray, sample_rate: int = SAMPLE_RATE) -> bytes:
    x = np.asarray(waveform, dtype=np.float64)
    if x.ndim != 1:
        raise AudioError(f"expected mono waveform, got shape {x.shape}")
    pcm = np.clip(np.round(x * 32767.0), -32768, 32767).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())
    return buf.getvalue()


def load_wav(path: str | Path, expect_rate: int = SAMPLE_RATE) -> np.ndarray:
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise AudioError(f"{path}: expected mono audio, got {wf.getnchannels()} channels")
        if wf.getframerate() != expect_rate:
            raise AudioError(
                f"{path}: sample rate {wf.getframerate()}, expected {expect_rate}"
            )
        if wf.getsampwidth() != 2:
            raise AudioError(f"{path}: expected 16-bit PCM, got {wf.getsampwidth() * 8}-bit")
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0


# ---------------------------------------------------------------------------
# Framing and per-frame features
# ---------------------------------------------------------------------------


def frame_signal(x: np.ndarray, window: int, shift: int) -> np.ndarray:
    """Slice x into overlapping frames, shape (n_frames, window)."""
    x = np.asarray(x, dtype=np.float64)
    n = frame_count(len(x), window, shift)
    idx = np.arange(window)[None, :] + shift * np.arange(n)[:, None]
    return x[idx]


def frame_rms(frames: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(frames**2, axis=1))


def frame_f0(frame: np.ndarray, sample_rate: int, fmin: float = 50.0, fmax: float = 500.0) -> float:
    """Autocorrelation pitch for one frame; 0.0 means unvoiced."""
    x = frame - frame.mean()
    energy = float(np.dot(x, x))
    if energy < 1e-10:
        return 0.0
    ac = np.correlate(x, x, mode="full")[len(x) - 1 :]
    lag_min = int(sample_rate / fmax)
    lag_max = min(int(sample_rate / fmin), len(ac) - 1)
    if lag_min >= lag_max:
        return 0.0
    seg = ac[lag_min : lag_max + 1]
    peak = int(np.argmax(seg)) + lag_min
    if ac[peak] / ac[0] < 0.3:
        return 0.0
    # parabolic refinement of the peak lag
    if 1 <= peak < len(ac) - 1:
        a, b, c = ac[peak - 1], ac[peak], ac[peak + 1]
        denom = a - 2 * b + c
        offset = 0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0
        lag = peak + float(np.clip(offset, -0.5, 0.5))
    else:
        lag = float(peak)
    return sample_rate / lag


def f0_track(
    x: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    window: int | None = None,
    shift: int | None = None,
) -> np.ndarray:
    window = window or window_samples(sample_rate)
    shift = shift or shift_samples(sample_rate)
    frames = frame_signal(x, window, shift)
    return np.array([frame_f0(f, sample_rate) for f in frames])


def energy_track(
    x: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    window: int | None = None,
    shift: int | None = None,
) -> np.ndarray:
    window = window or window_samples(sample_rate)
    shift = shift or shift_samples(sample_rate)
    return frame_rms(frame_signal(x, window, shift))


# ---------------------------------------------------------------------------
# Mel analysis
# ---------------------------------------------------------------------------


def _hz_to_mel(f: np.ndarray | float) -> np.ndarray | float:
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m: np.ndarray | float) -> np.ndarray | float:
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    sample_rate: int = SAMPLE_RATE,
    n_fft: int = N_FFT,
    n_mels: int = 80,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> np.ndarray:
    """Triangular mel filterbank over rfft bins, shape (n_mels, n_fft//2 + 1)."""
    fmax = fmax if fmax is not None else sample_rate / 2.0
    mel_points = np.linspace(_hz_to_mel(fmin), _hz_to_mel(fmax), n_mels + 2)
    hz_points = np.asarray(_mel_to_hz(mel_points))
    bins = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    fb = np.zeros((n_mels, len(bins)))
    for m in range(n_mels):
        left, center, right = hz_points[m], hz_points[m + 1], hz_points[m + 2]
        up = (bins - left) / max(center - left, 1e-9)
        down = (right - bins) / max(right - center, 1e-9)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def stft_power(
    x: np.ndarray,
    window: int | None = None,
    shift: int | None = None,
    n_fft: int = N_FFT,
) -> np.ndarray:
    """Hann-windowed power spectrogram, shape (n_frames, n_fft//2 + 1)."""
    window = window or window_samples()
    shift = shift or shift_samples()
    frames = frame_signal(x, window, shift) * np.hanning(window)[None, :]
    spec = np.fft.rfft(frames, n=n_fft, axis=1)
    return np.abs(spec) ** 2


def log_mel_spectrogram(
    x: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    n_mels: int = 80,
    window: int | None = None,
    shift: int | None = None,
    n_fft: int = N_FFT,
) -> np.ndarray:
    """Natural-log mel power spectrogram, shape (n_frames, n_mels).

    Floor is ln(LOG_FLOOR); an all-minimum matrix corresponds to silence.
    """
    power = stft_power(x, window=window, shift=shift, n_fft=n_fft)
    fb = mel_filterbank(sample_rate, n_fft, n_mels)
    return np.log(power @ fb.T + LOG_FLOOR)


# ---------------------------------------------------------------------------
# Iterative phase reconstruction (audition only; no neural vocoder)
# ---------------------------------------------------------------------------


def _overlap_add(frames: np.ndarray, window: int, shift: int) -> np.ndarray:
    n_frames = frames.shape[0]
    length = (n_frames - 1) * shift + window
    win = np.hanning(window)
    out = np.zeros(length)
    norm = np.zeros(length)
    for t in range(n_frames):
        out[t * shift : t * shift + window] += frames[t] * win
        norm[t * shift : t * shift + window] += win**2
    return out / np.maximum(norm, 1e-8)


def _stft_complex(x: np.ndarray, window: int, shift: int, n_fft: int) -> np.ndarray:
    frames = frame_signal(x, window, shift) * np.hanning(window)[None, :]
    return np.fft.rfft(frames, n=n_fft, axis=1)


def reconstruct_from_log_mel(
    log_mel: np.ndarray,
    sample_rate: int = SAMPLE_RATE,
    window: int | None = None,
    shift: int | None = None,
    n_fft: int = N_FFT,
    n_iter: int = 32,
) -> np.ndarray:
    """Griffin-Lim-style reconstruction from a log mel spectrogram.

    Deterministic: the phase estimate starts at zero. Output length is
    (frames - 1) * shift + window samples.
    """
    window = window or window_samples(sample_rate)
    shift = shift or shift_samples(sample_rate)
    n_mels = log_mel.shape[1]
    fb = mel_filterbank(sample_rate, n_fft, n_mels)
    mel_power = np.maximum(np.exp(np.asarray(log_mel, dtype=np.float64)) - LOG_FLOOR, 0.0)
    lin_power = np.clip(mel_power @ np.linalg.pinv(fb.T), 0.0, None)
    magnitude = np.sqrt(lin_power)

    spec = magnitude.astype(np.complex128)
    x = np.zeros((log_mel.shape[0] - 1) * shift + window)
    for _ in range(n_iter):
        frames = np.fft.irfft(spec, n=n_fft, axis=1)[:, :window]
        x = _overlap_add(frames, window, shift)
        rebuilt = _stft_complex(x, window, shift, n_fft)
        phase = rebuilt / np.maximum(np.abs(rebuilt), 1e-12)
        spec = magnitude * phase
    return x
