"""Audio plumbing: WAV IO, mel analysis, Griffin-Lim inversion, and the
additive sine renderer used for melody audio and the synthetic corpus.

Fixed format: 22,050 Hz mono, 80 mel bins, hop 256, FFT 1024. Mels are
log-power, affinely normalized to [-1, 1] for all model-facing code.
"""

from __future__ import annotations

import math
import struct
import wave
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

LOG_POWER_LO = -16.0
LOG_POWER_HI = 2.0
LOG_F0_LO = math.log(40.0)
LOG_F0_HI = math.log(1200.0)

HARMONIC_AMPS = tuple(1.0 / k for k in range(1, 7))


@dataclass(frozen=True)
class AudioConfig:
    sample_rate: int = 22050
    n_fft: int = 1024
    hop: int = 256
    n_mels: int = 80
    fmin: float = 0.0

    @property
    def fmax(self) -> float:
        return self.sample_rate / 2.0

    @property
    def frame_hop_ms(self) -> float:
        return self.hop / self.sample_rate * 1000.0


DEFAULT_AUDIO = AudioConfig()


def save_wav(path, wav: np.ndarray, sample_rate: int = 22050) -> None:
    data = np.clip(np.asarray(wav, dtype=np.float64), -1.0, 1.0)
    pcm = np.round(data * 32767.0).astype("<i2")
    with wave.open(str(path), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())


def load_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError(f"{path}: only 16-bit PCM is supported")
        sr = fh.getframerate()
        n = fh.getnframes()
        raw = fh.readframes(n)
        data = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
        if fh.getnchannels() > 1:
            data = data.reshape(-1, fh.getnchannels()).mean(axis=1)
    return data, sr


def wav_duration_seconds(path) -> float:
    with wave.open(str(path), "rb") as fh:
        return fh.getnframes() / fh.getframerate()


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=4)
def mel_filterbank(cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    """(n_mels, n_fft//2+1) triangular filters, peak 1."""
    n_bins = cfg.n_fft // 2 + 1
    freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    fb = np.zeros((cfg.n_mels, n_bins))
    for m in range(cfg.n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / max(mid - lo, 1e-9)
        down = (hi - freqs) / max(hi - mid, 1e-9)
        fb[m] = np.clip(np.minimum(up, down), 0.0, 1.0)
    return fb


@lru_cache(maxsize=4)
def _mel_pinv(cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    return np.linalg.pinv(mel_filterbank(cfg))


@lru_cache(maxsize=4)
def _window(n_fft: int) -> np.ndarray:
    return np.hanning(n_fft + 1)[:-1]


def n_frames_for(length: int, cfg: AudioConfig = DEFAULT_AUDIO) -> int:
    return max(1, int(math.ceil(length / cfg.hop)))


def stft(wav: np.ndarray, cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    """(n_fft//2+1, T) complex spectrum; T = ceil(len/hop)."""
    wav = np.asarray(wav, dtype=np.float64)
    t = n_frames_for(len(wav), cfg)
    half = cfg.n_fft // 2
    padded = np.pad(wav, (half, half + t * cfg.hop - len(wav)))
    win = _window(cfg.n_fft)
    scale = win.sum() / 2.0
    frames = np.stack([padded[i * cfg.hop : i * cfg.hop + cfg.n_fft] for i in range(t)])
    return np.fft.rfft(frames * win, axis=1).T / scale


def istft(spec: np.ndarray, cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    """Inverse of stft via windowed overlap-add; returns T*hop samples."""
    n_bins, t = spec.shape
    win = _window(cfg.n_fft)
    scale = win.sum() / 2.0
    frames = np.fft.irfft(spec.T * scale, n=cfg.n_fft, axis=1)
    half = cfg.n_fft // 2
    length = t * cfg.hop + cfg.n_fft
    acc = np.zeros(length)
    norm = np.zeros(length)
    for i in range(t):
        s = i * cfg.hop
        acc[s : s + cfg.n_fft] += frames[i] * win
        norm[s : s + cfg.n_fft] += win**2
    out = acc / np.maximum(norm, 1e-8)
    return out[half : half + t * cfg.hop]


def normalize_log_power(log_power: np.ndarray) -> np.ndarray:
    x = 2.0 * (log_power - LOG_POWER_LO) / (LOG_POWER_HI - LOG_POWER_LO) - 1.0
    return np.clip(x, -1.0, 1.0)


def denormalize_log_power(x: np.ndarray) -> np.ndarray:
    return (np.asarray(x, dtype=np.float64) + 1.0) / 2.0 * (LOG_POWER_HI - LOG_POWER_LO) + LOG_POWER_LO


def wav_to_mel(wav: np.ndarray, cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    """(T, n_mels) normalized log-power mel, float32."""
    power = np.abs(stft(wav, cfg)) ** 2
    mel = mel_filterbank(cfg) @ power
    log_mel = np.log(np.maximum(mel, math.exp(LOG_POWER_LO)))
    return normalize_log_power(log_mel).T.astype(np.float32)


def mel_to_wav(
    mel_norm: np.ndarray,
    cfg: AudioConfig = DEFAULT_AUDIO,
    n_iter: int = 32,
    peak: float = 0.95,
) -> np.ndarray:
    """Griffin-Lim inversion of a normalized mel; deterministic (zero-phase init).

    Peak-normalizes to ``peak`` unless the result is essentially silent.
    """
    mel_norm = np.asarray(mel_norm)
    if not np.all(np.isfinite(mel_norm)):
        raise ValueError("mel contains non-finite values")
    power = np.exp(denormalize_log_power(mel_norm.T))
    floor = math.exp(LOG_POWER_LO) * 1.001
    power = np.where(power <= floor, 0.0, power)
    lin_power = np.clip(_mel_pinv(cfg) @ power, 0.0, None)
    mag = np.sqrt(lin_power)
    spec = mag.astype(np.complex128)
    wav = istft(spec, cfg)
    for _ in range(n_iter):
        rebuilt = stft(wav, cfg)
        phase = rebuilt / np.maximum(np.abs(rebuilt), 1e-12)
        wav = istft(mag * phase, cfg)
    return peak_normalize(wav, peak)


def peak_normalize(wav: np.ndarray, peak: float = 0.95, silence_floor: float = 1e-4) -> np.ndarray:
    m = float(np.max(np.abs(wav))) if len(wav) else 0.0
    if m < silence_floor:
        return np.asarray(wav, dtype=np.float64)
    return np.asarray(wav, dtype=np.float64) * (peak / m)


def sine_render(
    f0_hz: np.ndarray,
    amp: np.ndarray,
    cfg: AudioConfig = DEFAULT_AUDIO,
    harmonic_amps: tuple[float, ...] = HARMONIC_AMPS,
) -> np.ndarray:
    """Additive harmonic synthesis from per-frame f0 (0 = silent frame).

    Phase is continuous across frames; output length is T*hop samples.
    """
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    amp = np.asarray(amp, dtype=np.float64)
    if f0_hz.shape != amp.shape:
        raise ValueError("f0 and amplitude envelopes must share a length")
    f_s = np.repeat(f0_hz, cfg.hop)
    a_s = np.repeat(amp, cfg.hop)
    phase = 2.0 * np.pi * np.cumsum(f_s) / cfg.sample_rate
    wav = np.zeros_like(f_s)
    nyquist = cfg.sample_rate / 2.0
    for k, ak in enumerate(harmonic_amps, start=1):
        audible = (f_s * k < nyquist) & (f_s > 0)
        wav += np.where(audible, ak * np.sin(k * phase), 0.0)
    wav *= a_s * np.where(f_s > 0, 1.0, 0.0)
    return wav


def harmonic_mel_template(
    f0_hz: np.ndarray,
    cfg: AudioConfig = DEFAULT_AUDIO,
    harmonic_amps: tuple[float, ...] = HARMONIC_AMPS,
) -> np.ndarray:
    """(T, n_mels) normalized mel of an ideal harmonic stack at f0.

    Used as an analytic conditioning feature: it localizes pitch in mel
    space exactly, leaving the decoder to learn gain and timbre.
    """
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    fb = mel_filterbank(cfg)
    n_bins = fb.shape[1]
    hz_per_bin = cfg.sample_rate / cfg.n_fft
    power = np.zeros((len(f0_hz), cfg.n_mels))
    for k, ak in enumerate(harmonic_amps, start=1):
        f = f0_hz * k
        ok = (f0_hz > 0) & (f < cfg.fmax)
        pos = np.clip(f / hz_per_bin, 0, n_bins - 1 - 1e-9)
        lo = pos.astype(int)
        frac = pos - lo
        # amplitude a contributes power (a/2)^2 on each side of the spectrum
        contrib = (ak / 2.0) ** 2 * 2.0
        weights = fb[:, lo] * (1 - frac) + fb[:, np.minimum(lo + 1, n_bins - 1)] * frac
        power += np.where(ok, contrib * weights, 0.0).T
    log_power = np.log(np.maximum(power, math.exp(LOG_POWER_LO)))
    return normalize_log_power(log_power).astype(np.float32)


def f0_to_model(f0_hz: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hz contour -> (normalized log-f0, voiced flag in {-1, +1})."""
    f0_hz = np.asarray(f0_hz, dtype=np.float64)
    voiced = f0_hz > 0
    safe = np.where(voiced, np.maximum(f0_hz, 1e-3), 1.0)
    norm = 2.0 * (np.log(safe) - LOG_F0_LO) / (LOG_F0_HI - LOG_F0_LO) - 1.0
    norm = np.where(voiced, np.clip(norm, -1.0, 1.0), 0.0)
    return norm.astype(np.float32), np.where(voiced, 1.0, -1.0).astype(np.float32)


def model_to_f0(norm: np.ndarray, voiced: np.ndarray) -> np.ndarray:
    """Inverse of f0_to_model; unvoiced frames come back as 0 Hz."""
    norm = np.clip(np.asarray(norm, dtype=np.float64), -1.0, 1.0)
    log_f0 = (norm + 1.0) / 2.0 * (LOG_F0_HI - LOG_F0_LO) + LOG_F0_LO
    hz = np.exp(log_f0)
    return np.where(np.asarray(voiced) > 0, hz, 0.0)
