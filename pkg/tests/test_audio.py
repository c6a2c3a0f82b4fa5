import math

import numpy as np
import pytest

from conftest import fft_peak_frequency, track_f0_autocorr
from cisynth.audio import (
    DEFAULT_AUDIO,
    f0_to_model,
    harmonic_mel_template,
    load_wav,
    mel_filterbank,
    mel_to_wav,
    model_to_f0,
    peak_normalize,
    save_wav,
    sine_render,
    wav_to_mel,
)
from cisynth import tensorio


class TestWavIO:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        wav = rng.uniform(-0.8, 0.8, size=4096)
        path = tmp_path / "x.wav"
        save_wav(path, wav, 22050)
        back, sr = load_wav(path)
        assert sr == 22050
        assert np.max(np.abs(back - wav)) < 1.0 / 32000

    def test_save_is_deterministic(self, tmp_path):
        wav = np.sin(np.linspace(0, 100, 2048))
        save_wav(tmp_path / "a.wav", wav)
        save_wav(tmp_path / "b.wav", wav)
        assert (tmp_path / "a.wav").read_bytes() == (tmp_path / "b.wav").read_bytes()


class TestMel:
    def test_shape_matches_frames(self):
        t = 37
        wav = np.zeros(t * DEFAULT_AUDIO.hop)
        mel = wav_to_mel(wav)
        assert mel.shape == (t, 80)

    def test_pure_tone_lands_in_matching_bin(self):
        cfg = DEFAULT_AUDIO
        n = 64 * cfg.hop
        t = np.arange(n) / cfg.sample_rate
        wav = 0.5 * np.sin(2 * np.pi * 440.0 * t)
        mel = wav_to_mel(wav, cfg)
        hot = int(np.argmax(mel.mean(axis=0)))
        fb = mel_filterbank(cfg)
        freqs = np.linspace(0, cfg.sample_rate / 2, fb.shape[1])
        center = freqs[int(np.argmax(fb[hot]))]
        assert abs(center - 440.0) / 440.0 < 0.15

    def test_filterbank_columns_cover_band(self):
        fb = mel_filterbank()
        assert fb.shape == (80, 513)
        assert np.all(fb >= 0)
        # every filter carries mass; every bin above DC inside the band is covered
        assert np.all(fb.max(axis=1) > 0.5)
        assert np.all(fb.sum(axis=0)[1:-1] > 0)


class TestGriffinLim:
    def test_tone_reconstruction_frequency(self):
        cfg = DEFAULT_AUDIO
        t_frames = 48
        f0 = np.full(t_frames, 440.0)
        wav = sine_render(f0, np.full(t_frames, 0.8), cfg, harmonic_amps=(1.0,))
        mel = wav_to_mel(wav, cfg)
        rebuilt = mel_to_wav(mel, cfg, n_iter=32)
        peak = fft_peak_frequency(rebuilt[cfg.hop * 8 : -cfg.hop * 8], cfg.sample_rate)
        assert abs(peak - 440.0) / 440.0 < 0.05

    def test_silent_mel_gives_silence(self):
        mel = np.full((20, 80), -1.0, dtype=np.float32)
        wav = mel_to_wav(mel)
        assert np.sqrt(np.mean(wav**2)) < 1e-3

    def test_output_length_within_one_frame(self):
        cfg = DEFAULT_AUDIO
        t = 33
        mel = np.full((t, 80), -1.0, dtype=np.float32)
        mel[:, 20] = 0.2
        wav = mel_to_wav(mel, cfg)
        assert abs(len(wav) - t * cfg.hop) <= cfg.hop

    def test_nonfinite_mel_rejected(self):
        mel = np.zeros((4, 80), dtype=np.float32)
        mel[0, 0] = np.nan
        with pytest.raises(ValueError):
            mel_to_wav(mel)


class TestSineRender:
    def test_frequency_accuracy(self):
        cfg = DEFAULT_AUDIO
        f0 = np.full(40, 261.63)
        wav = sine_render(f0, np.full(40, 0.7), cfg)
        peak = fft_peak_frequency(wav, cfg.sample_rate)
        assert abs(peak - 261.63) / 261.63 < 0.01

    def test_silence_where_unvoiced(self):
        cfg = DEFAULT_AUDIO
        f0 = np.concatenate([np.full(10, 220.0), np.zeros(10)])
        wav = sine_render(f0, np.full(20, 0.8), cfg)
        head = wav[: 10 * cfg.hop]
        tail = wav[10 * cfg.hop :]
        assert np.max(np.abs(tail)) == 0.0
        assert np.max(np.abs(head)) > 0.1

    def test_length(self):
        wav = sine_render(np.full(17, 200.0), np.full(17, 0.5))
        assert len(wav) == 17 * DEFAULT_AUDIO.hop

    def test_tracker_oracle_agrees(self):
        cfg = DEFAULT_AUDIO
        f0 = np.full(60, 330.0)
        wav = sine_render(f0, np.full(60, 0.8), cfg)
        tracked = track_f0_autocorr(wav, cfg.sample_rate, cfg.hop)
        voiced = tracked[10:-10]
        assert np.all(voiced > 0)
        assert np.max(np.abs(voiced - 330.0)) / 330.0 < 0.01


class TestF0Model:
    def test_roundtrip(self):
        f0 = np.array([0.0, 220.0, 440.0, 0.0, 880.0])
        norm, voiced = f0_to_model(f0)
        back = model_to_f0(norm, voiced)
        np.testing.assert_allclose(back[f0 > 0], f0[f0 > 0], rtol=1e-6)
        assert np.all(back[f0 == 0] == 0)

    def test_voiced_flags(self):
        _, voiced = f0_to_model(np.array([0.0, 100.0]))
        assert voiced.tolist() == [-1.0, 1.0]


class TestHarmonicTemplate:
    def test_peak_tracks_f0(self):
        cfg = DEFAULT_AUDIO
        tpl_low = harmonic_mel_template(np.full(4, 220.0), cfg)
        tpl_high = harmonic_mel_template(np.full(4, 440.0), cfg)
        assert int(np.argmax(tpl_high[0])) > int(np.argmax(tpl_low[0]))

    def test_unvoiced_is_floor(self):
        tpl = harmonic_mel_template(np.zeros(3))
        assert np.all(tpl == -1.0)


class TestPeakNormalize:
    def test_scales_to_target(self):
        wav = np.array([0.1, -0.2, 0.05])
        out = peak_normalize(wav, 0.95)
        assert np.max(np.abs(out)) == pytest.approx(0.95)

    def test_silence_untouched(self):
        wav = np.zeros(16)
        assert np.max(np.abs(peak_normalize(wav))) == 0.0


class TestTensorContainer:
    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        tensors = {
            "a": rng.normal(size=(3, 4)).astype(np.float32),
            "b": rng.integers(0, 10, size=(7,)).astype(np.int64),
            "c": rng.normal(size=(2, 2, 2)),
        }
        path = tmp_path / "t.bin"
        tensorio.save_tensors(path, tensors, {"purpose": "test"})
        back, meta = tensorio.load_tensors(path)
        assert meta["purpose"] == "test"
        for k, v in tensors.items():
            assert back[k].dtype == v.dtype
            np.testing.assert_array_equal(back[k], v)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" * 4)
        with pytest.raises(tensorio.TensorContainerError):
            tensorio.load_tensors(path)
