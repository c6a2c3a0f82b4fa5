"""Shared fixtures and independent test oracles."""

from __future__ import annotations

import numpy as np
import pytest
import torch


def track_f0_autocorr(
    wav: np.ndarray,
    sample_rate: int = 22050,
    hop: int = 256,
    window: int = 2048,
    fmin: float = 60.0,
    fmax: float = 1000.0,
) -> np.ndarray:
    """Frame-level f0 via normalized autocorrelation (0 where unvoiced).

    Independent of the synthesis chain under test: straight time-domain
    period estimation with parabolic interpolation, preferring the shortest
    strong lag to avoid octave-down errors.
    """
    wav = np.asarray(wav, dtype=np.float64)
    n_frames = int(np.ceil(len(wav) / hop))
    half = window // 2
    padded = np.pad(wav, (half, half + window))
    lag_min = int(sample_rate / fmax)
    lag_max = int(sample_rate / fmin)
    out = np.zeros(n_frames)
    for i in range(n_frames):
        seg = padded[i * hop : i * hop + window]
        seg = seg - seg.mean()
        power = float(seg @ seg)
        if power < 1e-6:
            continue
        ac = np.correlate(seg, seg, mode="full")[window - 1 :]
        ac = ac / ac[0]
        search = ac[lag_min : lag_max + 1]
        if len(search) == 0:
            continue
        best = float(search.max())
        if best < 0.4:
            continue
        # shortest lag nearly as good as the best peak
        candidates = np.flatnonzero(search >= 0.95 * best)
        lag = lag_min + _local_peak(search, int(candidates[0]))
        if lag <= 0:
            continue
        num = lag + _parabolic_offset(ac, lag)
        out[i] = sample_rate / num
    return out


def _local_peak(search: np.ndarray, idx: int) -> int:
    while idx + 1 < len(search) and search[idx + 1] > search[idx]:
        idx += 1
    while idx - 1 >= 0 and search[idx - 1] > search[idx]:
        idx -= 1
    return idx


def _parabolic_offset(ac: np.ndarray, lag: int) -> float:
    if lag <= 0 or lag + 1 >= len(ac):
        return 0.0
    a, b, c = ac[lag - 1], ac[lag], ac[lag + 1]
    denom = a - 2 * b + c
    if abs(denom) < 1e-12:
        return 0.0
    return 0.5 * (a - c) / denom


def fft_peak_frequency(wav: np.ndarray, sample_rate: int = 22050) -> float:
    """Dominant frequency of a clip by zero-padded FFT peak with parabolic
    interpolation; an oracle for sine-synthesis checks."""
    wav = np.asarray(wav, dtype=np.float64)
    n = max(len(wav), 1 << 16)
    windowed = wav * np.hanning(len(wav))
    spec = np.abs(np.fft.rfft(windowed, n=n))
    spec[0] = 0.0
    k = int(np.argmax(spec))
    if 0 < k < len(spec) - 1:
        a, b, c = np.log(spec[k - 1] + 1e-12), np.log(spec[k] + 1e-12), np.log(spec[k + 1] + 1e-12)
        denom = a - 2 * b + c
        k = k + (0.5 * (a - c) / denom if abs(denom) > 1e-12 else 0.0)
    return k * sample_rate / n


def finite_difference_check(
    params: list[torch.nn.Parameter],
    loss_fn,
    n_coords: int = 5,
    h: float = 1e-5,
    rel_tol: float = 1e-3,
    seed: int = 0,
) -> list[float]:
    """Compare autograd gradients against central finite differences.

    ``loss_fn`` must be a deterministic closure over the (double-precision)
    parameters. Returns the relative errors; asserts each within rel_tol.
    """
    for p in params:
        if p.grad is not None:
            p.grad = None
    loss = loss_fn()
    loss.backward()
    rng = np.random.default_rng(seed)
    sized = [p for p in params if p.numel() > 0]
    errors = []
    for _ in range(n_coords):
        p = sized[int(rng.integers(len(sized)))]
        flat = int(rng.integers(p.numel()))
        analytic = float(p.grad.reshape(-1)[flat])
        with torch.no_grad():
            orig = float(p.reshape(-1)[flat])
            p.reshape(-1)[flat] = orig + h
            up = float(loss_fn())
            p.reshape(-1)[flat] = orig - h
            down = float(loss_fn())
            p.reshape(-1)[flat] = orig
        fd = (up - down) / (2 * h)
        scale = max(abs(analytic), abs(fd), 1e-8)
        err = abs(analytic - fd) / scale
        errors.append(err)
        assert err < rel_tol, f"gradient mismatch: autograd={analytic:g} fd={fd:g} rel_err={err:g}"
    return errors


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A small deterministic corpus shared across tests."""
    from cisynth.corpus import generate_synthetic_corpus, load_manifest

    root = tmp_path_factory.mktemp("corpus_small")
    manifest_path = generate_synthetic_corpus(202, 8, root, phrase_patterns=((4, 3), (5, 4)))
    return load_manifest(manifest_path)
