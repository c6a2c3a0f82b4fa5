"""Objective evaluation: audio embeddings (builtin mel-statistics or
precomputed external vectors), Gaussian fitting, Fréchet audio distance,
and mel-spectrogram comparison figures."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensorio
from .audio import AudioConfig, DEFAULT_AUDIO, wav_to_mel

BUILTIN_EMBEDDER = "melstats"
PSD_TOLERANCE = 1e-8


@dataclass(frozen=True)
class EmbeddingSet:
    vectors: np.ndarray  # (n, d)
    embedder_id: str

    def __post_init__(self):
        v = np.asarray(self.vectors, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("embedding set must be a 2-D matrix")
        if not np.all(np.isfinite(v)):
            raise ValueError("embeddings contain non-finite values")
        object.__setattr__(self, "vectors", v)


@dataclass(frozen=True)
class GaussianStats:
    mean: np.ndarray
    cov: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.mean)


def melstats_vector(wav: np.ndarray, cfg: AudioConfig = DEFAULT_AUDIO) -> np.ndarray:
    """Per-band mel mean, std, and delta-mean: d = 3 * n_mels."""
    mel = wav_to_mel(wav, cfg).astype(np.float64)  # (T, n_mels)
    mean = mel.mean(axis=0)
    std = mel.std(axis=0)
    if mel.shape[0] >= 2:
        delta = np.abs(np.diff(mel, axis=0)).mean(axis=0)
    else:
        delta = np.zeros(cfg.n_mels)
    return np.concatenate([mean, std, delta])


def embed(
    clips: list[tuple[str, np.ndarray]],
    embedder: str = BUILTIN_EMBEDDER,
    external_path=None,
    cfg: AudioConfig = DEFAULT_AUDIO,
) -> EmbeddingSet:
    """Embed named clips.

    ``melstats`` computes the builtin statistics vector per clip; external
    mode looks clips up by name in a tensor container of precomputed rows.
    """
    if not clips:
        raise ValueError("empty audio set")
    if embedder == BUILTIN_EMBEDDER:
        rows = [melstats_vector(wav, cfg) for _, wav in clips]
    elif embedder == "external":
        if external_path is None:
            raise ValueError("external embedder needs a vector file")
        tensors, meta = tensorio.load_tensors(external_path)
        rows = []
        for name, _ in clips:
            if name not in tensors:
                raise KeyError(f"no external embedding for clip {name!r}")
            rows.append(np.asarray(tensors[name], dtype=np.float64).ravel())
        embedder = str(meta.get("embedder_id", "external"))
    else:
        raise ValueError(f"unknown embedder {embedder!r}")
    dims = {len(r) for r in rows}
    if len(dims) != 1:
        raise ValueError(f"embedding dimension mismatch across clips: {sorted(dims)}")
    return EmbeddingSet(np.stack(rows), embedder)


def save_embeddings(path, es: EmbeddingSet, names: list[str]) -> None:
    tensors = {name: es.vectors[i] for i, name in enumerate(names)}
    tensorio.save_tensors(path, tensors, {"kind": "embeddings", "embedder_id": es.embedder_id})


def fit_gaussian(es: EmbeddingSet) -> GaussianStats:
    """Sample mean and unbiased covariance; covariance symmetrized exactly."""
    n, d = es.vectors.shape
    if n < d + 1:
        raise ValueError(f"need at least d+1={d + 1} samples to fit covariance, got {n}")
    mean = es.vectors.mean(axis=0)
    cov = np.cov(es.vectors, rowvar=False, bias=False)
    cov = np.atleast_2d(cov)
    cov = (cov + cov.T) / 2.0
    return GaussianStats(mean=mean, cov=cov)


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    vals, vecs = np.linalg.eigh(mat)
    top = float(vals.max(initial=0.0))
    if vals.min(initial=0.0) < -PSD_TOLERANCE * max(1.0, top):
        raise ValueError("matrix is not PSD within tolerance")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    The cross term uses the eigendecomposition of the symmetrized product
    sqrt(S_a) S_b sqrt(S_a), whose eigenvalues equal those of S_a S_b.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    diff = a.mean - b.mean
    sq_a = _psd_sqrt(a.cov)
    inner = sq_a @ b.cov @ sq_a
    inner = (inner + inner.T) / 2.0
    vals = np.clip(np.linalg.eigvalsh(inner), 0.0, None)
    dist = float(diff @ diff + np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.sqrt(vals).sum())
    return max(dist, 0.0)


def frechet_from_sets(ref: EmbeddingSet, cand: EmbeddingSet) -> float:
    return frechet_distance(fit_gaussian(ref), fit_gaussian(cand))


def render_mel_figure(
    waveforms: list[np.ndarray],
    labels: list[str],
    output_path,
    cfg: AudioConfig = DEFAULT_AUDIO,
) -> Path:
    """Side-by-side log-mel heatmaps on a shared color scale, saved as PNG."""
    if not waveforms:
        raise ValueError("need at least one waveform")
    if len(labels) != len(waveforms):
        raise ValueError("one label per waveform")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    mels = [wav_to_mel(w, cfg) for w in waveforms]
    fig, axes = plt.subplots(
        1, len(mels), figsize=(4 * len(mels), 3), squeeze=False, dpi=100
    )
    for ax, mel, label in zip(axes[0], mels, labels):
        ax.imshow(
            mel.T, origin="lower", aspect="auto", vmin=-1.0, vmax=1.0,
            interpolation="nearest", cmap="magma",
        )
        ax.set_title(label)
        ax.set_xlabel("frame")
        ax.set_ylabel("mel bin")
    fig.tight_layout()
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(output_path)
    plt.close(fig)
    return output_path
