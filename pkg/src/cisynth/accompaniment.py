"""Accompaniment stack: a residual-vector-quantized mel codec, an
autoregressive token LM conditioned on text-prompt and melody tokens, and
the final mixer.

The codec runs in the mel domain at toy scale: a closed-form linear
encoder/decoder pair (least-squares optimal) with k-means-trained
codebooks. Code 0 of every stage is frozen to the zero vector so nearest-
codeword selection can never increase the residual energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict, field

import numpy as np
import torch
from torch import nn

from . import tensorio
from .errors import TrainingDiverged, VocabularyError
from .seq2seq import sinusoidal_positions

PROMPT_WORDS = (
    "songci", "guzheng", "classical", "slow", "fast",
    "male", "female", "bright", "dark", "soft",
)


@dataclass(frozen=True)
class RvqConfig:
    stages: int = 2
    codebook_size: int = 64
    latent_dim: int = 16
    n_mels: int = 80


class RvqCodec:
    """Linear frame codec with residual vector quantization."""

    def __init__(self, config: RvqConfig):
        self.config = config
        self.mean = np.zeros(config.n_mels)
        self.encoder = np.zeros((config.n_mels, config.latent_dim))
        self.decoder = np.zeros((config.latent_dim, config.n_mels))
        self.codebooks = np.zeros((config.stages, config.codebook_size, config.latent_dim))
        self.trained = False

    def encode_latent(self, frames: np.ndarray) -> np.ndarray:
        return (np.asarray(frames, dtype=np.float64) - self.mean) @ self.encoder

    def decode_latent(self, latent: np.ndarray) -> np.ndarray:
        return latent @ self.decoder + self.mean


def _nearest_codes(residual: np.ndarray, codebook: np.ndarray) -> np.ndarray:
    d2 = ((residual[:, None, :] - codebook[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)


def rvq_encode(codec: RvqCodec, frames: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Quantize mel frames; returns (codes (T, stages), energy (T, stages+1)).

    energy[:, 0] is the initial latent energy, energy[:, s] the residual
    after stage s; non-increasing by construction (code 0 is the zero vector).
    """
    if not codec.trained:
        raise RuntimeError("codec has not been trained")
    latent = codec.encode_latent(frames)
    t = latent.shape[0]
    cfg = codec.config
    codes = np.zeros((t, cfg.stages), dtype=np.int64)
    energy = np.zeros((t, cfg.stages + 1))
    residual = latent.copy()
    energy[:, 0] = (residual**2).sum(-1)
    for s in range(cfg.stages):
        idx = _nearest_codes(residual, codec.codebooks[s])
        codes[:, s] = idx
        residual = residual - codec.codebooks[s][idx]
        energy[:, s + 1] = (residual**2).sum(-1)
    return codes, energy


def rvq_decode(codec: RvqCodec, codes: np.ndarray) -> np.ndarray:
    """Sum indexed codewords per frame, then the linear decoder head."""
    if not codec.trained:
        raise RuntimeError("codec has not been trained")
    codes = np.asarray(codes)
    cfg = codec.config
    if codes.ndim != 2 or codes.shape[1] != cfg.stages:
        raise ValueError(f"codes must be (frames, {cfg.stages})")
    if codes.min() < 0 or codes.max() >= cfg.codebook_size:
        raise ValueError("code index out of codebook bounds")
    latent = np.zeros((codes.shape[0], cfg.latent_dim))
    for s in range(cfg.stages):
        latent += codec.codebooks[s][codes[:, s]]
    return codec.decode_latent(latent)


def train_codec(
    frames: np.ndarray,
    config: RvqConfig = RvqConfig(),
    epochs: int = 20,
    seed: int = 0,
) -> tuple[RvqCodec, list[float]]:
    """Fit the linear pair in closed form, then k-means codebook epochs.

    Returns (codec, per-epoch mean reconstruction error on the training set).
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < config.codebook_size:
        raise ValueError("need at least codebook_size training frames")
    codec = RvqCodec(config)
    codec.mean = frames.mean(axis=0)
    centered = frames - codec.mean
    # principal subspace: least-squares optimal linear autoencoder
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    basis = vt[: config.latent_dim]
    codec.encoder = basis.T
    codec.decoder = basis
    latent = centered @ codec.encoder

    rng = np.random.default_rng(seed)
    residual = latent.copy()
    for s in range(config.stages):
        picks = rng.choice(len(residual), size=config.codebook_size - 1, replace=False)
        codec.codebooks[s, 0] = 0.0
        codec.codebooks[s, 1:] = residual[picks]
        idx = _nearest_codes(residual, codec.codebooks[s])
        residual = residual - codec.codebooks[s][idx]

    codec.trained = True
    errors = []
    for _ in range(epochs):
        residual = latent.copy()
        for s in range(config.stages):
            idx = _nearest_codes(residual, codec.codebooks[s])
            for j in range(1, config.codebook_size):
                members = residual[idx == j]
                if len(members):
                    codec.codebooks[s, j] = members.mean(axis=0)
            idx = _nearest_codes(residual, codec.codebooks[s])
            residual = residual - codec.codebooks[s][idx]
        recon = rvq_decode(codec, rvq_encode(codec, frames)[0])
        errors.append(float(np.mean((recon - frames) ** 2)))
    return codec, errors


def save_codec(path, codec: RvqCodec, extra_meta: dict | None = None) -> None:
    meta = {"kind": "rvq_codec", "config": asdict(codec.config), "trained": codec.trained}
    if extra_meta:
        meta.update(extra_meta)
    tensorio.save_tensors(
        path,
        {
            "mean": codec.mean,
            "encoder": codec.encoder,
            "decoder": codec.decoder,
            "codebooks": codec.codebooks,
        },
        meta,
    )


def load_codec(path) -> RvqCodec:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "rvq_codec":
        raise ValueError(f"{path}: not a codec checkpoint")
    codec = RvqCodec(RvqConfig(**meta["config"]))
    codec.mean = tensors["mean"]
    codec.encoder = tensors["encoder"]
    codec.decoder = tensors["decoder"]
    codec.codebooks = tensors["codebooks"]
    codec.trained = bool(meta["trained"])
    return codec


def save_token_grid(path, grid: np.ndarray, stages: int) -> None:
    tensorio.save_tensors(path, {"codes": grid.astype(np.int64)}, {"kind": "token_grid", "stages": stages})


def load_token_grid(path) -> np.ndarray:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "token_grid":
        raise ValueError(f"{path}: not a token grid")
    return tensors["codes"]


# ---------------------------------------------------------------------------
# token language model


PAD, BOS, EOS, SEP = 0, 1, 2, 3


class AccompVocabulary:
    """Flat LM vocabulary: specials, prompt words, then stage-major codes."""

    def __init__(self, rvq: RvqConfig, prompt_words: tuple[str, ...] = PROMPT_WORDS):
        self.rvq = rvq
        self.prompt_words = tuple(prompt_words)
        self.word_index = {w: 4 + i for i, w in enumerate(self.prompt_words)}
        self.code_base = 4 + len(self.prompt_words)
        self.size = self.code_base + rvq.stages * rvq.codebook_size

    def encode_prompt(self, words: list[str]) -> list[int]:
        out = []
        for w in words:
            if w not in self.word_index:
                raise VocabularyError(f"prompt word {w!r} not in vocabulary")
            out.append(self.word_index[w])
        return out

    def code_id(self, stage: int, code: int) -> int:
        return self.code_base + stage * self.rvq.codebook_size + code

    def grid_ids(self, grid: np.ndarray) -> list[int]:
        """Flatten (frames, stages) codes stage-major per frame."""
        out = []
        for row in np.asarray(grid):
            for s, c in enumerate(row):
                out.append(self.code_id(s, int(c)))
        return out

    def ids_to_grid(self, ids: list[int]) -> np.ndarray:
        if len(ids) % self.rvq.stages:
            raise ValueError("token count does not form whole frames")
        grid = np.zeros((len(ids) // self.rvq.stages, self.rvq.stages), dtype=np.int64)
        for pos, tid in enumerate(ids):
            stage = pos % self.rvq.stages
            rel = tid - self.code_base - stage * self.rvq.codebook_size
            if not 0 <= rel < self.rvq.codebook_size:
                raise VocabularyError(f"id {tid} is not a stage-{stage} code token")
            grid[pos // self.rvq.stages, stage] = rel
        return grid

    def stage_token_range(self, stage: int) -> tuple[int, int]:
        lo = self.code_base + stage * self.rvq.codebook_size
        return lo, lo + self.rvq.codebook_size


@dataclass(frozen=True)
class AccompLmConfig:
    layers: int = 4
    heads: int = 4
    hidden: int = 256
    ffn: int = 1024
    dropout: float = 0.1
    max_len: int = 8192


class _LmBlock(nn.Module):
    def __init__(self, cfg: AccompLmConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.attn = nn.MultiheadAttention(cfg.hidden, cfg.heads, dropout=cfg.dropout, batch_first=True)
        self.norm2 = nn.LayerNorm(cfg.hidden)
        self.ffn = nn.Sequential(
            nn.Linear(cfg.hidden, cfg.ffn), nn.ReLU(), nn.Dropout(cfg.dropout), nn.Linear(cfg.ffn, cfg.hidden)
        )

    def forward(self, x, causal):
        h = self.norm1(x)
        a, _ = self.attn(h, h, h, attn_mask=causal, need_weights=False)
        x = x + a
        return x + self.ffn(self.norm2(x))


class TokenLM(nn.Module):
    """Decoder-only Transformer over the flat accompaniment vocabulary."""

    def __init__(self, config: AccompLmConfig, vocab_size: int):
        super().__init__()
        self.config = config
        self.vocab_size = vocab_size
        self.embed = nn.Embedding(vocab_size, config.hidden, padding_idx=PAD)
        self.blocks = nn.ModuleList(_LmBlock(config) for _ in range(config.layers))
        self.norm = nn.LayerNorm(config.hidden)
        self.head = nn.Linear(config.hidden, vocab_size)
        self.scale = math.sqrt(config.hidden)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        if ids.shape[1] > self.config.max_len:
            raise ValueError(f"sequence length {ids.shape[1]} exceeds {self.config.max_len}")
        x = self.embed(ids) * self.scale
        x = x + sinusoidal_positions(ids.shape[1], self.config.hidden, dtype=x.dtype).to(ids.device)
        causal = torch.ones((ids.shape[1], ids.shape[1]), dtype=torch.bool, device=ids.device).triu(1)
        for b in self.blocks:
            x = b(x, causal)
        return self.head(self.norm(x))


@dataclass
class AccompExample:
    prompt: list[str]
    melody_grid: np.ndarray
    accomp_grid: np.ndarray


def lm_sequence(vocab: AccompVocabulary, ex: AccompExample) -> tuple[list[int], int]:
    """Full token sequence and the index where the accompaniment starts."""
    prefix = [BOS] + vocab.encode_prompt(ex.prompt) + [SEP] + vocab.grid_ids(ex.melody_grid) + [SEP]
    return prefix + vocab.grid_ids(ex.accomp_grid) + [EOS], len(prefix)


def train_accomp_lm(
    examples: list[AccompExample],
    model: TokenLM,
    vocab: AccompVocabulary,
    steps: int = 500,
    learning_rate: float = 5e-4,
    seed: int = 0,
) -> list[float]:
    """Next-token training with loss masked to the accompaniment segment."""
    if not examples:
        raise ValueError("need at least one training example")
    torch.manual_seed(seed)
    opt = torch.optim.Adam(model.parameters(), lr=learning_rate)
    seqs = [lm_sequence(vocab, ex) for ex in examples]
    trace = []
    model.train()
    rng = np.random.default_rng(seed)
    for step in range(1, steps + 1):
        ids, start = seqs[int(rng.integers(len(seqs)))]
        x = torch.tensor([ids[:-1]], dtype=torch.long)
        y = torch.tensor([ids[1:]], dtype=torch.long)
        mask = torch.zeros_like(y, dtype=torch.bool)
        mask[0, start - 1 :] = True  # predict accomp tokens and EOS
        logits = model(x)
        loss = nn.functional.cross_entropy(
            logits[mask.unsqueeze(-1).expand_as(logits)].view(-1, model.vocab_size),
            y[mask],
        )
        if not torch.isfinite(loss):
            raise TrainingDiverged(step, learning_rate, 0.0)
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(float(loss.detach()))
    model.eval()
    return trace


def generate_accompaniment(
    model: TokenLM,
    vocab: AccompVocabulary,
    prompt: list[str],
    melody_grid: np.ndarray,
    seed: int = 0,
    mode: str = "greedy",
    top_k: int = 8,
) -> np.ndarray:
    """Sample an accompaniment grid with the same shape as the melody grid."""
    model.eval()
    melody_grid = np.asarray(melody_grid)
    n_tokens = melody_grid.shape[0] * vocab.rvq.stages
    prefix = [BOS] + vocab.encode_prompt(prompt) + [SEP] + vocab.grid_ids(melody_grid) + [SEP]
    gen = torch.Generator().manual_seed(seed)
    out: list[int] = []
    with torch.no_grad():
        for pos in range(n_tokens):
            ids = torch.tensor([prefix + out], dtype=torch.long)
            logits = model(ids)[0, -1].to(torch.float64)
            lo, hi = vocab.stage_token_range(pos % vocab.rvq.stages)
            masked = torch.full_like(logits, float("-inf"))
            masked[lo:hi] = logits[lo:hi]
            if mode == "greedy":
                nxt = int(torch.argmax(masked))
            elif mode == "top_k":
                k = min(top_k, hi - lo)
                vals, idx = torch.topk(masked, k)
                probs = torch.softmax(vals, dim=-1)
                nxt = int(idx[torch.multinomial(probs, 1, generator=gen)])
            else:
                raise ValueError(f"unknown decode mode {mode!r}")
            out.append(nxt)
    return vocab.ids_to_grid(out)


def save_accomp_lm(path, model: TokenLM, vocab: AccompVocabulary, extra_meta=None) -> None:
    meta = {
        "kind": "accomp_lm",
        "config": asdict(model.config),
        "vocab_size": model.vocab_size,
        "rvq": asdict(vocab.rvq),
        "prompt_words": list(vocab.prompt_words),
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensorio.save_tensors(path, tensors, meta)


def load_accomp_lm(path) -> tuple[TokenLM, AccompVocabulary]:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "accomp_lm":
        raise ValueError(f"{path}: not an accompaniment LM checkpoint")
    vocab = AccompVocabulary(RvqConfig(**meta["rvq"]), tuple(meta["prompt_words"]))
    model = TokenLM(AccompLmConfig(**meta["config"]), meta["vocab_size"])
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    model.eval()
    return model, vocab


# ---------------------------------------------------------------------------
# mixer


def mix(
    voice: np.ndarray,
    melody: np.ndarray,
    accompaniment: np.ndarray,
    gains: tuple[float, float, float] = (1.0, 0.6, 0.5),
    sample_rates: tuple[int, int, int] | None = None,
    peak: float = 0.95,
) -> np.ndarray:
    """Gain-weighted sum padded to the longest input, peak-normalized.

    Non-silent mixes come out with peak exactly ``peak``; an all-silent mix
    stays silent.
    """
    if sample_rates is not None and len(set(sample_rates)) != 1:
        raise ValueError(f"sample rates differ: {sample_rates}")
    parts = [np.asarray(voice), np.asarray(melody), np.asarray(accompaniment)]
    length = max(len(p) for p in parts)
    acc = np.zeros(length, dtype=np.float64)
    for part, gain in zip(parts, gains):
        acc[: len(part)] += gain * part
    m = float(np.max(np.abs(acc))) if length else 0.0
    if m < 1e-8:
        return acc
    return acc * (peak / m)
