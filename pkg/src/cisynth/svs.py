"""Singing voice synthesis stack: variance encoder, duration predictor,
diffusion F0 predictor, acoustic encoder, ConvNeXt auxiliary decoder, and
the shallow-diffusion mel decoder.

All model-facing features are normalized: mels to [-1, 1] log-power units,
f0 to (normalized log-f0, voiced flag) channels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
import torch
from torch import nn

from . import tensorio
from .audio import AudioConfig, DEFAULT_AUDIO, f0_to_model, harmonic_mel_template, model_to_f0
from .diffusion import DiffusionSchedule, diffuse_forward, diffuse_forward_batch, sample_from
from .errors import VocabularyError
from .pinyin import phoneme_inventory
from .seq2seq import sinusoidal_positions
from .symbolic import largest_remainder_round


@dataclass(frozen=True)
class SvsConfig:
    hidden: int = 256
    encoder_layers: int = 4
    encoder_heads: int = 2
    encoder_ffn_units: int = 1024
    encoder_ffn_kernel: int = 9
    dropout: float = 0.1
    duration_layers: int = 5
    duration_channels: int = 512
    duration_kernel: int = 3
    aux_layers: int = 6
    aux_channels: int = 512
    aux_kernel: int = 7
    denoiser_layers: int = 20
    denoiser_channels: int = 512
    denoiser_kernel: int = 3
    denoiser_dilation_cycle: int = 10
    f0_layers: int = 20
    f0_channels: int = 256
    f0_kernel: int = 3
    f0_dilation_cycle: int = 10
    n_mels: int = 80
    diffusion_steps: int = 100
    beta_start: float = 1e-4
    beta_end: float = 0.06
    shallow_k: int = 60

    @classmethod
    def desk(cls) -> "SvsConfig":
        """Small configuration that trains in minutes on a CPU."""
        return cls(
            hidden=128,
            encoder_layers=2,
            encoder_ffn_units=256,
            duration_layers=3,
            duration_channels=128,
            aux_layers=3,
            aux_channels=128,
            denoiser_layers=10,
            denoiser_channels=96,
            denoiser_dilation_cycle=5,
            f0_layers=8,
            f0_channels=48,
            f0_dilation_cycle=4,
        )

    def schedule(self) -> DiffusionSchedule:
        return DiffusionSchedule.linear(self.diffusion_steps, self.beta_start, self.beta_end)


def phoneme_to_ids(symbols: list[str]) -> list[int]:
    inv = phoneme_inventory()
    index = {s: i for i, s in enumerate(inv)}
    out = []
    for s in symbols:
        if s not in index:
            raise VocabularyError(f"unknown phoneme {s!r}")
        out.append(index[s])
    return out


def expand_to_frames(features: torch.Tensor, durations: list[int]) -> torch.Tensor:
    """Repeat row i of (m, d) features durations[i] times -> (T, d)."""
    if len(durations) != features.shape[0]:
        raise ValueError(
            f"{len(durations)} durations for {features.shape[0]} feature rows"
        )
    if any(d < 1 for d in durations):
        raise ValueError("durations must be positive")
    reps = torch.tensor(durations, dtype=torch.long, device=features.device)
    return torch.repeat_interleave(features, reps, dim=0)


def expansion_matrix(durations: list[int]) -> np.ndarray:
    """(m, T) 0/1 mapping matrix: row i carries durations[i] ones, columns one-hot."""
    if any(d < 1 for d in durations):
        raise ValueError("durations must be positive")
    m = len(durations)
    t = sum(durations)
    mat = np.zeros((m, t))
    col = 0
    for i, d in enumerate(durations):
        mat[i, col : col + d] = 1.0
        col += d
    return mat


class _ConvFFN(nn.Module):
    def __init__(self, dim: int, hidden: int, kernel: int, dropout: float):
        super().__init__()
        self.conv1 = nn.Conv1d(dim, hidden, kernel, padding=kernel // 2)
        self.conv2 = nn.Conv1d(hidden, dim, kernel, padding=kernel // 2)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):  # (B, L, D)
        h = x.transpose(1, 2)
        h = torch.relu(self.conv1(h))
        h = self.drop(h)
        h = self.conv2(h).transpose(1, 2)
        return h


class FFTBlock(nn.Module):
    """FastSpeech-style feed-forward Transformer block (pre-norm)."""

    def __init__(self, cfg: SvsConfig):
        super().__init__()
        self.norm1 = nn.LayerNorm(cfg.hidden)
        self.attn = nn.MultiheadAttention(
            cfg.hidden, cfg.encoder_heads, dropout=cfg.dropout, batch_first=True
        )
        self.norm2 = nn.LayerNorm(cfg.hidden)
        self.ffn = _ConvFFN(cfg.hidden, cfg.encoder_ffn_units, cfg.encoder_ffn_kernel, cfg.dropout)

    def forward(self, x):
        h = self.norm1(x)
        a, _ = self.attn(h, h, h, need_weights=False)
        x = x + a
        return x + self.ffn(self.norm2(x))


class TransformerStack(nn.Module):
    def __init__(self, cfg: SvsConfig):
        super().__init__()
        self.blocks = nn.ModuleList(FFTBlock(cfg) for _ in range(cfg.encoder_layers))
        self.norm = nn.LayerNorm(cfg.hidden)
        self.hidden = cfg.hidden

    def forward(self, x):  # (B, L, hidden)
        x = x + sinusoidal_positions(x.shape[1], self.hidden, dtype=x.dtype).to(x.device)
        for b in self.blocks:
            x = b(x)
        return self.norm(x)


class DurationPredictor(nn.Module):
    """Conv stack over per-phoneme features; predicts log(1 + frames)."""

    def __init__(self, cfg: SvsConfig):
        super().__init__()
        chans = cfg.duration_channels
        layers = []
        in_ch = cfg.hidden + 2  # H^VE plus broadcast note pitch and duration
        for _ in range(cfg.duration_layers):
            layers.append(nn.Conv1d(in_ch, chans, cfg.duration_kernel, padding=cfg.duration_kernel // 2))
            in_ch = chans
        self.convs = nn.ModuleList(layers)
        self.norms = nn.ModuleList(nn.LayerNorm(chans) for _ in range(cfg.duration_layers))
        self.drop = nn.Dropout(cfg.dropout)
        self.out = nn.Linear(chans, 1)

    def forward(self, x):  # (B, m, hidden+2) -> (B, m)
        h = x.transpose(1, 2)
        for conv, norm in zip(self.convs, self.norms):
            h = torch.relu(conv(h))
            h = norm(h.transpose(1, 2)).transpose(1, 2)
            h = self.drop(h)
        return self.out(h.transpose(1, 2)).squeeze(-1)


class ConvNeXtBlock(nn.Module):
    def __init__(self, channels: int, kernel: int):
        super().__init__()
        self.dw = nn.Conv1d(channels, channels, kernel, padding=kernel // 2, groups=channels)
        self.norm = nn.LayerNorm(channels)
        self.pw1 = nn.Linear(channels, channels * 3)
        self.pw2 = nn.Linear(channels * 3, channels)

    def forward(self, x):  # (B, L, C)
        h = self.dw(x.transpose(1, 2)).transpose(1, 2)
        h = self.norm(h)
        h = self.pw2(torch.nn.functional.gelu(self.pw1(h)))
        return x + h


class AuxDecoder(nn.Module):
    """ConvNeXt stack mapping frame features to a rough mel estimate."""

    def __init__(self, cfg: SvsConfig):
        super().__init__()
        self.inp = nn.Linear(cfg.hidden, cfg.aux_channels)
        self.blocks = nn.ModuleList(
            ConvNeXtBlock(cfg.aux_channels, cfg.aux_kernel) for _ in range(cfg.aux_layers)
        )
        self.norm = nn.LayerNorm(cfg.aux_channels)
        self.out = nn.Linear(cfg.aux_channels, cfg.n_mels)

    def forward(self, x):  # (B, T, hidden) -> (B, T, n_mels)
        h = self.inp(x)
        for b in self.blocks:
            h = b(h)
        return self.out(self.norm(h))


class WaveNetDenoiser(nn.Module):
    """Non-causal gated WaveNet predicting diffusion noise.

    Conditions on frame features via per-layer 1x1 projections and on the
    diffusion step via a sinusoidal embedding MLP.
    """

    def __init__(
        self,
        data_channels: int,
        cond_channels: int,
        residual_channels: int,
        layers: int,
        kernel: int,
        dilation_cycle: int,
    ):
        super().__init__()
        self.data_channels = data_channels
        self.res = residual_channels
        self.inp = nn.Conv1d(data_channels, residual_channels, 1)
        self.step_mlp = nn.Sequential(
            nn.Linear(residual_channels, residual_channels * 2),
            nn.SiLU(),
            nn.Linear(residual_channels * 2, residual_channels),
        )
        self.dilated = nn.ModuleList()
        self.cond_proj = nn.ModuleList()
        self.step_proj = nn.ModuleList()
        self.res_skip = nn.ModuleList()
        for i in range(layers):
            dilation = 2 ** (i % dilation_cycle)
            pad = (kernel - 1) * dilation // 2
            self.dilated.append(
                nn.Conv1d(residual_channels, residual_channels * 2, kernel, padding=pad, dilation=dilation)
            )
            self.cond_proj.append(nn.Conv1d(cond_channels, residual_channels * 2, 1))
            self.step_proj.append(nn.Linear(residual_channels, residual_channels))
            self.res_skip.append(nn.Conv1d(residual_channels, residual_channels * 2, 1))
        self.out = nn.Sequential(
            nn.Conv1d(residual_channels, residual_channels, 1),
            nn.ReLU(),
            nn.Conv1d(residual_channels, data_channels, 1),
        )

    def forward(self, x: torch.Tensor, t: torch.Tensor, cond: torch.Tensor) -> torch.Tensor:
        """x: (B, C, T) noised data; t: (B,) step; cond: (B, cond, T)."""
        emb = sinusoidal_positions(
            int(t.max()) + 1, self.res, dtype=x.dtype
        ).to(x.device)[t]
        emb = self.step_mlp(emb)
        h = self.inp(x)
        skips = torch.zeros_like(h)
        for dil, cproj, sproj, rs in zip(
            self.dilated, self.cond_proj, self.step_proj, self.res_skip
        ):
            y = h + sproj(emb).unsqueeze(-1)
            y = dil(y) + cproj(cond)
            a, b = y.chunk(2, dim=1)
            y = torch.tanh(a) * torch.sigmoid(b)
            y = rs(y)
            res, skip = y.chunk(2, dim=1)
            h = (h + res) / math.sqrt(2.0)
            skips = skips + skip
        return self.out(skips / math.sqrt(len(self.dilated)))


class SvsModel(nn.Module):
    """Bundles the full voice stack; operates on one utterance at a time.

    Both denoisers train on the L2 noise-prediction objective; internally
    the WaveNet backbones regress the clean signal and the noise estimate
    is recovered analytically from the schedule, which keeps desk-scale
    training stable.
    """

    def __init__(self, config: SvsConfig, audio: AudioConfig = DEFAULT_AUDIO):
        super().__init__()
        self.config = config
        self.audio = audio
        n_phonemes = len(phoneme_inventory())
        self.phoneme_embed = nn.Embedding(n_phonemes, config.hidden)
        self.variance_encoder = TransformerStack(config)
        self.duration_predictor = DurationPredictor(config)
        f0_feat = config.n_mels + 2  # harmonic template + log-f0 + voiced flag
        self.f0_feat_proj = nn.Linear(f0_feat, config.hidden // 2)
        self.acoustic_inp = nn.Linear(config.hidden + config.hidden // 2, config.hidden)
        self.acoustic_encoder = TransformerStack(config)
        self.aux_decoder = AuxDecoder(config)
        self.mel_denoiser = WaveNetDenoiser(
            config.n_mels, config.hidden, config.denoiser_channels,
            config.denoiser_layers, config.denoiser_kernel, config.denoiser_dilation_cycle,
        )
        self.f0_denoiser = WaveNetDenoiser(
            2, config.hidden, config.f0_channels,
            config.f0_layers, config.f0_kernel, config.f0_dilation_cycle,
        )
        self._schedule = config.schedule()
        self.register_buffer(
            "alpha_bar", torch.from_numpy(self._schedule.alpha_bar.copy()).float()
        )

    @property
    def schedule(self) -> DiffusionSchedule:
        return self._schedule

    def _eps_from_clean(
        self, net: WaveNetDenoiser, xt: torch.Tensor, t: torch.Tensor, cond: torch.Tensor
    ) -> torch.Tensor:
        """Noise estimate from the backbone's clean-signal regression."""
        x0_hat = net(xt, t, cond)
        abar = self.alpha_bar.to(xt.dtype)[t].reshape(-1, 1, 1)
        return (xt - torch.sqrt(abar) * x0_hat) / torch.sqrt(1.0 - abar)

    # -- phoneme-level ------------------------------------------------------

    def variance_encode(self, phoneme_ids: list[int]) -> torch.Tensor:
        """(m, hidden) phonetic features."""
        ids = torch.tensor([phoneme_ids], dtype=torch.long)
        x = self.phoneme_embed(ids) * math.sqrt(self.config.hidden)
        return self.variance_encoder(x)[0]

    def predict_log_durations(
        self, hve: torch.Tensor, note_pitch: list[float], note_duration: list[float]
    ) -> torch.Tensor:
        """Per-phoneme log(1+frames); notes come broadcast to phoneme positions."""
        m = hve.shape[0]
        if not (len(note_pitch) == len(note_duration) == m):
            raise ValueError("note features must be broadcast to phoneme positions")
        pitch = torch.tensor(note_pitch, dtype=hve.dtype).unsqueeze(-1) / 127.0
        dur = torch.tensor(note_duration, dtype=hve.dtype).unsqueeze(-1) / 16.0
        x = torch.cat([hve, pitch, dur], dim=-1).unsqueeze(0)
        return self.duration_predictor(x)[0]

    @staticmethod
    def duration_loss(pred_log: torch.Tensor, target_frames: torch.Tensor) -> torch.Tensor:
        """L2 on log(1 + frames)."""
        return torch.mean((pred_log - torch.log1p(target_frames.to(pred_log.dtype))) ** 2)

    def project_durations(
        self,
        pred_log: torch.Tensor,
        owner: list[int],
        token_budget: dict[int, int],
    ) -> tuple[list[int], bool]:
        """Round predictions and renormalize per lyric token to exact budgets.

        Returns (frames per phoneme, clamped flag); predictions at or below
        zero frames are clamped to one before projection and flagged.
        """
        raw = torch.expm1(pred_log).detach().cpu().numpy()
        clamped = bool(np.any(raw < 1.0))
        groups: dict[int, list[int]] = {}
        for idx, tok in enumerate(owner):
            groups.setdefault(tok, []).append(idx)
        out = [0] * len(owner)
        for tok, idxs in groups.items():
            weights = [max(float(raw[i]), 1.0) for i in idxs]
            alloc = largest_remainder_round(weights, token_budget[tok], minimum=1)
            for i, a in zip(idxs, alloc):
                out[i] = a
        return out, clamped

    # -- frame-level --------------------------------------------------------

    def f0_features(self, f0_hz: np.ndarray) -> torch.Tensor:
        """(T, n_mels + 2) analytic f0 conditioning: harmonic mel template,
        normalized log-f0, voiced flag."""
        template = harmonic_mel_template(f0_hz, self.audio)
        norm, voiced = f0_to_model(f0_hz)
        feats = np.concatenate([template, norm[:, None], voiced[:, None]], axis=1)
        return torch.from_numpy(feats)

    def frame_condition(self, hve: torch.Tensor, durations: list[int]) -> torch.Tensor:
        """Expand phoneme features to frames: the F0 predictor's condition."""
        return expand_to_frames(hve, durations)

    def acoustic_encode(
        self, phoneme_ids: list[int], durations: list[int], f0_hz: np.ndarray
    ) -> torch.Tensor:
        """(T, hidden) frame-level acoustic features."""
        if len(phoneme_ids) != len(durations):
            raise ValueError(
                f"{len(phoneme_ids)} phonemes but {len(durations)} durations"
            )
        total = sum(durations)
        if len(f0_hz) != total:
            raise ValueError(f"f0 has {len(f0_hz)} frames, durations sum to {total}")
        ids = torch.tensor([phoneme_ids], dtype=torch.long)
        emb = self.phoneme_embed(ids)[0] * math.sqrt(self.config.hidden)
        frames = expand_to_frames(emb, durations)
        f0f = self.f0_feat_proj(self.f0_features(f0_hz).to(emb.dtype))
        x = self.acoustic_inp(torch.cat([frames, f0f], dim=-1)).unsqueeze(0)
        return self.acoustic_encoder(x)[0]

    def aux_decode(self, hae: torch.Tensor) -> torch.Tensor:
        """(T, n_mels) rough mel from the ConvNeXt decoder."""
        return self.aux_decoder(hae.unsqueeze(0))[0]

    @staticmethod
    def aux_loss(pred_mel: torch.Tensor, target_mel: torch.Tensor) -> torch.Tensor:
        """L1 on normalized mel."""
        return torch.mean(torch.abs(pred_mel - target_mel))

    # -- diffusion ----------------------------------------------------------

    def mel_denoise_loss(
        self, hae: torch.Tensor, target_mel: torch.Tensor, generator: torch.Generator | None = None
    ) -> torch.Tensor:
        """L2 of the denoiser's clean-signal estimate at a random noise level.

        Equivalent to the noise-prediction L2 up to the per-step schedule
        weight; the unweighted noise objective cannot converge at desk scale
        (it demands cancellation of two ~1/sqrt(beta_1)-amplified terms).
        """
        x0 = target_mel.T.unsqueeze(0)  # (1, n_mels, T)
        cond = hae.T.unsqueeze(0).detach()
        t = torch.randint(1, self.schedule.total_steps + 1, (1,), generator=generator)
        xt, _ = diffuse_forward_batch(x0, t, self.schedule, generator)
        x0_hat = self.mel_denoiser(xt, t, cond)
        return torch.mean((x0_hat - x0) ** 2)

    def f0_denoise_loss(
        self,
        cond_frames: torch.Tensor,
        f0_hz: np.ndarray,
        generator: torch.Generator | None = None,
    ) -> torch.Tensor:
        norm, voiced = f0_to_model(np.asarray(f0_hz))
        x0 = torch.from_numpy(np.stack([norm, voiced])).unsqueeze(0).to(cond_frames.dtype)
        cond = cond_frames.T.unsqueeze(0).detach()
        t = torch.randint(1, self.schedule.total_steps + 1, (1,), generator=generator)
        xt, _ = diffuse_forward_batch(x0, t, self.schedule, generator)
        x0_hat = self.f0_denoiser(xt, t, cond)
        return torch.mean((x0_hat - x0) ** 2)

    def sample_f0(
        self, cond_frames: torch.Tensor, seed: int, steps: int | None = None
    ) -> np.ndarray:
        """Sample an f0 contour (Hz, 0 = unvoiced) for T conditioned frames."""
        steps = self.schedule.total_steps if steps is None else steps
        gen = torch.Generator().manual_seed(seed)
        cond = cond_frames.T.unsqueeze(0)
        shape = (1, 2, cond.shape[-1])
        x = torch.randn(shape, generator=gen, dtype=cond.dtype)

        def fn(xt, t):
            return self._eps_from_clean(self.f0_denoiser, xt, torch.tensor([t]), cond)

        out = sample_from(fn, x, steps, self.schedule, gen)[0].cpu().numpy()
        return model_to_f0(out[0], out[1])

    def sample_mel(
        self,
        hae: torch.Tensor,
        seed: int,
        mode: str = "shallow",
        aux_mel: torch.Tensor | None = None,
        k: int | None = None,
    ) -> torch.Tensor:
        """(T, n_mels) mel via diffusion decoding.

        full mode runs all R steps from Gaussian noise; shallow mode noises
        the auxiliary estimate to step K and denoises K rounds. K = 0
        returns the auxiliary estimate unchanged.
        """
        cond = hae.T.unsqueeze(0)
        t_frames = cond.shape[-1]
        gen = torch.Generator().manual_seed(seed)
        r = self.schedule.total_steps

        def fn(xt, t):
            return self._eps_from_clean(self.mel_denoiser, xt, torch.tensor([t]), cond)

        if mode == "full":
            x = torch.randn((1, self.config.n_mels, t_frames), generator=gen, dtype=hae.dtype)
            steps = r
        elif mode == "shallow":
            if aux_mel is None:
                raise ValueError("shallow mode needs the auxiliary decoder output")
            k = self.config.shallow_k if k is None else k
            if not 0 <= k <= r:
                raise ValueError(f"K={k} outside [0, {r}]")
            if k == 0:
                return aux_mel.detach().clone()
            x, _ = diffuse_forward(aux_mel.T.unsqueeze(0), k, self.schedule, gen)
            steps = k
        else:
            raise ValueError(f"unknown decode mode {mode!r}")
        out = sample_from(fn, x, steps, self.schedule, gen)
        return out[0].T


# ---------------------------------------------------------------------------
# checkpoints


def save_svs_checkpoint(path, model: SvsModel, extra_meta: dict | None = None) -> None:
    meta = {
        "kind": "svs",
        "model_config": asdict(model.config),
        "phonemes": phoneme_inventory(),
    }
    if extra_meta:
        meta.update(extra_meta)
    tensors = {k: v.detach().cpu().numpy() for k, v in model.state_dict().items()}
    tensorio.save_tensors(path, tensors, meta)


def load_svs_checkpoint(path) -> tuple[SvsModel, dict]:
    tensors, meta = tensorio.load_tensors(path)
    if meta.get("kind") != "svs":
        raise ValueError(f"{path}: not an svs checkpoint")
    if meta.get("phonemes") != phoneme_inventory():
        raise ValueError(f"{path}: phoneme inventory mismatch")
    model = SvsModel(SvsConfig(**meta["model_config"]))
    model.load_state_dict({k: torch.from_numpy(v.copy()) for k, v in tensors.items()})
    model.eval()
    return model, meta
