"""Gaussian diffusion: schedule, forward noising, and the ancestral sampler.

Noise-prediction parameterization throughout; step indices run 1..R with
the convention that cumulative alpha at step 0 is exactly 1 (the forward
process at t=0 is the identity).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import torch


@dataclass(frozen=True)
class DiffusionSchedule:
    betas: np.ndarray
    alpha_bar: np.ndarray = field(init=False)  # length R+1, alpha_bar[0] = 1

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or len(betas) < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValueError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)
        abar = np.concatenate([[1.0], np.cumprod(1.0 - betas)])
        if np.any(np.diff(abar) >= 0.0):
            raise ValueError("alpha-bar must be strictly decreasing")
        object.__setattr__(self, "alpha_bar", abar)

    @property
    def total_steps(self) -> int:
        return len(self.betas)

    @classmethod
    def linear(cls, total_steps: int = 100, beta_start: float = 1e-4, beta_end: float = 0.06):
        return cls(np.linspace(beta_start, beta_end, total_steps))


def diffuse_forward(
    x0: torch.Tensor,
    t: int,
    schedule: DiffusionSchedule,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Noise x0 to step t; returns (x_t, the standard-normal draw used).

    t = 0 returns x0 unchanged with a zero noise tensor.
    """
    if not 0 <= t <= schedule.total_steps:
        raise ValueError(f"step {t} outside [0, {schedule.total_steps}]")
    if t == 0:
        return x0.clone(), torch.zeros_like(x0)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype, device=x0.device)
    abar = float(schedule.alpha_bar[t])
    xt = math.sqrt(abar) * x0 + math.sqrt(1.0 - abar) * eps
    return xt, eps


def diffuse_forward_batch(
    x0: torch.Tensor,
    t: torch.Tensor,
    schedule: DiffusionSchedule,
    generator: torch.Generator | None = None,
) -> tuple[torch.Tensor, torch.Tensor]:
    """Batched forward noising; t holds one step (1..R) per batch element."""
    abar = torch.from_numpy(schedule.alpha_bar).to(x0.dtype)[t]
    while abar.dim() < x0.dim():
        abar = abar.unsqueeze(-1)
    eps = torch.randn(x0.shape, generator=generator, dtype=x0.dtype, device=x0.device)
    xt = torch.sqrt(abar) * x0 + torch.sqrt(1.0 - abar) * eps
    return xt, eps


@torch.no_grad()
def sample_from(
    denoise_fn,
    x_init: torch.Tensor,
    steps: int,
    schedule: DiffusionSchedule,
    generator: torch.Generator | None = None,
) -> torch.Tensor:
    """Run ``steps`` ancestral denoising rounds from x_init (already at step K).

    ``denoise_fn(x, t)`` predicts the noise at integer step t. steps = 0
    returns x_init unchanged.
    """
    if not 0 <= steps <= schedule.total_steps:
        raise ValueError(f"steps {steps} outside [0, {schedule.total_steps}]")
    x = x_init.clone()
    for t in range(steps, 0, -1):
        beta_t = float(schedule.betas[t - 1])
        alpha_t = 1.0 - beta_t
        abar_t = float(schedule.alpha_bar[t])
        abar_prev = float(schedule.alpha_bar[t - 1])
        eps_hat = denoise_fn(x, t)
        mean = (x - beta_t / math.sqrt(1.0 - abar_t) * eps_hat) / math.sqrt(alpha_t)
        if t > 1:
            sigma = math.sqrt(beta_t * (1.0 - abar_prev) / (1.0 - abar_t))
            noise = torch.randn(x.shape, generator=generator, dtype=x.dtype, device=x.device)
            x = mean + sigma * noise
        else:
            x = mean
    return x
