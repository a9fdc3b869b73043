"""Ancestral denoising schedule and update rule.

A linear-beta schedule is laid out directly over the sampling steps, and
each update applies the standard ancestral posterior mean plus, on every
step except the last, posterior-variance noise. Passing ``rng=None`` runs
the deterministic variant (no injected noise), which makes single steps
hand-checkable: with a zero noise estimate the update reduces to dividing
by the square root of the step's alpha.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .guidance import Latent


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step betas with derived alphas and cumulative alpha products."""

    betas: np.ndarray

    def __post_init__(self):
        betas = np.asarray(self.betas, dtype=np.float64)
        if betas.ndim != 1 or betas.size < 1:
            raise ValidationError("schedule needs a 1-D, non-empty beta array")
        if np.any(betas <= 0.0) or np.any(betas >= 1.0):
            raise ValidationError("betas must lie strictly inside (0, 1)")
        object.__setattr__(self, "betas", betas)

    @staticmethod
    def linear(num_steps: int, beta_start: float = 1e-4, beta_end: float = 0.02) -> "NoiseSchedule":
        if num_steps < 1:
            raise ValidationError(f"num_steps must be >= 1, got {num_steps}")
        return NoiseSchedule(np.linspace(beta_start, beta_end, num_steps))

    @property
    def num_steps(self) -> int:
        return int(self.betas.size)

    @property
    def alphas(self) -> np.ndarray:
        return 1.0 - self.betas

    @property
    def alpha_bars(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    def alpha_bar_prev(self, t: int) -> float:
        """Cumulative product one step earlier; defined as 1 at the start."""
        return float(self.alpha_bars[t - 1]) if t > 0 else 1.0


class AncestralSampler:
    """Applies one ancestral update per step, from high step index down to zero."""

    def __init__(self, schedule: NoiseSchedule):
        self.schedule = schedule

    def timesteps(self) -> list[int]:
        return list(range(self.schedule.num_steps - 1, -1, -1))

    def sigma(self, t: int) -> float:
        """Posterior noise scale at step ``t``; exactly zero at the final step."""
        self._check_step(t)
        if t == 0:
            return 0.0
        beta = float(self.schedule.betas[t])
        abar = float(self.schedule.alpha_bars[t])
        abar_prev = self.schedule.alpha_bar_prev(t)
        return float(np.sqrt(beta * (1.0 - abar_prev) / (1.0 - abar)))

    def step(
        self,
        z_t: Latent,
        t: int,
        eps: Latent,
        rng: np.random.Generator | None = None,
    ) -> Latent:
        """One denoising update of ``z_t`` using noise estimate ``eps``.

        The posterior mean is ``(z_t - beta_t / sqrt(1 - alpha_bar_t) * eps)
        / sqrt(alpha_t)``; noise is injected only when ``rng`` is given and
        the step is not the last one. No generator state is consumed on the
        final step, so runs that only differ in post-final randomness agree.
        """
        self._check_step(t)
        if z_t.shape != eps.shape:
            raise ValidationError(
                f"latent shape {z_t.shape} does not match noise estimate {eps.shape}"
            )
        beta = float(self.schedule.betas[t])
        alpha = float(self.schedule.alphas[t])
        abar = float(self.schedule.alpha_bars[t])
        mean = (z_t.data - (beta / np.sqrt(1.0 - abar)) * eps.data) / np.sqrt(alpha)
        sigma = self.sigma(t)
        if rng is not None and sigma > 0.0:
            mean = mean + sigma * rng.standard_normal(z_t.shape)
        return Latent(mean)

    def _check_step(self, t: int):
        if not 0 <= t < self.schedule.num_steps:
            raise ValidationError(
                f"step index {t} outside schedule of {self.schedule.num_steps} steps"
            )
