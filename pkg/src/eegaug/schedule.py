"""Variance schedule for the diffusion chain and its derived constants.

For each step t (externally 1-indexed, t = 1..T):
    alpha_t      = 1 - beta_t
    alpha_bar_t  = prod_{s<=t} alpha_s
    beta_tilde_1 = beta_1
    beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t   (t > 1)

beta_tilde is the reverse-process posterior variance used by the sampler.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Schedule:
    """Precomputed per-step constants; arrays are 0-based storage for t-1."""

    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    beta_tilde: np.ndarray

    def __post_init__(self):
        for arr in (self.beta, self.alpha, self.alpha_bar, self.beta_tilde):
            arr.setflags(write=False)

    @property
    def steps(self) -> int:
        return len(self.beta)

    def _index(self, t: int) -> int:
        if not 1 <= t <= self.steps:
            raise ValueError(f"step {t} outside 1..{self.steps}")
        return t - 1

    def beta_at(self, t: int) -> float:
        return float(self.beta[self._index(t)])

    def alpha_at(self, t: int) -> float:
        return float(self.alpha[self._index(t)])

    def alpha_bar_at(self, t: int) -> float:
        return float(self.alpha_bar[self._index(t)])

    def beta_tilde_at(self, t: int) -> float:
        return float(self.beta_tilde[self._index(t)])


def linear_schedule(steps: int, beta_start: float, beta_end: float) -> Schedule:
    """Linearly interpolated beta between the inclusive endpoints."""
    if steps < 1:
        raise ValueError(f"steps must be >= 1, got {steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ValueError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, steps)
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    beta_tilde = np.empty_like(beta)
    beta_tilde[0] = beta[0]
    if steps > 1:
        beta_tilde[1:] = (1.0 - alpha_bar[:-1]) / (1.0 - alpha_bar[1:]) * beta[1:]
    return Schedule(beta=beta, alpha=alpha, alpha_bar=alpha_bar, beta_tilde=beta_tilde)
