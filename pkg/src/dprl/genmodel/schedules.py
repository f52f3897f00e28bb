from __future__ import annotations

from dataclasses import dataclass

import numpy as np

T_MIN = 1e-3

SCHEDULES = ("cosine", "linear_vp")


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance-preserving (alpha_t, sigma_t) pair on t in [0, 1]; data sits at t=0.

    ``cosine`` follows the improved-DDPM offset form (s=0.008); ``linear_vp``
    integrates a beta(t) ramp from ``beta_min`` to ``beta_max``.
    """

    kind: str = "cosine"
    cosine_offset: float = 0.008
    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self):
        if self.kind not in SCHEDULES:
            raise ValueError(f"unknown schedule {self.kind!r}; expected one of {SCHEDULES}")

    def _u(self, t):
        s = self.cosine_offset
        return (np.asarray(t, dtype=np.float64) + s) / (1.0 + s) * (np.pi / 2)

    def alpha(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "cosine":
            return np.cos(self._u(t)) / np.cos(self._u(0.0))
        return np.exp(-0.5 * self._beta_integral(t))

    def sigma(self, t):
        a = self.alpha(t)
        return np.sqrt(np.maximum(1.0 - a * a, 0.0))

    def alpha_dot(self, t):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "cosine":
            s = self.cosine_offset
            return -np.sin(self._u(t)) * (np.pi / 2) / (1.0 + s) / np.cos(self._u(0.0))
        return -0.5 * self.beta(t) * self.alpha(t)

    def sigma_dot(self, t):
        a = self.alpha(t)
        with np.errstate(divide="ignore", invalid="ignore"):
            return -a * self.alpha_dot(t) / self.sigma(t)

    def beta(self, t):
        return self.beta_min + (self.beta_max - self.beta_min) * np.asarray(t, dtype=np.float64)

    def _beta_integral(self, t):
        return self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t


def make_schedule(kind="cosine"):
    return NoiseSchedule(kind)


def clamp_time(t, t_min=T_MIN):
    """Keep evaluation times away from both endpoint singularities."""
    return np.clip(t, t_min, 1.0 - t_min)
