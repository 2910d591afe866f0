"""VP noise schedules and the coefficients alpha_t, sigma_t."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    """A time argument fell outside [0, T]."""


@dataclass(frozen=True)
class Schedule:
    """Variance-preserving schedule beta(t) on [0, horizon].

    ``kind="constant"`` uses ``beta0`` everywhere; ``kind="linear"`` ramps
    from ``beta0`` at t=0 to ``beta1`` at t=horizon.
    """

    kind: str = "linear"
    beta0: float = 0.1
    beta1: float = 20.0
    horizon: float = 1.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        if not (self.beta0 > 0 and self.horizon > 0):
            raise ValueError("beta0 and horizon must be positive")
        if self.kind == "linear" and not self.beta1 > 0:
            raise ValueError("beta1 must be positive for a linear schedule")

    @property
    def T(self) -> float:
        return self.horizon

    def _check(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or np.any(t_arr > self.horizon) or np.any(~np.isfinite(t_arr)):
            raise DomainError(f"t={t} outside [0, {self.horizon}]")
        return t_arr if t_arr.ndim else float(t_arr)

    def beta(self, t):
        t = self._check(t)
        if self.kind == "constant":
            return self.beta0 + 0.0 * t
        return self.beta0 + (self.beta1 - self.beta0) * t / self.horizon

    def integral(self, t):
        """Closed-form int_0^t beta(s) ds."""
        t = self._check(t)
        if self.kind == "constant":
            return self.beta0 * t
        return self.beta0 * t + 0.5 * (self.beta1 - self.beta0) * t * t / self.horizon

    def alpha_sigma(self, t):
        """Return ``(alpha_t, sigma_t)`` with alpha_t^2 + sigma_t^2 = 1."""
        b = self.integral(t)
        alpha = np.exp(-0.5 * b)
        # -expm1 keeps sigma accurate when t is tiny
        sigma = np.sqrt(-np.expm1(-b))
        if np.ndim(alpha) == 0:
            return float(alpha), float(sigma)
        return alpha, sigma

    def forward_perturb(self, x0, t, eps):
        x0 = np.asarray(x0, dtype=float)
        eps = np.asarray(eps, dtype=float)
        if x0.shape != eps.shape:
            raise ValueError(f"shape mismatch: x0 {x0.shape} vs eps {eps.shape}")
        alpha, sigma = self.alpha_sigma(t)
        return alpha * x0 + sigma * eps

    def to_dict(self) -> dict:
        return {"kind": self.kind, "beta0": self.beta0, "beta1": self.beta1, "horizon": self.horizon}

    @classmethod
    def from_dict(cls, d: dict | None) -> "Schedule":
        return cls(**(d or {}))


def t_for_sigma(sched: Schedule, sigma: float) -> float:
    """Invert sigma_t for a target noise level (used to place retraction depths)."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    target = -math.log1p(-sigma * sigma)
    if sched.kind == "constant":
        t = target / sched.beta0
    else:
        a = 0.5 * (sched.beta1 - sched.beta0) / sched.horizon
        b = sched.beta0
        t = (-b + math.sqrt(b * b + 4 * a * target)) / (2 * a) if a != 0 else target / b
    if t > sched.horizon:
        raise DomainError(f"sigma={sigma} not reached before T")
    return t
