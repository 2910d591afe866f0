"""Probability-flow ODE integration, the backward map Phi and the retraction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .score import ScoreField

# Integration floor: tight tubes make the score stiff as t -> 0.
T_MIN = 1e-3


class IntegrationError(RuntimeError):
    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class FlowConfig:
    method: str = "heun"
    n_steps: int = 100
    t_start: float | None = None  # None means the schedule horizon T
    t_end: float = T_MIN

    def __post_init__(self):
        if self.method not in ("euler", "heun"):
            raise ValueError(f"unknown integrator {self.method!r}")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


@dataclass(frozen=True)
class RetractionConfig:
    t_retract: float = 0.2
    n_steps: int = 5
    noise_mode: str = "shared"
    method: str = "heun"
    t_min: float = T_MIN

    def __post_init__(self):
        if self.noise_mode not in ("shared", "independent", "deterministic"):
            raise ValueError(f"unknown noise mode {self.noise_mode!r}")
        if not self.t_retract > 0:
            raise ValueError("t_retract must be positive")
        if self.n_steps < 1:
            raise ValueError("n_steps must be >= 1")


def pf_drift(field: ScoreField, x, t: float) -> np.ndarray:
    """Right-hand side -1/2 beta(t) (x + s(x, t)) of the probability-flow ODE."""
    if not 0 < t <= field.schedule.T:
        raise ValueError(f"pf_drift needs t in (0, T], got {t}")
    b = field.schedule.beta(t)
    x = np.asarray(x, dtype=float)
    return -0.5 * b * (x + field.score(x, t))


def integrate(field: ScoreField, x_init, cfg: FlowConfig) -> np.ndarray:
    """Integrate the PF ODE on a uniform grid from ``cfg.t_start`` to ``cfg.t_end``.

    Works on one point or a batch (..., n); direction follows the sign of
    ``t_end - t_start``. Euler on a decreasing grid is exactly the
    x_{k-1} = x_k + [1/2 beta x + 1/2 beta s] dt update.
    """
    t0 = field.schedule.T if cfg.t_start is None else cfg.t_start
    t1 = cfg.t_end
    if t0 == t1:
        return np.array(x_init, dtype=float)
    ts = np.linspace(t0, t1, cfg.n_steps + 1)
    x = np.array(x_init, dtype=float)
    for k in range(cfg.n_steps):
        ta, tb = ts[k], ts[k + 1]
        h = tb - ta
        try:
            fa = pf_drift(field, x, ta)
            if cfg.method == "euler":
                x = x + h * fa
            else:
                x_pred = x + h * fa
                fb = pf_drift(field, x_pred, tb)
                x = x + 0.5 * h * (fa + fb)
        except FloatingPointError as exc:
            raise IntegrationError(str(exc), k) from exc
        if not np.all(np.isfinite(x)):
            raise IntegrationError("non-finite state", k)
    return x


def phi(field: ScoreField, z, n_steps: int = 100, method: str = "heun", t_min: float = T_MIN) -> np.ndarray:
    """Backward PF map: latent noise at t=T to data at t=t_min."""
    return integrate(field, z, FlowConfig(method=method, n_steps=n_steps, t_start=None, t_end=t_min))


def retract(field: ScoreField, x, ensemble, cfg: RetractionConfig, rng: np.random.Generator | None = None):
    """Noising-denoising retraction of ``x`` and its ensemble, done jointly.

    Noising maps p -> alpha p + sigma eps (eps shared, per point, or zero);
    denoising integrates each point back to ``cfg.t_min``.
    Returns ``(x_new, members_new)``.
    """
    x = np.asarray(x, dtype=float)
    members = np.asarray(ensemble, dtype=float).reshape(-1, x.shape[-1])
    pts = np.vstack([x[None, :], members])
    if cfg.t_retract > field.schedule.T:
        raise ValueError("t_retract exceeds the schedule horizon")
    alpha, sigma = field.schedule.alpha_sigma(cfg.t_retract)
    if cfg.noise_mode == "deterministic":
        noised = alpha * pts
    else:
        if rng is None:
            raise ValueError(f"noise_mode={cfg.noise_mode!r} needs an rng")
        if cfg.noise_mode == "shared":
            eps = rng.standard_normal(x.shape[-1])[None, :]
        else:
            eps = rng.standard_normal(pts.shape)
        noised = alpha * pts + sigma * eps
    out = integrate(field, noised, FlowConfig(method=cfg.method, n_steps=cfg.n_steps,
                                              t_start=cfg.t_retract, t_end=cfg.t_min))
    return out[0], out[1:]
