"""Exact scores of Gaussian-mixture data diffused by a VP schedule.

A Gaussian mixture stays a Gaussian mixture under VP noising, so the score
of every marginal p_t is available in closed form and stands in for a
trained network.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .schedule import Schedule


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class GaussianComponent:
    """One mixture component.

    ``variance`` is an isotropic scale. ``covariance`` (optional, n x n SPD)
    overrides it for anisotropic components.
    """

    weight: float
    mean: tuple
    variance: float = 1.0
    covariance: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if not 0 < self.weight <= 1:
            raise ValueError("component weight must lie in (0, 1]")
        if self.covariance is None and not self.variance > 0:
            raise ValueError("variance must be positive")


def _logsumexp(a, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))).squeeze(axis)


class ScoreField:
    """Closed-form score s(x, t) = grad log p_t(x) of a diffused Gaussian mixture."""

    def __init__(self, components, schedule: Schedule | None = None):
        components = list(components)
        if not components:
            raise ValueError("need at least one component")
        self.components = tuple(components)
        self.schedule = schedule or Schedule()
        self.weights = np.array([c.weight for c in components], dtype=float)
        if abs(self.weights.sum() - 1.0) > 1e-10:
            raise ValueError(f"weights sum to {self.weights.sum()}, not 1")
        self.means = np.array([np.asarray(c.mean, dtype=float) for c in components])
        if self.means.ndim != 2:
            raise ValueError("all component means must have the same dimension")
        self.dim = self.means.shape[1]
        self.log_weights = np.log(self.weights)
        self.isotropic = all(c.covariance is None for c in components)
        if self.isotropic:
            self.variances = np.array([c.variance for c in components], dtype=float)
        else:
            eigvals, eigvecs = [], []
            for c in components:
                cov = (np.eye(self.dim) * c.variance if c.covariance is None
                       else np.asarray(c.covariance, dtype=float))
                if cov.shape != (self.dim, self.dim):
                    raise ValueError("covariance shape does not match the mean dimension")
                lam, Q = np.linalg.eigh(0.5 * (cov + cov.T))
                if lam.min() <= 0:
                    raise ValueError("covariance must be positive definite")
                eigvals.append(lam)
                eigvecs.append(Q)
            self.eigvals = np.array(eigvals)
            self.eigvecs = np.array(eigvecs)

    @property
    def n(self) -> int:
        return self.dim

    def diffused_params(self, t):
        """Means and variances of the mixture components of p_t.

        Returns ``(means_t, variances_t)``; for anisotropic fields the
        variances are per-eigendirection arrays of shape (C, n).
        """
        alpha, sigma = self.schedule.alpha_sigma(t)
        if self.isotropic:
            return alpha * self.means, self.variances * alpha**2 + sigma**2
        return alpha * self.means, self.eigvals * alpha**2 + sigma**2

    def _component_terms(self, x, t):
        """Per-component log-joint and the precision-weighted offsets (m_j - x)."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"point has dimension {x.shape[-1]}, field has {self.dim}")
        means_t, vars_t = self.diffused_params(t)
        diff = means_t - x[..., None, :]  # (..., C, n)
        if self.isotropic:
            d2 = np.sum(diff * diff, axis=-1)
            log_joint = (self.log_weights - 0.5 * self.dim * np.log(2 * math.pi * vars_t)
                         - 0.5 * d2 / vars_t)
            prec_diff = diff / vars_t[:, None]
        else:
            # rotate into each component's eigenbasis
            y = np.einsum("cij,...ci->...cj", self.eigvecs, diff)
            log_joint = (self.log_weights
                         - 0.5 * np.sum(np.log(2 * math.pi * vars_t), axis=-1)
                         - 0.5 * np.sum(y * y / vars_t, axis=-1))
            prec_diff = np.einsum("cij,...cj->...ci", self.eigvecs, y / vars_t)
        return log_joint, prec_diff

    def log_density(self, x, t):
        log_joint, _ = self._component_terms(x, t)
        return _logsumexp(log_joint, axis=-1)

    def responsibilities(self, x, t):
        log_joint, _ = self._component_terms(x, t)
        return np.exp(log_joint - _logsumexp(log_joint, axis=-1)[..., None])

    def score(self, x, t):
        """grad_x log p_t(x); accepts a single point or a batch (..., n)."""
        log_joint, prec_diff = self._component_terms(x, t)
        r = np.exp(log_joint - _logsumexp(log_joint, axis=-1)[..., None])
        s = np.sum(r[..., None] * prec_diff, axis=-2)
        if not np.all(np.isfinite(s)):
            raise FloatingPointError(f"non-finite score at t={t}")
        return s

    def sample(self, n_samples: int, rng: np.random.Generator, t: float = 0.0) -> np.ndarray:
        means_t, vars_t = self.diffused_params(t)
        idx = rng.choice(len(self.weights), size=n_samples, p=self.weights)
        eps = rng.standard_normal((n_samples, self.dim))
        if self.isotropic:
            return means_t[idx] + np.sqrt(vars_t[idx])[:, None] * eps
        return means_t[idx] + np.einsum("sij,sj->si", self.eigvecs[idx], np.sqrt(vars_t[idx]) * eps)


def standard_gaussian(dim: int, schedule: Schedule | None = None) -> ScoreField:
    """N(0, I): stationary under VP diffusion, so s(x, t) = -x for every t."""
    return ScoreField([GaussianComponent(1.0, tuple(np.zeros(dim)), 1.0)], schedule)


def make_curve_tube(curve, n_centers: int, tube_rho: float, schedule: Schedule | None = None) -> ScoreField:
    """Equal-weight components of variance tube_rho^2 spaced uniformly along a curve."""
    if n_centers < 2:
        raise ConfigurationError("need at least two centres")
    if not tube_rho > 0:
        raise ConfigurationError("tube_rho must be positive")
    if tube_rho >= curve.reach:
        raise ConfigurationError(
            f"tube_rho={tube_rho} must be below the reach {curve.reach} of the {curve.kind}"
        )
    lo, hi = curve.param_range
    us = np.linspace(lo, hi, n_centers, endpoint=not curve.periodic)
    w = 1.0 / n_centers
    comps = [GaussianComponent(w, tuple(curve.point_at(u)), tube_rho**2) for u in us]
    return ScoreField(comps, schedule)


def make_affine_gaussian(subspace, tangent_var: float, normal_var: float,
                         schedule: Schedule | None = None) -> ScoreField:
    """Single Gaussian elongated along an affine subspace.

    Its probability flow is linear, which gives a closed-form flow oracle.
    """
    B = subspace.basis
    P = B @ B.T
    cov = tangent_var * P + normal_var * (np.eye(subspace.ambient_dim) - P)
    return ScoreField([GaussianComponent(1.0, tuple(subspace.offset), 1.0, covariance=cov)], schedule)


def make_field(spec: dict, schedule: Schedule, manifold=None) -> ScoreField:
    """Build a field from config: a curve-tube recipe or an explicit component list."""
    kind = spec.get("kind", "curve_tube")
    if kind == "curve_tube":
        if manifold is None:
            raise ConfigurationError("curve_tube needs a manifold")
        return make_curve_tube(manifold, int(spec["n_centers"]), float(spec["tube_rho"]), schedule)
    if kind == "components":
        comps = [GaussianComponent(float(c["weight"]), tuple(c["mean"]), float(c["variance"]))
                 for c in spec["components"]]
        return ScoreField(comps, schedule)
    if kind == "standard_gaussian":
        return standard_gaussian(int(spec["dim"]), schedule)
    if kind == "affine_gaussian":
        if manifold is None:
            raise ConfigurationError("affine_gaussian needs an affine manifold")
        return make_affine_gaussian(manifold, float(spec["tangent_var"]), float(spec["normal_var"]), schedule)
    raise ConfigurationError(f"unknown score kind {kind!r}")
