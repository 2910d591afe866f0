"""Tangent frames from flow-propagated secants, Jacobian baselines and diagnostics."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig, T_MIN, integrate
from .score import ScoreField


class RankError(ValueError):
    """Requested frame dimension exceeds what the centred secants can span."""


@dataclass
class SecantEnsemble:
    base_latent: np.ndarray
    base_x: np.ndarray
    probes: np.ndarray  # (m, n), unit-scale directions xi_i
    sigma_pert: float
    members: np.ndarray  # (m, n); antithetic: the +xi half, then the -xi half
    antithetic: bool = False

    @property
    def secants(self) -> np.ndarray:
        """One-sided: x_i - x. Antithetic: +/- (x_i^+ - x_i^-)/2, free of the quadratic term."""
        if not self.antithetic:
            return self.members - self.base_x
        h = self.members.shape[0] // 2
        sym = 0.5 * (self.members[:h] - self.members[h:])
        return np.vstack([sym, -sym])

    @property
    def m(self) -> int:
        return self.members.shape[0]


def _fix_signs(U: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


@dataclass
class TangentFrame:
    footpoint: np.ndarray
    basis: np.ndarray  # (n, k) orthonormal columns
    singular_values: np.ndarray
    sigma_pert: float | None = None
    m: int | None = None
    warnings: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def project(self, v) -> np.ndarray:
        return self.basis @ (self.basis.T @ np.asarray(v, dtype=float))

    @classmethod
    def from_secants(cls, secants, k: int, footpoint, sigma_pert=None):
        """PCA of centred secants (rows of ``secants``) via a reduced SVD."""
        secants = np.asarray(secants, dtype=float)
        m, n = secants.shape
        if k < 1:
            raise RankError("frame dimension k must be >= 1")
        if k > m - 1:
            raise RankError(f"k={k} exceeds m-1={m - 1}: centring removes one degree of freedom")
        if k > n:
            raise RankError(f"k={k} exceeds ambient dimension {n}")
        D = (secants - secants.mean(axis=0)).T  # n x m
        U, S, _ = np.linalg.svd(D, full_matrices=False)
        if not S[0] > 0:
            raise RankError("all centred secants vanish")
        warns = []
        if S[k - 1] / S[0] < 1e-10:
            warns.append(f"degenerate frame: s_k/s_1 = {S[k - 1] / S[0]:.3g}")
        if k < len(S) and S[k - 1] > 0 and (S[k - 1] - S[k]) <= 1e-6 * S[k - 1]:
            warns.append("degenerate frame: s_k and s_(k+1) tie, basis order is arbitrary")
        return cls(np.asarray(footpoint, dtype=float).copy(), _fix_signs(U[:, :k]), S[:k].copy(),
                   sigma_pert, m, warns)

    def to_dict(self) -> dict:
        return {
            "footpoint": self.footpoint.tolist(),
            "basis": self.basis.T.tolist(),
            "singular_values": self.singular_values.tolist(),
            "sigma": self.sigma_pert,
            "m": self.m,
            "k": self.k,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "TangentFrame":
        return cls(np.array(d["footpoint"], dtype=float), np.array(d["basis"], dtype=float).T,
                   np.array(d["singular_values"], dtype=float), d.get("sigma"), d.get("m"))


def generate_ensemble(field: ScoreField, z, m: int, sigma_pert: float,
                      flow_cfg: FlowConfig | None, rng: np.random.Generator,
                      antithetic: bool = False, probes=None) -> SecantEnsemble:
    """Perturb the latent, z_i = z + sigma xi_i, and push every z_i through Phi.

    With ``antithetic`` the mirrored probes z - sigma xi_i are appended (2m members).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if not sigma_pert > 0:
        raise ValueError("sigma_pert must be positive")
    z = np.asarray(z, dtype=float)
    flow_cfg = flow_cfg or FlowConfig()
    xi = rng.standard_normal((m, z.shape[0])) if probes is None else np.asarray(probes, dtype=float)
    if antithetic:
        xi = np.vstack([xi, -xi])
    latents = np.vstack([z[None, :], z + sigma_pert * xi])
    out = integrate(field, latents, flow_cfg)
    return SecantEnsemble(z.copy(), out[0], xi, float(sigma_pert), out[1:], antithetic)


def estimate_frame(ens: SecantEnsemble, k: int) -> TangentFrame:
    return TangentFrame.from_secants(ens.secants, k, ens.base_x, ens.sigma_pert)


def fd_jacobian(fn, z, h: float | None = None) -> np.ndarray:
    """Central-difference Jacobian, one column per coordinate direction."""
    z = np.asarray(z, dtype=float)
    if h is None:
        h = 1e-4 * (1.0 + np.linalg.norm(z))
    if not h > 0:
        raise ValueError("step h must be positive")
    n = z.shape[0]
    E = np.eye(n) * h
    plus = np.array([fn(z + E[j]) for j in range(n)])
    minus = np.array([fn(z - E[j]) for j in range(n)])
    J = ((plus - minus) / (2.0 * h)).T
    if not np.all(np.isfinite(J)):
        raise FloatingPointError("non-finite Jacobian entries")
    return J


def posterior_mean(field: ScoreField, x, t: float) -> np.ndarray:
    """Tweedie denoiser x0_hat = (x + sigma_t^2 s(x, t)) / alpha_t."""
    if not T_MIN < t <= field.schedule.T:
        raise ValueError(f"posterior_mean needs t in ({T_MIN}, T]")
    alpha, sigma = field.schedule.alpha_sigma(t)
    if alpha < 1e-8:
        raise ArithmeticError("alpha_t too small to invert")
    x = np.asarray(x, dtype=float)
    return (x + sigma**2 * field.score(x, t)) / alpha


def loco_baseline_frame(field: ScoreField, x_t, t: float, k: int = 1, h: float | None = None) -> TangentFrame:
    """Top-k left singular vectors of the posterior-mean Jacobian at x_t."""
    J = fd_jacobian(lambda y: posterior_mean(field, y, t), x_t, h)
    U, S, _ = np.linalg.svd(J)
    warns = []
    if k < len(S) and abs(S[k - 1] - S[k]) <= 1e-6 * max(S[k - 1], 1e-300):
        warns.append("degenerate frame: Jacobian singular values tie")
    return TangentFrame(posterior_mean(field, x_t, t), _fix_signs(U[:, :k]), S[:k].copy(), warnings=warns)


def subspace_deviation(T_basis, S_basis) -> float:
    """||P_T^perp P_S||_2, the sine of the largest principal angle from S to T."""
    T_basis = np.atleast_2d(np.asarray(T_basis, dtype=float))
    S_basis = np.atleast_2d(np.asarray(S_basis, dtype=float))
    if T_basis.shape[0] == 1 and T_basis.shape[1] > 1:
        T_basis = T_basis.T
    if S_basis.shape[0] == 1 and S_basis.shape[1] > 1:
        S_basis = S_basis.T
    for B in (T_basis, S_basis):
        if np.abs(B.T @ B - np.eye(B.shape[1])).max() > 1e-6:
            raise ValueError("basis is not orthonormal")
    resid = S_basis - T_basis @ (T_basis.T @ S_basis)
    return float(min(1.0, np.linalg.norm(resid, 2)))


def angle_deg(deviation: float) -> float:
    return math.degrees(math.asin(min(1.0, max(0.0, deviation))))


def directional_derivatives(fn, z, xi, h: float = 1e-2):
    """Fourth-order central differences for D fn(z) xi and D^2 fn(z)[xi, xi]."""
    z = np.asarray(z, dtype=float)
    xi = np.asarray(xi, dtype=float)
    f = {j: fn(z + j * h * xi) for j in (-2, -1, 0, 1, 2)}
    d1 = (-f[2] + 8 * f[1] - 8 * f[-1] + f[-2]) / (12 * h)
    d2 = (-f[2] + 16 * f[1] - 30 * f[0] + 16 * f[-1] - f[-2]) / (12 * h * h)
    return f[0], d1, d2


def truncation_order(fn, z, xi, sigmas, h: float = 1e-2):
    """Fitted power of the residual after the second-order Taylor model.

    Returns ``(slope, residual_norms)``; slope is None when the residual is
    below 1e-12 everywhere (a flow that is too linear to fit).
    """
    sigmas = np.asarray(sorted(sigmas, reverse=True), dtype=float)
    if len(sigmas) < 3:
        raise ValueError("need at least three sigma values")
    f0, d1, d2 = directional_derivatives(fn, z, xi, h)
    xi = np.asarray(xi, dtype=float)
    z = np.asarray(z, dtype=float)
    res = np.array([np.linalg.norm(fn(z + s * xi) - f0 - s * d1 - 0.5 * s * s * d2) for s in sigmas])
    if np.all(res < 1e-12) or np.any(res <= 0):
        return None, res
    slope = np.polyfit(np.log(sigmas), np.log(res), 1)[0]
    return float(slope), res


def rank_ratio(samples, eta_var: float = 0.99) -> float:
    """r*/d_max where r* is the fewest principal directions holding eta_var of the variance.

    ``samples`` is n x N with one sample per column; the mean sample is removed first.
    """
    X = np.asarray(samples, dtype=float)
    if X.ndim != 2 or X.shape[1] < 2:
        raise ValueError("need an n x N matrix with N >= 2")
    if not 0 < eta_var < 1:
        raise ValueError("eta_var must lie in (0, 1)")
    X = X - X.mean(axis=1, keepdims=True)
    s = np.linalg.svd(X, compute_uv=False)
    total = np.sum(s**2)
    if total == 0:
        raise ValueError("all-zero sample matrix")
    frac = np.cumsum(s**2) / total
    r_star = int(np.argmax(frac >= eta_var - 1e-12)) + 1
    return r_star / min(X.shape)


def differential_target(field: ScoreField, manifold, z, flow_cfg: FlowConfig | None = None, h=None):
    """M_star = DPi DPi^T with Pi = pi o Phi, on an oracle manifold.

    Returns ``(M_star, U_star, DPi)``; U_star holds the top-d eigenvectors.
    """
    flow_cfg = flow_cfg or FlowConfig()
    Phi = lambda y: integrate(field, y, flow_cfg)
    DPhi = fd_jacobian(Phi, z, h)
    x = Phi(z)
    Dpi = fd_jacobian(lambda y: manifold.nearest_point(y, strict=False), x, h)
    DPi = Dpi @ DPhi
    M = DPi @ DPi.T
    lam, V = np.linalg.eigh(M)
    U_star = V[:, ::-1][:, : manifold.intrinsic_dim]
    return M, _fix_signs(U_star), DPi


def s_min(DPi, probes) -> float:
    """sigma_min(DPi Xi) for probes stacked as rows."""
    A = DPi @ np.asarray(probes, dtype=float).T
    return float(np.linalg.svd(A, compute_uv=False).min())
