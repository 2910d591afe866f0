"""Analytic manifolds with exact nearest-point projection, tangents and curvature.

All manifolds live in the first few coordinates of R^n; the remaining
coordinates are zero padding so the same curve can be studied in higher
ambient dimension.
"""

from __future__ import annotations

import math

import numpy as np


class AmbiguityError(ValueError):
    """Point is at or beyond the reach, so the nearest point is not unique."""


class ManifoldOracle:
    """Base class. Subclasses fill in the geometry."""

    kind = "abstract"
    ambient_dim: int
    intrinsic_dim: int

    @property
    def reach(self) -> float:
        raise NotImplementedError

    def _nearest(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def tangent_basis(self, footpoint) -> np.ndarray:
        raise NotImplementedError

    def curvature(self, footpoint) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _as_point(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.ambient_dim,):
            raise ValueError(f"expected a point of shape ({self.ambient_dim},), got {x.shape}")
        return x

    def nearest_point(self, x, strict: bool = True) -> np.ndarray:
        """Footpoint pi(x). With ``strict`` the point must lie inside the reach."""
        x = self._as_point(x)
        p = self._nearest(x)
        if strict and not np.linalg.norm(x - p) < self.reach:
            raise AmbiguityError(
                f"distance {np.linalg.norm(x - p):.4g} is not below reach {self.reach:.4g}"
            )
        return p

    def distance(self, x) -> float:
        x = self._as_point(x)
        return float(np.linalg.norm(x - self._nearest(x)))

    def slack(self, x, strict: bool = True):
        """Return ``(footpoint, s(x), |s(x)|)`` where s(x) = x - pi(x)."""
        x = self._as_point(x)
        p = self.nearest_point(x, strict=strict)
        s = x - p
        U = self.tangent_basis(p)
        tol = 1e-8 * max(1.0, float(np.linalg.norm(x)))
        if np.linalg.norm(U.T @ s) > tol:
            raise ArithmeticError("slack is not normal to the tangent space")
        return p, s, float(np.linalg.norm(s))

    def _check_on(self, footpoint) -> np.ndarray:
        p = self._as_point(footpoint)
        if np.linalg.norm(p - self._nearest(p)) > 1e-8:
            raise ValueError("footpoint is not on the manifold")
        return p

    def tangent_projector(self, footpoint) -> np.ndarray:
        U = self.tangent_basis(footpoint)
        return U @ U.T

    # curve-only helpers; d == 1 manifolds override these
    param_range: tuple[float, float] | None = None
    periodic = False

    def point_at(self, u) -> np.ndarray:
        raise NotImplementedError(f"{self.kind} is not a parametrised curve")

    def param_of(self, footpoint) -> float:
        raise NotImplementedError(f"{self.kind} is not a parametrised curve")

    def arclength_between(self, u0: float, u1: float) -> float:
        """Signed arc length from parameter u0 to u1."""
        us = np.linspace(u0, u1, 2049)
        pts = np.array([self.point_at(u) for u in us])
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1).sum()
        return float(math.copysign(seg, u1 - u0))

    def _pad(self, v) -> np.ndarray:
        out = np.zeros(self.ambient_dim)
        v = np.asarray(v, dtype=float)
        out[: v.shape[0]] = v
        return out


class AffineSubspace(ManifoldOracle):
    kind = "affine_subspace"

    def __init__(self, basis, offset=None):
        basis = np.atleast_2d(np.asarray(basis, dtype=float))
        if basis.shape[0] < basis.shape[1]:
            basis = basis.T
        n, d = basis.shape
        if d >= n:
            raise ValueError("intrinsic dimension must be smaller than ambient dimension")
        q, r = np.linalg.qr(basis)
        if np.min(np.abs(np.diag(r))) < 1e-12:
            raise ValueError("basis is rank deficient")
        # keep the orientation of the supplied columns
        self.basis = q * np.sign(np.diag(r))
        self.offset = np.zeros(n) if offset is None else np.asarray(offset, dtype=float).copy()
        self.ambient_dim, self.intrinsic_dim = n, d

    @property
    def reach(self) -> float:
        return math.inf

    def _nearest(self, x):
        return self.offset + self.basis @ (self.basis.T @ (x - self.offset))

    def tangent_basis(self, footpoint):
        self._check_on(footpoint)
        return self.basis.copy()

    def curvature(self, footpoint):
        self._check_on(footpoint)
        return 0.0

    def coords(self, footpoint) -> np.ndarray:
        return self.basis.T @ (np.asarray(footpoint, dtype=float) - self.offset)

    def to_dict(self):
        return {"kind": self.kind, "basis": self.basis.T.tolist(), "offset": self.offset.tolist()}


class Line(AffineSubspace):
    """The x-axis segment, parametrised by its first coordinate."""

    kind = "line"

    def __init__(self, ambient_dim: int = 2, half_length: float = 1.0):
        basis = np.zeros((ambient_dim, 1))
        basis[0, 0] = 1.0
        super().__init__(basis)
        self.half_length = float(half_length)
        self.param_range = (-self.half_length, self.half_length)

    def point_at(self, u):
        return self._pad([u])

    def param_of(self, footpoint):
        return float(np.asarray(footpoint)[0])

    def arclength_between(self, u0, u1):
        return float(u1 - u0)

    def to_dict(self):
        return {"kind": self.kind, "ambient_dim": self.ambient_dim, "half_length": self.half_length}


class Parabola(ManifoldOracle):
    """The curve y = a*u^2 in the (e1, e2) plane."""

    kind = "parabola"
    intrinsic_dim = 1

    def __init__(self, a: float = 1.0, ambient_dim: int = 2, half_width: float = 1.0):
        if a < 0:
            raise ValueError("use a >= 0")
        if ambient_dim < 2:
            raise ValueError("a parabola needs ambient_dim >= 2")
        self.a = float(a)
        self.ambient_dim = int(ambient_dim)
        self.half_width = float(half_width)
        self.param_range = (-self.half_width, self.half_width)

    @property
    def reach(self):
        return math.inf if self.a == 0 else 1.0 / (2.0 * self.a)

    def point_at(self, u):
        return self._pad([u, self.a * u * u])

    def param_of(self, footpoint):
        return float(np.asarray(footpoint)[0])

    def _stationarity(self, u, x1, x2):
        # derivative of 0.5*|(u, a u^2) - (x1, x2)|^2
        return (u - x1) + 2.0 * self.a * u * (self.a * u * u - x2)

    def _solve_param(self, x1: float, x2: float, n_grid: int = 1024, n_refine: int = 40) -> float:
        a = self.a
        if a == 0:
            return x1
        # |u - x1| <= dist <= distance to the curve point above/below x1
        r = abs(a * x1 * x1 - x2) + 1e-12
        grid = np.linspace(x1 - r, x1 + r, n_grid)
        d2 = (grid - x1) ** 2 + (a * grid * grid - x2) ** 2
        i = int(np.argmin(d2))
        lo = grid[max(i - 1, 0)]
        hi = grid[min(i + 1, n_grid - 1)]
        g_lo = self._stationarity(lo, x1, x2)
        g_hi = self._stationarity(hi, x1, x2)
        if g_lo > 0 or g_hi < 0:
            return float(grid[i])
        u = float(grid[i])
        for _ in range(n_refine):
            g = self._stationarity(u, x1, x2)
            if g == 0:
                break
            if g < 0:
                lo = u
            else:
                hi = u
            dg = 1.0 + 2.0 * a * (3.0 * a * u * u - x2)
            step = u - g / dg if dg > 0 else 0.5 * (lo + hi)
            # Newton inside the bracket, bisection otherwise
            u = step if lo < step < hi else 0.5 * (lo + hi)
        return u

    def _nearest(self, x):
        u = self._solve_param(float(x[0]), float(x[1]))
        return self.point_at(u)

    def tangent_basis(self, footpoint):
        p = self._check_on(footpoint)
        t = self._pad([1.0, 2.0 * self.a * p[0]])
        return (t / np.linalg.norm(t))[:, None]

    def curvature(self, footpoint):
        p = self._check_on(footpoint)
        u = p[0]
        return float(2.0 * self.a / (1.0 + 4.0 * self.a**2 * u * u) ** 1.5)

    def arclength_between(self, u0, u1):
        a = self.a
        if a == 0:
            return float(u1 - u0)

        def s(u):
            w = 2.0 * a * u
            return (w * math.sqrt(1 + w * w) + math.asinh(w)) / (4.0 * a)

        return float(s(u1) - s(u0))

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "ambient_dim": self.ambient_dim, "half_width": self.half_width}


class Circle(ManifoldOracle):
    """Circle of radius r centred at the origin of the (e1, e2) plane."""

    kind = "circle"
    intrinsic_dim = 1
    periodic = True

    def __init__(self, r: float = 1.0, ambient_dim: int = 2):
        if r <= 0:
            raise ValueError("radius must be positive")
        if ambient_dim < 2:
            raise ValueError("a circle needs ambient_dim >= 2")
        self.r = float(r)
        self.ambient_dim = int(ambient_dim)
        self.param_range = (0.0, 2.0 * math.pi)

    @property
    def reach(self):
        return self.r

    def point_at(self, u):
        return self._pad([self.r * math.cos(u), self.r * math.sin(u)])

    def param_of(self, footpoint):
        p = np.asarray(footpoint)
        return float(math.atan2(p[1], p[0]))

    def _nearest(self, x):
        rho = math.hypot(x[0], x[1])
        if rho == 0.0:
            raise AmbiguityError("the centre of the circle has no unique footpoint")
        return self._pad([self.r * x[0] / rho, self.r * x[1] / rho])

    def tangent_basis(self, footpoint):
        p = self._check_on(footpoint)
        return (self._pad([-p[1], p[0]]) / self.r)[:, None]

    def curvature(self, footpoint):
        self._check_on(footpoint)
        return 1.0 / self.r

    def arclength_between(self, u0, u1):
        return float(self.r * (u1 - u0))

    def to_dict(self):
        return {"kind": self.kind, "r": self.r, "ambient_dim": self.ambient_dim}


class Sphere(ManifoldOracle):
    """Sphere of radius r in the first ``n`` coordinates (intrinsic dim n-1)."""

    kind = "sphere"

    def __init__(self, r: float = 1.0, n: int = 3, ambient_dim: int | None = None):
        if r <= 0 or n < 2:
            raise ValueError("need r > 0 and n >= 2")
        self.r = float(r)
        self.n = int(n)
        self.ambient_dim = int(ambient_dim or n)
        if self.ambient_dim < self.n:
            raise ValueError("ambient_dim must be at least n")
        self.intrinsic_dim = self.n - 1

    @property
    def reach(self):
        return self.r

    def _nearest(self, x):
        head = x[: self.n]
        nrm = np.linalg.norm(head)
        if nrm == 0.0:
            raise AmbiguityError("the centre of the sphere has no unique footpoint")
        return self._pad(self.r * head / nrm)

    def tangent_basis(self, footpoint):
        p = self._check_on(footpoint)
        normal = p[: self.n] / self.r
        # orthonormal complement of the normal inside the sphere's coordinates
        q, _ = np.linalg.qr(np.column_stack([normal, np.eye(self.n)]))
        U = np.zeros((self.ambient_dim, self.n - 1))
        U[: self.n] = q[:, 1:]
        return U

    def curvature(self, footpoint):
        self._check_on(footpoint)
        return 1.0 / self.r

    def to_dict(self):
        return {"kind": self.kind, "r": self.r, "n": self.n, "ambient_dim": self.ambient_dim}


def make_manifold(spec: dict) -> ManifoldOracle:
    """Build an oracle from a config mapping such as ``{"kind": "circle", "r": 1}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "line":
        return Line(**spec)
    if kind == "parabola":
        return Parabola(**spec)
    if kind == "circle":
        return Circle(**spec)
    if kind == "sphere":
        return Sphere(**spec)
    if kind == "affine_subspace":
        return AffineSubspace(spec["basis"], spec.get("offset"))
    raise ValueError(f"unknown manifold kind {kind!r}")
