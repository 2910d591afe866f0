"""GeoEdit: projected tangent steps alternated with noising-denoising retractions."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowConfig, RetractionConfig, phi, retract
from .score import ScoreField
from .tangent import RankError, TangentFrame, generate_ensemble, subspace_deviation


@dataclass(frozen=True)
class GuidanceSpec:
    """Ambient edit direction g(x).

    kind is one of ``basis_direction`` (index, sign), ``toward_target``
    (target), ``linear`` (direction) or ``surrogate_cosine`` (embed, text).
    """

    kind: str
    index: int = 0
    sign: float = 1.0
    target: tuple | None = None
    direction: tuple | None = None
    embed: np.ndarray | None = field(default=None, compare=False)
    text: tuple | None = None

    def __post_init__(self):
        if self.kind not in ("basis_direction", "toward_target", "linear", "surrogate_cosine"):
            raise ValueError(f"unknown guidance kind {self.kind!r}")
        if self.kind == "surrogate_cosine":
            if self.embed is None or self.text is None:
                raise ValueError("surrogate_cosine needs embed and text")
            if not np.linalg.norm(self.text) > 0:
                raise ValueError("text vector must be nonzero")
        if self.kind == "toward_target" and self.target is None:
            raise ValueError("toward_target needs a target")
        if self.kind == "linear" and self.direction is None:
            raise ValueError("linear guidance needs a direction")


def surrogate_cosine(E, c, x) -> float:
    """cos(Ex, c), the stand-in for an image-text similarity score."""
    e = np.asarray(E) @ np.asarray(x, dtype=float)
    c = np.asarray(c, dtype=float)
    ne = np.linalg.norm(e)
    if ne == 0:
        raise ZeroDivisionError("embedding Ex vanishes")
    return float(e @ c / (ne * np.linalg.norm(c)))


def guidance_objective(spec: GuidanceSpec, x) -> float:
    """Scalar the guidance ascends (nan for pure basis traversals)."""
    x = np.asarray(x, dtype=float)
    if spec.kind == "toward_target":
        d = x - np.asarray(spec.target, dtype=float)
        return float(-0.5 * d @ d)
    if spec.kind == "linear":
        return float(np.asarray(spec.direction, dtype=float) @ x)
    if spec.kind == "surrogate_cosine":
        return surrogate_cosine(spec.embed, spec.text, x)
    return math.nan


def guidance_vector(spec: GuidanceSpec, x, frame: TangentFrame | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if spec.kind == "basis_direction":
        if frame is None:
            raise ValueError("basis_direction guidance needs a frame")
        if not 0 <= spec.index < frame.k:
            raise IndexError(f"basis index {spec.index} out of range for k={frame.k}")
        return spec.sign * frame.basis[:, spec.index]
    if spec.kind == "toward_target":
        return np.asarray(spec.target, dtype=float) - x
    if spec.kind == "linear":
        return np.asarray(spec.direction, dtype=float).copy()
    E = np.asarray(spec.embed, dtype=float)
    c = np.asarray(spec.text, dtype=float)
    e = E @ x
    ne = np.linalg.norm(e)
    if ne == 0:
        raise ZeroDivisionError("embedding Ex vanishes")
    nc = np.linalg.norm(c)
    cos = e @ c / (ne * nc)
    return E.T @ c / (ne * nc) - cos * (E.T @ e) / ne**2


@dataclass(frozen=True)
class EditConfig:
    step_size: float = 0.1
    iterations: int = 64
    refresh_period: int = 4
    ensemble_size: int = 10
    sigma_pert: float = 0.2
    frame_dim: int = 1
    retraction: RetractionConfig = RetractionConfig()
    guidance: GuidanceSpec | None = None
    normalize_guidance: bool = False
    # "before": eta * P (g/|g|), as in projected CLIP ascent; "after": eta * Pg/|Pg|
    normalize_order: str = "before"
    project: bool = True
    flow: FlowConfig = FlowConfig()

    def __post_init__(self):
        if self.refresh_period < 1 or self.iterations < 1:
            raise ValueError("refresh_period and iterations must be >= 1")
        if self.normalize_order not in ("before", "after"):
            raise ValueError("normalize_order must be 'before' or 'after'")
        if self.step_size < 0:
            raise ValueError("step_size must be nonnegative")


@dataclass
class EditState:
    x: np.ndarray
    members: np.ndarray
    frame: TangentFrame | None = None
    # frame already valid for iteration 1 (Jacobian starts)
    skip_first_refresh: bool = False


@dataclass
class TraceRecord:
    iteration: int
    x: np.ndarray
    step: np.ndarray
    loss: float
    tube_dist: float
    deviation: float
    refresh: bool
    pre_tube_dist: float = math.nan
    normal_step: float = math.nan
    param: float = math.nan


@dataclass
class EditTrace:
    records: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    @property
    def xs(self) -> np.ndarray:
        return np.array([r.x for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = len(self.records[0].x) if self.records else 0
        w.writerow(["iter", "loss", "tube_dist", "deviation", "refresh_flag"] + [f"x{j}" for j in range(n)])
        for r in self.records:
            w.writerow([r.iteration, repr(float(r.loss)), repr(float(r.tube_dist)),
                        repr(float(r.deviation)), "true" if r.refresh else "false"] + [repr(float(v)) for v in r.x])
        return buf.getvalue()

    def to_dict(self) -> dict:
        recs = []
        for r in self.records:
            recs.append({
                "iter": r.iteration, "loss": _jsonable(r.loss), "tube_dist": _jsonable(r.tube_dist),
                "deviation": _jsonable(r.deviation), "refresh_flag": bool(r.refresh),
                "pre_tube_dist": _jsonable(r.pre_tube_dist), "normal_step": _jsonable(r.normal_step),
                "param": _jsonable(r.param), "x": [float(v) for v in r.x],
                "step": [float(v) for v in r.step],
            })
        return {"records": recs, "warnings": list(self.warnings)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _jsonable(v):
    v = float(v)
    return None if math.isnan(v) else v


def _oracle_metrics(oracle, x, frame):
    if oracle is None:
        return math.nan, math.nan, math.nan
    fp = oracle.nearest_point(x, strict=False)
    dist = float(np.linalg.norm(x - fp))
    dev = math.nan
    if frame is not None:
        try:
            dev = subspace_deviation(oracle.tangent_basis(fp), frame.basis)
        except ValueError:
            pass
    try:
        param = oracle.param_of(fp)
    except NotImplementedError:
        param = math.nan
    return dist, dev, param


def _step_direction(cfg: EditConfig, g, frame: TangentFrame | None):
    if cfg.normalize_guidance and cfg.normalize_order == "before":
        ng = np.linalg.norm(g)
        g = g / ng if ng > 0 else g
    v = frame.project(g) if cfg.project else g
    if cfg.normalize_guidance and cfg.normalize_order == "after":
        nv = np.linalg.norm(v)
        v = v / nv if nv > 0 else v
    return v


def run_loop(field: ScoreField, state: EditState, cfg: EditConfig, rng: np.random.Generator,
             oracle=None, descent_grad=None, loss_fn=None):
    """Iterate refresh / project / step / retract from ``state``.

    ``descent_grad`` switches to projected descent: v = P grad f(x), x <- x - eta v.
    Returns ``(x, trace)``.
    """
    if cfg.guidance is None and descent_grad is None:
        raise ValueError("need a guidance spec or a descent gradient")
    x = state.x.copy()
    members = state.members.copy()
    frame = state.frame
    trace = EditTrace()

    def loss_of(y):
        if loss_fn is not None:
            return float(loss_fn(y))
        return guidance_objective(cfg.guidance, y) if cfg.guidance is not None else math.nan

    dist, dev, param = _oracle_metrics(oracle, x, frame)
    trace.records.append(TraceRecord(0, x.copy(), np.zeros_like(x), loss_of(x), dist, dev, False, param=param))
    for it in range(1, cfg.iterations + 1):
        refresh = (it == 1 and not state.skip_first_refresh) or it % cfg.refresh_period == 0
        if refresh:
            prev = frame
            try:
                frame = TangentFrame.from_secants(members - x, cfg.frame_dim, x, cfg.sigma_pert)
            except RankError as exc:
                # only an estimated frame can stand in; a seeded Jacobian basis cannot
                if prev is None or not np.all(np.isfinite(prev.singular_values)):
                    raise
                # collapsed ensemble: keep the last good frame and say so
                trace.warnings.append({"iteration": it, "message": f"degenerate frame, kept previous: {exc}"})
                refresh = False
                frame = prev
                prev = None
            if prev is not None and prev.k == frame.k:
                # keep traversal directions continuous across refreshes
                flip = np.sign(np.sum(frame.basis * prev.basis, axis=0))
                flip[flip == 0] = 1.0
                frame.basis = frame.basis * flip
            for w in frame.warnings:
                trace.warnings.append({"iteration": it, "message": w})
        if descent_grad is not None:
            g = -np.asarray(descent_grad(x), dtype=float)
        else:
            g = guidance_vector(cfg.guidance, x, frame)
        v = _step_direction(cfg, g, frame)
        x = x + cfg.step_size * v
        members = members + cfg.step_size * v
        pre_dist = normal_step = math.nan
        if oracle is not None:
            pre_dist = oracle.distance(x)
            fp = oracle.nearest_point(x - cfg.step_size * v, strict=False)
            U = oracle.tangent_basis(fp)
            sv = cfg.step_size * v
            normal_step = float(np.linalg.norm(sv - U @ (U.T @ sv)))
        x, members = retract(field, x, members, cfg.retraction, rng)
        dist, dev, param = _oracle_metrics(oracle, x, frame)
        trace.records.append(TraceRecord(it, x.copy(), cfg.step_size * v, loss_of(x), dist, dev,
                                          refresh, pre_dist, normal_step, param))
    state.x, state.members, state.frame = x, members, frame
    return x, trace


def initial_state(field: ScoreField, z, cfg: EditConfig, rng: np.random.Generator) -> EditState:
    """x = Phi(z) and the one-sided ensemble x_i = Phi(z + sigma xi_i)."""
    ens = generate_ensemble(field, z, cfg.ensemble_size, cfg.sigma_pert, cfg.flow, rng)
    return EditState(ens.base_x.copy(), ens.members.copy())


def geoedit_run(field: ScoreField, z, cfg: EditConfig, rng: np.random.Generator, oracle=None):
    """The full edit loop from a latent z. Returns ``(x, trace)``."""
    state = initial_state(field, z, cfg, rng)
    return run_loop(field, state, cfg, rng, oracle)


def jacobian_start(field: ScoreField, x, U0, eps_anchor: float, cfg: EditConfig | None = None) -> EditState:
    """Seed the loop with a known basis U0 and anchors x +/- eps u_j.

    The first iteration uses U0 directly; later refreshes run PCA on the
    anchor secants. Anchors come in +/- pairs so the centred secants keep
    rank d.
    """
    U0 = np.asarray(U0, dtype=float)
    if U0.ndim == 1:
        U0 = U0[:, None]
    if np.abs(U0.T @ U0 - np.eye(U0.shape[1])).max() > 1e-8:
        raise ValueError("U0 must have orthonormal columns")
    x = np.asarray(x, dtype=float)
    anchors = np.vstack([x + eps_anchor * U0.T, x - eps_anchor * U0.T])
    frame = TangentFrame(x.copy(), U0.copy(), np.full(U0.shape[1], np.nan))
    return EditState(x.copy(), anchors, frame, skip_first_refresh=True)


def fd_gradient(f, x, h: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def projected_gd(field: ScoreField, f, z, cfg: EditConfig, rng: np.random.Generator,
                 grad=None, oracle=None, state: EditState | None = None):
    """Projected descent x <- Retract(x - eta P grad f(x)); trace records f(x)."""
    grad = grad or (lambda y: fd_gradient(f, y))
    if state is None:
        state = initial_state(field, z, cfg, rng)
    return run_loop(field, state, cfg, rng, oracle, descent_grad=grad, loss_fn=f)


__all__ = [
    "EditConfig", "EditState", "EditTrace", "GuidanceSpec", "TraceRecord", "RankError",
    "fd_gradient", "geoedit_run", "guidance_vector", "guidance_objective", "initial_state",
    "jacobian_start", "projected_gd", "run_loop", "surrogate_cosine",
]
