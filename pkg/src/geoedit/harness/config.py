"""Experiment configs: loading, canonical hashing and validation."""

from __future__ import annotations

import copy
import hashlib
import json
import math

import numpy as np
import yaml

from ..flow import T_MIN
from ..manifold import make_manifold
from ..schedule import Schedule

EXPERIMENTS = (
    "tangent_compare",
    "theorem_sweep",
    "rank_ratio_curve",
    "geoedit_traversal",
    "projected_gd",
    "ablation_stepsize",
    "ablation_refresh",
    "ablation_projection",
)

# run-time knobs that do not change results and stay out of the hash
_UNHASHED = ("output_dir", "jobs")

_EDIT_EXPERIMENTS = ("geoedit_traversal", "projected_gd", "ablation_stepsize",
                     "ablation_refresh", "ablation_projection")


class ConfigError(ValueError):
    def __init__(self, diagnostics):
        super().__init__("; ".join(diagnostics))
        self.diagnostics = list(diagnostics)


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        cfg = yaml.safe_load(fh)
    if not isinstance(cfg, dict):
        raise ConfigError([f"{path}: top level must be a mapping"])
    return cfg


def _canon(obj):
    if isinstance(obj, dict):
        return {str(k): _canon(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canon(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)) or obj is None or isinstance(obj, str):
        return bool(obj) if isinstance(obj, np.bool_) else obj
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        # fixed %.17g text keeps the hash independent of float repr quirks
        return {"__float__": "%.17g" % float(obj)}
    raise TypeError(f"cannot canonicalise {type(obj).__name__}")


def canonical_json(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k not in _UNHASHED}
    return json.dumps(_canon(body), sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()[:16]


def with_overrides(cfg: dict, seeds=None, output_dir=None) -> dict:
    out = copy.deepcopy(cfg)
    if seeds is not None:
        out["seeds"] = list(seeds)
    if output_dir is not None:
        out["output_dir"] = str(output_dir)
    return out


def _nonempty_grid(diags, name, grid):
    if not isinstance(grid, (list, tuple)) or len(grid) == 0:
        diags.append(f"{name}: grid must be a nonempty list")
        return False
    return True


def validate(cfg) -> list:
    """Every problem with ``cfg`` as a list of strings; empty means runnable."""
    diags = []
    if not isinstance(cfg, dict):
        return ["config must be a mapping"]
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        diags.append(f"experiment: unknown {exp!r}; expected one of {', '.join(EXPERIMENTS)}")

    seeds = cfg.get("seeds")
    if not isinstance(seeds, list) or not seeds:
        diags.append("seeds: must be a nonempty list of integers")
    elif not all(isinstance(s, int) and not isinstance(s, bool) and s >= 0 for s in seeds):
        diags.append("seeds: every seed must be a nonnegative integer")
    elif len(set(seeds)) != len(seeds):
        diags.append("seeds: duplicates are not allowed")

    sched = None
    try:
        sched = Schedule.from_dict(cfg.get("schedule"))
    except (TypeError, ValueError) as exc:
        diags.append(f"schedule: {exc}")

    man = None
    mspec = cfg.get("manifold")
    if not isinstance(mspec, dict) or "kind" not in mspec:
        diags.append("manifold: must be a mapping with a 'kind'")
    else:
        try:
            man = make_manifold(mspec)
        except (TypeError, ValueError, KeyError) as exc:
            diags.append(f"manifold: {exc}")

    score = cfg.get("score")
    if not isinstance(score, dict):
        diags.append("score: must be a mapping")
        score = {}
    kind = score.get("kind", "curve_tube")
    if kind == "curve_tube":
        rho = score.get("tube_rho")
        if not isinstance(rho, (int, float)) or not rho > 0:
            diags.append("score.tube_rho: must be a positive number")
        elif man is not None and not rho < man.reach:
            diags.append(f"score.tube_rho: {rho} is not below the reach {man.reach:.6g} of the {man.kind}")
        nc = score.get("n_centers")
        if not isinstance(nc, int) or nc < 2:
            diags.append("score.n_centers: must be an integer >= 2")
    elif kind not in ("components", "standard_gaussian", "affine_gaussian"):
        diags.append(f"score.kind: unknown {kind!r}")

    flow = cfg.get("flow", {}) or {}
    if flow.get("method", "heun") not in ("euler", "heun"):
        diags.append("flow.method: must be 'euler' or 'heun'")
    if not isinstance(flow.get("n_steps", 100), int) or flow.get("n_steps", 100) < 1:
        diags.append("flow.n_steps: must be a positive integer")

    est = cfg.get("estimator", {}) or {}
    m, k = est.get("m", 10), est.get("k", 1)
    if not isinstance(m, int) or m < 2:
        diags.append("estimator.m: must be an integer >= 2")
    if not isinstance(k, int) or k < 1:
        diags.append("estimator.k: must be a positive integer")
    elif isinstance(m, int) and k > m - 1:
        diags.append(f"estimator.k: k={k} exceeds m-1={m - 1} (centred secants have rank at most m-1)")
    if man is not None and isinstance(k, int) and k > man.ambient_dim:
        diags.append(f"estimator.k: k={k} exceeds the ambient dimension {man.ambient_dim}")
    sig = est.get("sigma", 0.2)
    if not isinstance(sig, (int, float)) or not sig > 0:
        diags.append("estimator.sigma: must be positive")

    ret = cfg.get("retraction", {}) or {}
    tr = ret.get("t_retract", 0.2)
    if not isinstance(tr, (int, float)) or not tr > 0:
        diags.append("retraction.t_retract: must be positive")
    elif sched is not None and tr > sched.T:
        diags.append(f"retraction.t_retract: {tr} exceeds the horizon T={sched.T}")
    elif not tr > T_MIN:
        diags.append(f"retraction.t_retract: must exceed the integration floor {T_MIN}")
    if ret.get("noise_mode", "shared") not in ("shared", "independent", "deterministic"):
        diags.append("retraction.noise_mode: must be shared, independent or deterministic")

    params = cfg.get("params", {}) or {}
    if exp in _EDIT_EXPERIMENTS:
        ed = cfg.get("edit", {}) or {}
        if not isinstance(ed.get("iterations", 64), int) or ed.get("iterations", 64) < 1:
            diags.append("edit.iterations: must be a positive integer")
        if not isinstance(ed.get("refresh_period", 4), int) or ed.get("refresh_period", 4) < 1:
            diags.append("edit.refresh_period: must be a positive integer")
        eta = ed.get("step_size", 0.1)
        if not isinstance(eta, (int, float)) or eta < 0:
            diags.append("edit.step_size: must be a nonnegative number")
        g = ed.get("guidance")
        if exp in ("geoedit_traversal", "ablation_stepsize", "ablation_refresh", "ablation_projection"):
            if not isinstance(g, dict) or "kind" not in g:
                diags.append("edit.guidance: must be a mapping with a 'kind'")
            elif g["kind"] == "basis_direction" and isinstance(k, int) and g.get("index", 0) >= k:
                diags.append(f"edit.guidance.index: {g.get('index')} is not below k={k}")

    if exp == "theorem_sweep":
        if isinstance(mspec, dict) and mspec.get("kind") != "parabola":
            diags.append("manifold.kind: theorem_sweep varies a parabola and needs kind 'parabola'")
        sweeps = params.get("sweeps")
        if not isinstance(sweeps, list) or not sweeps:
            diags.append("params.sweeps: must be a nonempty list")
        else:
            for i, sw in enumerate(sweeps):
                if sw.get("vary") not in ("sigma", "rho", "kappa"):
                    diags.append(f"params.sweeps[{i}].vary: must be sigma, rho or kappa")
                if _nonempty_grid(diags, f"params.sweeps[{i}].values", sw.get("values")) and sw.get("vary") == "rho":
                    a = sw.get("a", (cfg.get("manifold") or {}).get("a", 1.0))
                    reach = math.inf if a == 0 else 1.0 / (2 * abs(a))
                    bad = [r for r in sw["values"] if not 0 < r < reach]
                    if bad:
                        diags.append(f"params.sweeps[{i}].values: tube radii {bad} violate 0 < rho < reach {reach:.6g}")
                if sw.get("vary") == "kappa" and isinstance(sw.get("values"), list):
                    rho = sw.get("rho", score.get("tube_rho", 0.05))
                    bad = [a for a in sw["values"] if a != 0 and not rho < 1.0 / (2 * abs(a))]
                    if bad:
                        diags.append(f"params.sweeps[{i}].values: curvatures {bad} put the reach below rho={rho}")
    elif exp == "rank_ratio_curve":
        if _nonempty_grid(diags, "params.t_grid", params.get("t_grid")) and sched is not None:
            bad = [t for t in params["t_grid"] if not T_MIN <= t * sched.T <= sched.T]
            if bad:
                diags.append(f"params.t_grid: fractions {bad} fall outside [{T_MIN}, T]")
        eta = params.get("eta_var", 0.99)
        if not 0 < eta < 1:
            diags.append("params.eta_var: must lie in (0, 1)")
    elif exp == "ablation_stepsize":
        if _nonempty_grid(diags, "params.eta_grid", params.get("eta_grid")):
            grid = params["eta_grid"]
            if any(not e > 0 for e in grid) or list(grid) != sorted(grid):
                diags.append("params.eta_grid: must be positive and increasing")
    elif exp == "ablation_refresh":
        _nonempty_grid(diags, "params.q_values", params.get("q_values"))
    elif exp == "tangent_compare":
        bt = params.get("baseline_t", 0.1)
        if not 0 < bt <= 1:
            diags.append("params.baseline_t: must be a fraction of T in (0, 1]")
    return diags


def require_valid(cfg):
    diags = validate(cfg)
    if diags:
        raise ConfigError(diags)
    return cfg
