"""The eight experiment kinds. Each per-seed function returns ``(rows, artifacts)``."""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from ..edit import EditConfig, GuidanceSpec, geoedit_run, initial_state, projected_gd
from ..flow import FlowConfig, RetractionConfig, integrate
from ..manifold import Parabola, make_manifold
from ..schedule import Schedule
from ..score import make_curve_tube, make_field
from ..tangent import (angle_deg, estimate_frame, generate_ensemble, loco_baseline_frame,
                       rank_ratio, subspace_deviation)


def seed_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent labelled stream: the same (seed, key) always gives the same draws."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


def _freeze(obj):
    if isinstance(obj, dict):
        return tuple(sorted((k, _freeze(v)) for k, v in obj.items()))
    if isinstance(obj, list):
        return tuple(_freeze(v) for v in obj)
    return obj


def _thaw(obj):
    if isinstance(obj, tuple) and all(isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], str) for p in obj):
        return {k: _thaw(v) for k, v in obj}
    if isinstance(obj, tuple):
        return [_thaw(v) for v in obj]
    return obj


@lru_cache(maxsize=32)
def _build_cached(sched_key, man_key, score_key):
    sched = Schedule.from_dict(_thaw(sched_key) or None)
    man = make_manifold(_thaw(man_key))
    field = make_field(_thaw(score_key), sched, man)
    return sched, man, field


def build_problem(cfg: dict):
    """``(schedule, manifold, field)`` for a config; fields are cached per process."""
    return _build_cached(_freeze(cfg.get("schedule") or {}), _freeze(cfg["manifold"]), _freeze(cfg["score"]))


def flow_config(cfg: dict, **over) -> FlowConfig:
    f = dict(cfg.get("flow") or {})
    f.update(over)
    return FlowConfig(method=f.get("method", "heun"), n_steps=int(f.get("n_steps", 100)),
                      t_start=f.get("t_start"), t_end=float(f.get("t_end", FlowConfig.t_end)))


def retraction_config(cfg: dict) -> RetractionConfig:
    r = cfg.get("retraction") or {}
    return RetractionConfig(t_retract=float(r.get("t_retract", 0.2)), n_steps=int(r.get("n_steps", 5)),
                            noise_mode=r.get("noise_mode", "shared"), method=r.get("method", "heun"))


def estimator(cfg: dict):
    e = cfg.get("estimator") or {}
    return int(e.get("m", 10)), float(e.get("sigma", 0.2)), int(e.get("k", 1))


def guidance_spec(g: dict | None) -> GuidanceSpec | None:
    if g is None:
        return None
    g = dict(g)
    kind = g.pop("kind")
    for key in ("target", "direction"):
        if key in g:
            g[key] = tuple(float(v) for v in g[key])
    return GuidanceSpec(kind, **g)


def edit_config(cfg: dict, **over) -> EditConfig:
    e = dict(cfg.get("edit") or {})
    e.update(over)
    m, sigma, k = estimator(cfg)
    guidance = e.get("guidance")
    if guidance is not None and not isinstance(guidance, GuidanceSpec):
        guidance = guidance_spec(guidance)
    return EditConfig(
        step_size=float(e.get("step_size", 0.1)),
        iterations=int(e.get("iterations", 64)),
        refresh_period=int(e.get("refresh_period", 4)),
        ensemble_size=m,
        sigma_pert=sigma,
        frame_dim=k,
        retraction=retraction_config(cfg),
        guidance=guidance,
        normalize_guidance=bool(e.get("normalize_guidance", False)),
        normalize_order=e.get("normalize_order", "before"),
        project=bool(e.get("project", True)),
        flow=flow_config(cfg),
    )


def _tube_rho(cfg):
    return float(cfg["score"]["tube_rho"])


def _own_deviation(man, frame):
    fp = man.nearest_point(frame.footpoint, strict=False)
    return subspace_deviation(man.tangent_basis(fp), frame.basis), fp


def _params(trace, man):
    p = trace.column("param")
    return np.unwrap(p) if man.periodic else p


def _trace_artifacts(seed, trace):
    return {f"traces/seed_{seed:04d}.csv": trace.to_csv(), f"traces/seed_{seed:04d}.json": trace.to_json()}


# ---------------------------------------------------------------- tangent estimation

def tangent_compare(cfg: dict, seed: int):
    sched, man, field = build_problem(cfg)
    m, sigma, k = estimator(cfg)
    params = cfg.get("params") or {}
    bt = float(params.get("baseline_t", 0.1)) * sched.T
    rng = seed_rng(seed)
    z = rng.standard_normal(field.dim)
    ens = generate_ensemble(field, z, m, sigma, flow_config(cfg), rng)
    frame = estimate_frame(ens, k)
    dev, fp = _own_deviation(man, frame)
    rows = [{"seed": seed, "method": "secant_pca", "t": flow_config(cfg).t_end,
             "deviation": dev, "angle_deg": angle_deg(dev), "footpoint_param": man.param_of(fp)}]
    x_t = integrate(field, z, flow_config(cfg, t_end=bt))
    base = loco_baseline_frame(field, x_t, bt, k, params.get("jacobian_h"))
    dev, fp = _own_deviation(man, base)
    rows.append({"seed": seed, "method": "posterior_jacobian", "t": bt,
                 "deviation": dev, "angle_deg": angle_deg(dev), "footpoint_param": man.param_of(fp)})
    return rows, {}


@lru_cache(maxsize=64)
def _parabola_field(a, rho, half_width, min_centers, sched_key):
    p = Parabola(a, half_width=half_width)
    arc = p.arclength_between(-half_width, half_width)
    # keep neighbouring centres within one tube radius so the tube stays smooth
    n = max(min_centers, int(math.ceil(arc / rho)) + 1)
    return p, make_curve_tube(p, n, rho, Schedule.from_dict(_thaw(sched_key) or None))


def theorem_sweep(cfg: dict, seed: int):
    """Deviation along sigma-, rho- and curvature-sweeps with common random numbers."""
    m, sigma0, k = estimator(cfg)
    mspec = cfg["manifold"]
    a0 = float(mspec.get("a", 1.0))
    hw = float(mspec.get("half_width", 1.0))
    rho0 = _tube_rho(cfg)
    min_c = int(cfg["score"].get("n_centers", 64))
    sched_key = _freeze(cfg.get("schedule") or {})
    rows = []
    for si, sw in enumerate(cfg["params"]["sweeps"]):
        base = {"sigma": float(sw.get("sigma", sigma0)), "rho": float(sw.get("rho", rho0)),
                "kappa": float(sw.get("a", a0))}
        for val in sw["values"]:
            p = dict(base)
            p[sw["vary"]] = float(val)
            man, field = _parabola_field(p["kappa"], p["rho"], hw, min_c, sched_key)
            rng = seed_rng(seed, si)  # same z and probes at every grid point
            z = rng.standard_normal(field.dim)
            if sw.get("latent", "random") == "zero":
                z = np.zeros(field.dim)
            ens = generate_ensemble(field, z, m, p["sigma"], flow_config(cfg), rng)
            frame = estimate_frame(ens, k)
            dev, fp = _own_deviation(man, frame)
            rows.append({"seed": seed, "sweep": sw.get("name", sw["vary"]), "vary": sw["vary"],
                         "sigma": p["sigma"], "rho": p["rho"], "a": p["kappa"],
                         "kappa": man.curvature(fp), "k": k, "deviation": dev})
    return rows, {}


def rank_ratio_curve(cfg: dict, seed: int):
    """Rank ratio of a batch of PF trajectories, read off at each grid time."""
    sched, man, field = build_problem(cfg)
    params = cfg.get("params") or {}
    eta = float(params.get("eta_var", 0.99))
    n_samples = int(params.get("n_samples", 256))
    fc = flow_config(cfg)
    grid = sorted((float(f) * sched.T for f in params["t_grid"]), reverse=True)
    rng = seed_rng(seed)
    x = rng.standard_normal((n_samples, field.dim))
    t_prev = sched.T
    rows = []
    for t in grid:
        if t < t_prev:
            # keep the step density of the full-horizon flow on each segment
            n = max(1, int(round(fc.n_steps * (t_prev - t) / sched.T)))
            x = integrate(field, x, FlowConfig(method=fc.method, n_steps=n, t_start=t_prev, t_end=t))
            t_prev = t
        rows.append({"seed": seed, "t": t, "t_frac": t / sched.T, "rank_ratio": rank_ratio(x.T, eta)})
    rows.sort(key=lambda r: r["t"])
    return rows, {}


# ---------------------------------------------------------------- editing

def _traversal(cfg, seed, **over):
    sched, man, field = build_problem(cfg)
    ecfg = edit_config(cfg, **over)
    rng = seed_rng(seed)
    z = rng.standard_normal(field.dim)
    x, trace = geoedit_run(field, z, ecfg, rng, man)
    return man, ecfg, trace


def _traversal_row(seed, cfg, man, ecfg, trace):
    rho = _tube_rho(cfg)
    td = trace.column("tube_dist")[1:]
    par = _params(trace, man)
    dp = np.diff(par)
    mono = max(np.mean(dp > 0), np.mean(dp < 0)) if len(dp) else math.nan
    return {"seed": seed, "step_size": ecfg.step_size, "refresh_period": ecfg.refresh_period,
            "initial_tube_dist": float(trace.records[0].tube_dist),
            "max_tube_dist": float(td.max()), "max_tube_dist_over_rho": float(td.max() / rho),
            "monotone_frac": float(mono), "param_start": float(par[0]), "param_end": float(par[-1]),
            "displacement": float(par[-1] - par[0]), "n_warnings": len(trace.warnings)}


def geoedit_traversal(cfg: dict, seed: int):
    man, ecfg, trace = _traversal(cfg, seed)
    return [_traversal_row(seed, cfg, man, ecfg, trace)], _trace_artifacts(seed, trace)


def projected_gd_run(cfg: dict, seed: int):
    """Descent on f = 1/2 |x - y|^2 toward a target y placed on the manifold."""
    sched, man, field = build_problem(cfg)
    ecfg = edit_config(cfg, guidance=None)
    params = cfg.get("params") or {}
    lo, hi = params.get("target_offset", [1.0, 2.5])
    rng = seed_rng(seed)
    z = rng.standard_normal(field.dim)
    state = initial_state(field, z, ecfg, rng)
    u0 = man.param_of(man.nearest_point(state.x, strict=False))
    trng = seed_rng(seed, 1)
    u = u0 + trng.uniform(lo, hi) * trng.choice([-1.0, 1.0])
    if not man.periodic:
        u = float(np.clip(u, *man.param_range))
    y = man.point_at(u)
    f = lambda x: 0.5 * float(np.sum((x - y) ** 2))
    x, trace = projected_gd(field, f, z, ecfg, rng, grad=lambda x: x - y, oracle=man, state=state)
    loss = trace.column("loss")
    td = trace.column("tube_dist")
    row = {"seed": seed, "step_size": ecfg.step_size, "loss_start": float(loss[0]), "loss_end": float(loss[-1]),
           "loss_ratio": float(loss[0] / loss[-1]) if loss[-1] > 0 else math.inf,
           "final_tube_dist": float(td[-1]), "max_tube_dist": float(td[1:].max()),
           "final_tube_dist_over_rho": float(td[-1] / _tube_rho(cfg)), "n_warnings": len(trace.warnings)}
    return [row], _trace_artifacts(seed, trace)


def _worst_case(cfg, seeds, eta, mapper):
    rho = _tube_rho(cfg)
    out = list(mapper(_stepsize_probe, [(cfg, s, eta) for s in seeds]))
    vals = np.array(out) / rho
    return float(vals.max()), float(np.median(vals))


def _stepsize_probe(args):
    cfg, seed, eta = args
    man, ecfg, trace = _traversal(cfg, seed, step_size=eta)
    return float(trace.column("tube_dist")[1:].max())


def ablation_stepsize(cfg: dict, seeds, mapper=map):
    """Locate eta*, the smallest step whose traversal leaves the 2 rho band for some seed.

    Scans ``eta_grid`` upward to bracket the crossing, bisects it, then checks
    eta*/2 (must stay inside) and 2 eta* (must leave). Returns
    ``(rows, threshold_rows)``.
    """
    params = cfg.get("params") or {}
    limit = float(params.get("limit_over_rho", 2.0))
    n_bisect = int(params.get("bisect_iters", 5))
    rows = []

    def probe(phase, eta):
        worst, med = _worst_case(cfg, seeds, eta, mapper)
        rows.append({"phase": phase, "step_size": eta, "max_tube_dist_over_rho": worst,
                     "median_tube_dist_over_rho": med, "exceeds": worst > limit})
        return worst > limit

    lo, hi = 0.0, None
    for eta in params["eta_grid"]:
        if probe("scan", float(eta)):
            hi = float(eta)
            break
        lo = float(eta)
    if hi is None:
        thr = {"eta_star": math.inf, "eta_lo": lo, "eta_hi": math.inf, "limit_over_rho": limit,
               "stable_at_half": math.nan, "fails_at_double": math.nan, "found": False}
        return rows, [thr]
    for _ in range(n_bisect):
        mid = 0.5 * (lo + hi)
        if probe("bisect", mid):
            hi = mid
        else:
            lo = mid
    eta_star = hi
    stable_half = not probe("confirm_half", 0.5 * eta_star)
    fails_double = probe("confirm_double", 2.0 * eta_star)
    thr = {"eta_star": eta_star, "eta_lo": lo, "eta_hi": hi, "limit_over_rho": limit,
           "stable_at_half": stable_half, "fails_at_double": fails_double, "found": True}
    return rows, [thr]


def ablation_refresh(cfg: dict, seed: int):
    params = cfg.get("params") or {}
    qs = [int(q) for q in params.get("q_values", [1, 4])]
    runs = [(q, *_traversal(cfg, seed, refresh_period=q)) for q in qs]
    rows = []
    ref = _params(runs[0][3], runs[0][1])
    for q, man, ecfg, trace in runs:
        row = _traversal_row(seed, cfg, man, ecfg, trace)
        par = _params(trace, man)
        total = abs(ref[-1] - ref[0])
        row["q_ref"] = qs[0]
        row["final_param_gap"] = float(abs(par[-1] - ref[-1]))
        row["rel_gap"] = float(abs(par[-1] - ref[-1]) / total) if total > 0 else math.nan
        rows.append(row)
    return rows, {}


def ablation_projection(cfg: dict, seed: int):
    """Matched-eta runs with and without the tangent projector."""
    rows = []
    for proj in (True, False):
        man, ecfg, trace = _traversal(cfg, seed, project=proj)
        par = _params(trace, man)
        pre = trace.column("pre_tube_dist")[1:]
        rows.append({"seed": seed, "project": proj, "step_size": ecfg.step_size,
                     "tangential_disp": float(abs(par[-1] - par[0])),
                     "median_pre_normal": float(np.median(pre)), "max_pre_normal": float(pre.max()),
                     "max_tube_dist": float(trace.column("tube_dist")[1:].max())})
    return rows, {}


# ---------------------------------------------------------------- summaries

def _median(rows, key):
    vals = [r[key] for r in rows if r.get(key) is not None and not r.get("error")]
    return float(np.median(vals)) if vals else math.nan


def summarize(experiment: str, rows: list):
    ok = [r for r in rows if not r.get("error")]
    if experiment == "tangent_compare":
        return [{"method": m, "median_angle_deg": _median([r for r in ok if r["method"] == m], "angle_deg"),
                 "median_deviation": _median([r for r in ok if r["method"] == m], "deviation"),
                 "n": sum(r["method"] == m for r in ok)}
                for m in ("secant_pca", "posterior_jacobian")]
    if experiment == "theorem_sweep":
        out = []
        keys = []
        for r in ok:
            key = (r["sweep"], r["sigma"], r["rho"], r["a"])
            if key not in keys:
                keys.append(key)
        for sw, s, rho, a in keys:
            sel = [r for r in ok if (r["sweep"], r["sigma"], r["rho"], r["a"]) == (sw, s, rho, a)]
            out.append({"sweep": sw, "sigma": s, "rho": rho, "a": a,
                        "median_deviation": _median(sel, "deviation"), "n": len(sel)})
        return out
    if experiment == "rank_ratio_curve":
        ts = sorted({r["t"] for r in ok})
        return [{"t": t, "median_rank_ratio": _median([r for r in ok if r["t"] == t], "rank_ratio")} for t in ts]
    if experiment in ("geoedit_traversal", "projected_gd"):
        keys = [k for k in (ok[0] if ok else {}) if k != "seed" and isinstance(ok[0][k], (int, float))]
        return [{"statistic": "median", **{k: _median(ok, k) for k in keys}},
                {"statistic": "max", **{k: float(np.max([r[k] for r in ok])) for k in keys}}] if ok else []
    if experiment == "ablation_refresh":
        qs = sorted({r["refresh_period"] for r in ok})
        return [{"refresh_period": q, "median_rel_gap": _median([r for r in ok if r["refresh_period"] == q], "rel_gap"),
                 "max_rel_gap": float(np.max([r["rel_gap"] for r in ok if r["refresh_period"] == q]))}
                for q in qs]
    if experiment == "ablation_projection":
        out = []
        for proj in (True, False):
            sel = [r for r in ok if r["project"] == proj]
            out.append({"project": proj, "median_tangential_disp": _median(sel, "tangential_disp"),
                        "median_pre_normal": _median(sel, "median_pre_normal"), "n": len(sel)})
        return out
    return []


PER_SEED = {
    "tangent_compare": tangent_compare,
    "theorem_sweep": theorem_sweep,
    "rank_ratio_curve": rank_ratio_curve,
    "geoedit_traversal": geoedit_traversal,
    "projected_gd": projected_gd_run,
    "ablation_refresh": ablation_refresh,
    "ablation_projection": ablation_projection,
}
GLOBAL = {"ablation_stepsize": ablation_stepsize}
