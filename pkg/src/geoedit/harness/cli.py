"""Command line: ``geoedit run|validate|list-experiments``."""

from __future__ import annotations

import argparse
import sys

from .config import EXPERIMENTS, ConfigError, load_config, validate, with_overrides
from .runner import run

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

_DESCRIPTIONS = {
    "tangent_compare": "secant-PCA frame vs posterior-mean Jacobian baseline, angle to the true tangent",
    "theorem_sweep": "frame deviation under sigma-, rho- and curvature-sweeps",
    "rank_ratio_curve": "PCA rank ratio of samples along the denoising trajectory",
    "geoedit_traversal": "basis-direction traversals with per-iteration traces",
    "projected_gd": "projected descent toward a target on the manifold",
    "ablation_stepsize": "locate the step size where traversals leave the 2 rho band",
    "ablation_refresh": "final footpoint under different frame refresh periods",
    "ablation_projection": "tangential progress and normal drift with and without projection",
}


def _seeds(text):
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers")
    if not seeds:
        raise argparse.ArgumentTypeError("need at least one seed")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geoedit", description="Tangent-space editing experiments on toy manifolds.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--seed-override", type=_seeds, default=None, metavar="S1,S2,...",
                   help="replace the config's seed list")
    r.add_argument("--output-dir", default=None, help="root for output tables (default: config output_dir or results)")
    r.add_argument("--jobs", type=int, default=1, help="parallel worker processes over seeds")
    v = sub.add_parser("validate", help="check a config and list every problem")
    v.add_argument("config")
    v.add_argument("--seed-override", type=_seeds, default=None, metavar="S1,S2,...")
    sub.add_parser("list-experiments", help="print the experiment kinds")
    return p


def _load(path, seeds):
    try:
        cfg = load_config(path)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return None
    except Exception as exc:  # YAML syntax
        print(f"error: cannot parse {path}: {exc}", file=sys.stderr)
        return None
    return with_overrides(cfg, seeds=seeds)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name in EXPERIMENTS:
            print(f"{name}\t{_DESCRIPTIONS[name]}")
        return EXIT_OK

    cfg = _load(args.config, args.seed_override)
    if cfg is None:
        return EXIT_INVALID
    diags = validate(cfg)
    if args.command == "validate":
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_INVALID if diags else EXIT_OK

    if diags:
        for d in diags:
            print(f"invalid: {d}", file=sys.stderr)
        return EXIT_INVALID
    if args.jobs < 1:
        print("invalid: --jobs must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    out_root = args.output_dir or cfg.get("output_dir") or "results"
    try:
        res = run(cfg, output_dir=out_root, jobs=args.jobs)
    except Exception as exc:
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(res.output_dir)
    if res.n_errors:
        print(f"{res.n_errors} row(s) failed; see the error column", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
