"""Run an experiment config and write its tables under output_dir/<experiment>/<hash>/."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import __version__
from . import experiments as ex
from .config import canonical_json, config_hash, require_valid


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))  # shortest round-trip text, locale independent
    return str(v)


@dataclass
class ResultTable:
    name: str
    columns: list
    rows: list
    metadata: dict = field(default_factory=dict)

    @classmethod
    def from_rows(cls, name, rows, metadata, lead=("config_hash",), tail=("error",)):
        cols = list(lead)
        for r in rows:
            for k in r:
                if k not in cols and k not in tail:
                    cols.append(k)
        cols += [t for t in tail if any(t in r for r in rows)] or []
        rows = [{"config_hash": metadata.get("config_hash"), **r} for r in rows]
        return cls(name, cols, rows, dict(metadata))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_cell(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def column(self, name):
        return [r.get(name) for r in self.rows]

    def write(self, directory):
        path = os.path.join(directory, f"{self.name}.csv")
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())
        return path


@dataclass
class RunResult:
    experiment: str
    config_hash: str
    output_dir: str | None
    tables: dict
    artifacts: dict
    n_errors: int

    @property
    def ok(self) -> bool:
        return self.n_errors == 0


def _run_seed(args):
    experiment, cfg, seed = args
    try:
        rows, artifacts = ex.PER_SEED[experiment](cfg, seed)
    except Exception as exc:  # recorded per row, the run goes on
        return [{"seed": seed, "error": f"{type(exc).__name__}: {exc}"}], {}
    return rows, artifacts


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


def run(cfg: dict, output_dir=None, jobs: int = 1) -> RunResult:
    """Validate, execute every seed (and grid point) and write the tables.

    With ``output_dir=None`` nothing is written; tables are still returned.
    """
    require_valid(cfg)
    experiment = cfg["experiment"]
    h = config_hash(cfg)
    seeds = list(cfg["seeds"])
    meta = {"config_hash": h, "experiment": experiment, "seeds": seeds, "version": __version__}
    pool = ProcessPoolExecutor(max_workers=jobs) if jobs and jobs > 1 else None
    mapper = pool.map if pool is not None else map
    try:
        artifacts = {}
        tables = {}
        if experiment in ex.PER_SEED:
            results = list(mapper(_run_seed, [(experiment, cfg, s) for s in seeds]))
            rows = []
            for r, a in results:  # already in seed order
                rows.extend(r)
                artifacts.update(a)
            tables["results"] = ResultTable.from_rows("results", rows, meta)
            summary = ex.summarize(experiment, rows)
            if summary:
                tables["summary"] = ResultTable.from_rows("summary", summary, meta)
        else:
            try:
                rows, thr = ex.GLOBAL[experiment](cfg, seeds, mapper)
            except Exception as exc:
                rows, thr = [], [{"error": f"{type(exc).__name__}: {exc}"}]
            tables["results"] = ResultTable.from_rows("results", rows, meta)
            tables["threshold"] = ResultTable.from_rows("threshold", thr, meta)
    finally:
        if pool is not None:
            pool.shutdown()
    n_errors = sum(1 for t in tables.values() for r in t.rows if r.get("error"))

    out = None
    if output_dir is not None:
        out = os.path.join(str(output_dir), experiment, h)
        os.makedirs(out, exist_ok=True)
        for t in tables.values():
            t.write(out)
        for rel, text in artifacts.items():
            path = os.path.join(out, rel)
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        with open(os.path.join(out, "metadata.json"), "w", encoding="utf-8") as fh:
            json.dump({**meta, "n_errors": n_errors, "tables": sorted(tables),
                       "config": json.loads(canonical_json(cfg))}, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return RunResult(experiment, h, out, tables, artifacts, n_errors)
