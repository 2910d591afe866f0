import copy
import csv
import json
import os

import pytest

from conftest import CONFIG_DIR
from geoedit.harness import cli
from geoedit.harness import experiments as ex
from geoedit.harness.config import (EXPERIMENTS, ConfigError, canonical_json, config_hash, load_config, require_valid,
                                    validate, with_overrides)
from geoedit.harness.runner import ResultTable, _cell, run


def cfg_file(name):
    return os.path.join(CONFIG_DIR, name)


@pytest.fixture
def tc():
    return load_config(cfg_file("tangent_compare.yaml"))


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------- configs

@pytest.mark.parametrize("name", sorted(os.listdir(CONFIG_DIR)))
def test_shipped_configs_are_valid(name):
    assert validate(load_config(cfg_file(name))) == []


def test_tube_beyond_reach_is_rejected():
    cfg = {"experiment": "tangent_compare", "manifold": {"kind": "circle", "r": 1.0},
           "score": {"kind": "curve_tube", "n_centers": 64, "tube_rho": 1.5}, "seeds": [0]}
    diags = validate(cfg)
    assert any("reach" in d for d in diags)


def test_rank_diagnostic(tc):
    tc["estimator"] = {"m": 5, "sigma": 0.2, "k": 10}
    diags = validate(tc)
    assert any("m-1" in d for d in diags)
    with pytest.raises(ConfigError) as ei:
        require_valid(tc)
    assert ei.value.diagnostics == diags


def test_every_problem_is_listed(tc):
    tc["seeds"] = []
    tc["estimator"]["sigma"] = -1.0
    tc["experiment"] = "tangent_compare"
    diags = validate(tc)
    assert any(d.startswith("seeds") for d in diags) and any("sigma" in d for d in diags)


def test_retraction_time_beyond_horizon():
    cfg = load_config(cfg_file("traversal_circle.yaml"))
    cfg["retraction"]["t_retract"] = 2.0
    assert any("t_retract" in d for d in validate(cfg))


def test_empty_grid_and_unknown_experiment():
    cfg = load_config(cfg_file("rank_ratio_curve.yaml"))
    cfg["params"]["t_grid"] = []
    assert any("t_grid" in d for d in validate(cfg))
    cfg["experiment"] = "nope"
    assert any("unknown" in d for d in validate(cfg))


def test_duplicate_and_negative_seeds(tc):
    tc["seeds"] = [1, 1]
    assert validate(tc)
    tc["seeds"] = [-3]
    assert validate(tc)


# ---------------------------------------------------------------- hashing

def test_hash_ignores_output_dir_and_key_order(tc):
    h = config_hash(tc)
    assert len(h) == 16
    assert config_hash(with_overrides(tc, output_dir="/elsewhere")) == h
    reordered = dict(reversed(list(copy.deepcopy(tc).items())))
    assert config_hash(reordered) == h


def test_hash_sees_every_result_knob(tc):
    h = config_hash(tc)
    assert config_hash(with_overrides(tc, seeds=[0, 1])) != h
    tc["estimator"]["sigma"] = 0.2000000001
    assert config_hash(tc) != h


def test_canonical_json_int_vs_float(tc):
    a = copy.deepcopy(tc)
    a["estimator"]["sigma"] = 1
    b = copy.deepcopy(tc)
    b["estimator"]["sigma"] = 1.0
    assert canonical_json(a) != canonical_json(b)


def test_cell_formatting():
    assert _cell(True) == "true" and _cell(False) == "false"
    assert _cell(0.1) == "0.1" and float(_cell(1 / 3)) == 1 / 3
    assert _cell(None) == "" and _cell(7) == "7"


def test_result_table_columns():
    t = ResultTable.from_rows("x", [{"seed": 0, "v": 1.0}, {"seed": 1, "error": "boom"}], {"config_hash": "abc"})
    assert t.columns == ["config_hash", "seed", "v", "error"]
    assert t.to_csv().splitlines()[2] == "abc,1,,boom"


# ---------------------------------------------------------------- runs

def test_row_counts_and_layout(tc, tmp_path):
    res = run(tc, output_dir=tmp_path)
    assert res.ok
    out = tmp_path / "tangent_compare" / res.config_hash
    rows = read_csv(out / "results.csv")
    assert len(rows) == 2 * len(tc["seeds"])
    assert {r["method"] for r in rows} == {"secant_pca", "posterior_jacobian"}
    assert all(r["config_hash"] == res.config_hash for r in rows)
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["config_hash"] == res.config_hash and meta["n_errors"] == 0
    assert (out / "summary.csv").exists()


def test_reruns_are_byte_identical_and_jobs_independent(tc, tmp_path):
    tc = with_overrides(tc, seeds=[0, 1, 2, 3])
    a = run(tc, output_dir=tmp_path / "a")
    b = run(tc, output_dir=tmp_path / "b", jobs=2)
    for name in ("results.csv", "summary.csv", "metadata.json"):
        assert (open(os.path.join(a.output_dir, name), "rb").read()
                == open(os.path.join(b.output_dir, name), "rb").read())


def test_seed_result_does_not_depend_on_other_seeds(tc):
    one = run(with_overrides(tc, seeds=[5])).tables["results"].rows
    many = run(with_overrides(tc, seeds=[2, 5, 9])).tables["results"].rows
    pick = [r for r in many if r["seed"] == 5]
    assert [r["deviation"] for r in one] == [r["deviation"] for r in pick]


def test_traversal_writes_traces(tmp_path):
    cfg = load_config(cfg_file("traversal_circle.yaml"))
    cfg = with_overrides(cfg, seeds=[3])
    cfg["edit"]["iterations"] = 5
    res = run(cfg, output_dir=tmp_path)
    trace = read_csv(os.path.join(res.output_dir, "traces", "seed_0003.csv"))
    assert len(trace) == 6
    assert trace[1]["refresh_flag"] in ("true", "false")
    assert os.path.exists(os.path.join(res.output_dir, "traces", "seed_0003.json"))


def test_seed_rng_streams_are_labelled():
    a = ex.seed_rng(3, 1).standard_normal(4)
    assert (a == ex.seed_rng(3, 1).standard_normal(4)).all()
    assert not (a == ex.seed_rng(3, 2).standard_normal(4)).any()
    assert not (a == ex.seed_rng(4, 1).standard_normal(4)).any()


# ---------------------------------------------------------------- CLI

def test_cli_list_experiments(capsys):
    assert cli.main(["list-experiments"]) == 0
    names = [line.split("\t")[0] for line in capsys.readouterr().out.strip().splitlines()]
    assert tuple(names) == EXPERIMENTS


def test_cli_validate(capsys, tmp_path):
    assert cli.main(["validate", cfg_file("tangent_compare.yaml")]) == 0
    assert capsys.readouterr().out.strip() == "ok"
    bad = tmp_path / "bad.yaml"
    bad.write_text("experiment: tangent_compare\nmanifold: {kind: circle, r: 1.0}\n"
                   "score: {kind: curve_tube, n_centers: 64, tube_rho: 1.5}\nseeds: [0]\n")
    assert cli.main(["validate", str(bad)]) == 1
    assert "reach" in capsys.readouterr().out
    assert cli.main(["run", str(bad), "--output-dir", str(tmp_path)]) == 1
    assert cli.main(["validate", str(tmp_path / "missing.yaml")]) == 1
    junk = tmp_path / "junk.yaml"
    junk.write_text("- just\n- a list\n")
    assert cli.main(["validate", str(junk)]) == 1


def test_cli_run_with_seed_override(tmp_path, capsys):
    code = cli.main(["run", cfg_file("tangent_compare.yaml"), "--seed-override", "7,8", "--output-dir", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out.strip()
    rows = read_csv(os.path.join(out, "results.csv"))
    assert sorted({int(r["seed"]) for r in rows}) == [7, 8]


def test_cli_runtime_error_exit_code(tmp_path, monkeypatch, capsys):
    def boom(cfg, seed):
        raise FloatingPointError("overflow")

    monkeypatch.setitem(ex.PER_SEED, "tangent_compare", boom)
    code = cli.main(["run", cfg_file("tangent_compare.yaml"), "--seed-override", "0", "--output-dir", str(tmp_path)])
    assert code == 2
    out = capsys.readouterr().out.strip()
    rows = read_csv(os.path.join(out, "results.csv"))
    assert rows[0]["error"].startswith("FloatingPointError")


def test_cli_rejects_bad_jobs_and_seeds(tmp_path):
    assert cli.main(["run", cfg_file("tangent_compare.yaml"), "--jobs", "0", "--output-dir", str(tmp_path)]) == 1
    with pytest.raises(SystemExit):
        cli.main(["run", cfg_file("tangent_compare.yaml"), "--seed-override", "a,b"])
