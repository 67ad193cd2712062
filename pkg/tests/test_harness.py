import json
import os

import pytest

from critlat.harness import (BudgetExceeded, ExperimentConfig, Interrupted, InvalidParameters,
                             SchemaMismatch, UnknownExperiment, emit_plot_data, main, run)

FIELD = {"n": 3.0, "samples": 200, "block": 50}
LERW = {"estimator": "pn-hat", "n": [2.0, 3.0], "outer": 32, "inner_u": 1}


def _run(tmp_path, name, exp, params, **kw):
    cfg = ExperimentConfig(exp, dict(params), seed=kw.pop("seed", 7), out_dir=str(tmp_path / name),
                           **kw)
    return run(cfg)


def test_hash_ignores_scheduling_fields():
    a = ExperimentConfig("field", FIELD, seed=1, workers=1, out_dir="x", budget_seconds=5)
    b = ExperimentConfig("field", FIELD, seed=1, workers=8, out_dir="y")
    assert a.hash == b.hash
    assert a.hash != ExperimentConfig("field", FIELD, seed=2).hash
    assert a.hash != ExperimentConfig("field", dict(FIELD, n=4.0), seed=1).hash


def test_config_roundtrip_and_validation(tmp_path):
    cfg = ExperimentConfig("field", FIELD, seed=3)
    p = tmp_path / "c.json"
    p.write_text(cfg.to_json())
    assert ExperimentConfig.load(p).hash == cfg.hash
    with pytest.raises(InvalidParameters):
        ExperimentConfig.from_dict({"experiment": "field", "colour": "red"})
    with pytest.raises(InvalidParameters):
        ExperimentConfig.from_dict({"experiment": "field", "schema": 99})
    p.write_text("{not json")
    with pytest.raises(InvalidParameters):
        ExperimentConfig.load(p)


def test_identical_digests_across_runs_and_workers(tmp_path):
    m1 = _run(tmp_path, "a", "field", FIELD, workers=1)
    m2 = _run(tmp_path, "b", "field", FIELD, workers=4)
    m3 = _run(tmp_path, "c", "field", FIELD, workers=4)
    assert m1.digests == m2.digests == m3.digests
    assert set(m1.digests) == {"field.csv", "field.moments.json"}


@pytest.mark.parametrize("exp,params", [("field", FIELD), ("lerw", LERW)])
def test_checkpoint_resume_matches_fresh_run(tmp_path, exp, params):
    fresh = _run(tmp_path, "fresh", exp, params)
    cfg = ExperimentConfig(exp, dict(params), seed=7, out_dir=str(tmp_path / "resumed"))
    with pytest.raises(Interrupted):
        run(cfg, stop_after=1)
    assert any(f.startswith(".checkpoint-") for f in os.listdir(cfg.out_dir))
    resumed = run(cfg)
    assert resumed.digests == fresh.digests
    assert not any(f.startswith(".checkpoint-") for f in os.listdir(cfg.out_dir))


def test_budget_exceeded_then_resume(tmp_path):
    fresh = _run(tmp_path, "fresh", "field", FIELD)
    cfg = ExperimentConfig("field", dict(FIELD), seed=7, out_dir=str(tmp_path / "b"),
                           budget_seconds=0.0)
    with pytest.raises(BudgetExceeded) as e:
        run(cfg)
    assert e.value.code == 4
    cfg.budget_seconds = None
    assert run(cfg).digests == fresh.digests


def test_error_codes(tmp_path):
    with pytest.raises(UnknownExperiment) as e:
        _run(tmp_path, "x", "nope", {})
    assert e.value.code == 2
    with pytest.raises(InvalidParameters) as e:
        _run(tmp_path, "x", "field", {"bogus": 1})
    assert e.value.code == 3
    with pytest.raises(InvalidParameters):
        _run(tmp_path, "x", "field", {"samples": -5})
    with pytest.raises(InvalidParameters):
        _run(tmp_path, "x", "lerw", {"estimator": "nothing", "n": 2.0})


def test_output_format(tmp_path):
    m = _run(tmp_path, "o", "lerw", LERW)
    path = tmp_path / "o" / "lerw.csv"
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == f"#config_hash={m.config_hash}"
    assert lines[1] == "n,estimator,value,stderr,outer,inner,seed"
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config_hash"] == m.config_hash and "lerw.csv" in manifest["digests"]


def test_oracle_experiment(tmp_path):
    _run(tmp_path, "k4", "oracle", {"graph": "k4", "task": "trees"})
    info = json.loads((tmp_path / "k4" / "trees.json").read_text())
    assert info["matrix_tree"] == info["enumerated"] == 16


ROWS = "#config_hash=x\nn,estimator,value,stderr\n4,pn-hat,0.1,0.01\n16,pn-hat,0.03,0.002\n"


def test_plot_deterministic_with_reference():
    svg1, data1 = emit_plot_data(ROWS, "pn-hat")
    svg2, data2 = emit_plot_data(ROWS, "pn-hat")
    assert svg1 == svg2 and data1 == data2
    assert "stroke-dasharray" in svg1 and svg1.count("<circle") == 2
    assert data1.splitlines()[1].startswith("4.0,0.4")


def test_plot_empty_and_schema_errors():
    svg, data = emit_plot_data("", "series")
    assert svg.startswith("<svg") and "<circle" not in svg
    with pytest.raises(SchemaMismatch):
        emit_plot_data("a,b\n1,2\n", "series")
    with pytest.raises(SchemaMismatch):
        emit_plot_data(ROWS, "histogram")
    with pytest.raises(SchemaMismatch):
        emit_plot_data("n,value,stderr\n0,1,0\n", "xn")


def test_cli_exit_codes(tmp_path, capsys):
    out = tmp_path / "cli"
    assert main(["oracle", "--graph", "k4", "--task", "trees", "--out-dir", str(out)]) == 0
    assert main(["field", "--n", "3", "--samples", "100", "--set", "bogus=1",
                 "--out-dir", str(out)]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["plot", "--in", str(bad), "--kind", "series", "--out-dir", str(out)]) == 5
    assert main(["field", "--n", "3", "--samples", "200", "--block", "50",
                 "--budget-seconds", "0", "--out-dir", str(out)]) == 4
    target = tmp_path / "copy" / "field.csv"
    target.parent.mkdir()
    assert main(["field", "--n", "3", "--samples", "100", "--out", str(target)]) == 0
    assert target.read_text().startswith("#config_hash=")
    with pytest.raises(SystemExit):
        main(["frobnicate"])
