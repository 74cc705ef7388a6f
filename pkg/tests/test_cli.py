import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ctgkit import cli
from ctgkit import modelfile
from ctgkit.experiment import read_predictions
from ctgkit.evaluate import metrics_report
from ctgkit.ingest import dumps_csv
from ctgkit.synthetic import make_ctg_like

QUICK_GRIDS = {
    "svm": {"C": [10], "gamma": ["scale"]},
    "xgb": {"n_rounds": [10], "max_depth": [3]},
    "lgbm": {"n_rounds": [10], "max_leaves": [15]},
    "dt": {"max_depth": [None]},
    "rf": {"n_estimators": [10]},
    "et": {"n_estimators": [10]},
    "knn": {"k": [5]},
}


def run(*argv):
    return cli.main([*map(str, argv)])


def last_error(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


@pytest.fixture(scope="module")
def small_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "ctg.csv"
    path.write_text(dumps_csv(make_ctg_like((300, 60, 40), seed=5)))
    return path


def write_config(path, data, out, **extra):
    doc = {"data_path": str(data), "output_dir": str(out), "master_seed": 7, "grids": QUICK_GRIDS,
           "cv": {"folds": 3}}
    doc.update(extra)
    path.write_text(json.dumps(doc))
    return path


def full_run(tmp, data):
    cfg = write_config(tmp / "cfg.json", data, tmp / "out")
    assert run("--config", cfg, "--quiet", "prepare") == 0
    assert run("--config", cfg, "--quiet", "tune", "all") == 0
    assert run("--config", cfg, "--quiet", "ensemble", "--etse") == 0
    assert run("--config", cfg, "--quiet", "evaluate", "all", "et+svm") == 0
    return tmp / "out", cfg


@pytest.fixture(scope="module")
def two_runs(tmp_path_factory, small_csv):
    a = full_run(tmp_path_factory.mktemp("run_a"), small_csv)
    b = full_run(tmp_path_factory.mktemp("run_b"), small_csv)
    return a, b


# --------------------------------------------------------------------------- errors


def test_missing_data_file_exit_2(tmp_path, capsys):
    code = run("--out", tmp_path / "o", "prepare", "--data", tmp_path / "nope.csv")
    assert code == 2
    rec = last_error(capsys)
    assert rec["exit_code"] == 2 and rec["message"].startswith("file not found")


def test_missing_config_exit_2(tmp_path, capsys):
    assert run("--config", tmp_path / "absent.json", "prepare") == 2
    assert "file not found" in last_error(capsys)["message"]


def test_invalid_config_exit_2(tmp_path, capsys, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o", models=["svm", "perceptron"])
    assert run("--config", cfg, "prepare") == 2
    assert "invalid config" in last_error(capsys)["message"]


def test_usage_errors_exit_2(capsys):
    assert run("frobnicate") == 2
    assert last_error(capsys)["error"] == "usage"
    assert run("--mode", "sloppy", "prepare") == 2


def test_unknown_model_exit_2(tmp_path, capsys, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o")
    assert run("--config", cfg, "--quiet", "prepare") == 0
    assert run("--config", cfg, "tune", "perceptron") == 2
    assert "unknown model" in last_error(capsys)["message"]


def test_single_member_ensemble_exit_2(two_runs, capsys):
    (_, cfg), _ = two_runs
    assert run("--config", cfg, "ensemble", "svm") == 2
    assert "at least 2" in last_error(capsys)["message"]


def test_missing_model_file_exit_2(tmp_path, capsys, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o")
    assert run("--config", cfg, "--quiet", "prepare") == 0
    assert run("--config", cfg, "evaluate", "svm") == 2
    assert last_error(capsys)["message"].startswith("file not found")


def test_truncated_model_file_exit_3(two_runs, tmp_path, capsys):
    (out, _), _ = two_runs
    text = (out / "models" / "dt.json").read_text()
    cut = tmp_path / "o"
    (cut / "models").mkdir(parents=True)
    (cut / "models" / "dt.json").write_text(text[:100])
    for sub in ("prepared",):
        os.symlink(out / sub, cut / sub)
    assert run("--out", cut, "--quiet", "evaluate", "dt") == 3
    rec = last_error(capsys)
    assert rec["error"] == "model_file" and "offset" in rec["message"]


def test_grid_failure_exit_3(tmp_path, capsys, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o",
                       grids={"knn": {"k": [100000]}})
    assert run("--config", cfg, "--quiet", "prepare") == 0
    assert run("--config", cfg, "--quiet", "tune", "knn") == 3
    assert last_error(capsys)["error"] == "grid"


def test_convergence_failure_exit_3(tmp_path, capsys, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o",
                       grids={"svm": {"C": [10], "max_iter": [3]}})
    assert run("--config", cfg, "--quiet", "prepare") == 0
    # the only grid point fails in every fold, so the search itself fails
    assert run("--config", cfg, "--quiet", "tune", "svm") == 3
    assert "ConvergenceError" in last_error(capsys)["message"]


# --------------------------------------------------------------------------- behaviour


def test_prepare_sizes_on_ctg_shaped_data(tmp_path, surrogate, capsys):
    data = tmp_path / "full.csv"
    data.write_text(dumps_csv(surrogate))
    assert run("--out", tmp_path / "o", "--seed", 1, "prepare", "--data", data) == 0
    assert "3475 train / 1490 test" in capsys.readouterr().out
    info = json.loads((tmp_path / "o" / "prepared" / "pipeline.json").read_text())
    assert info["mode"] == "paper_faithful"
    assert sum(info["test_class_counts"]) == 1490


def test_tune_all_writes_seven_models(two_runs):
    (out, _), _ = two_runs
    names = sorted(p.stem for p in (out / "models").glob("*.json"))
    assert names == sorted(["svm", "xgb", "lgbm", "dt", "rf", "et", "knn", "et+svm"])
    svm = modelfile.load_model(out / "models" / "svm.json")
    assert svm.metadata["params"] == {"C": 10, "gamma": "scale"}
    assert svm.model.params.C == 10
    grid = json.loads((out / "tuning" / "svm.grid.json").read_text())
    assert len(grid["table"]) == 1


def test_etse_is_voting_over_et_and_svm(two_runs):
    (out, _), _ = two_runs
    ens = modelfile.load_model(out / "models" / "et+svm.json")
    assert ens.kind == "voting" and set(ens.model.names) == {"et", "svm"}
    assert ens.metadata["proposed"] is True


def test_three_member_ensemble(two_runs):
    (out, cfg), _ = two_runs
    assert run("--config", cfg, "--quiet", "ensemble", "svm", "et", "rf") == 0
    ens = modelfile.load_model(out / "models" / "svm+et+rf.json")
    assert ens.model.names == ("svm", "et", "rf")


def test_seventeen_row_overall_table(two_runs):
    (out, _), _ = two_runs
    rows = (out / "metrics_overall.csv").read_text().splitlines()
    assert len(rows) == 1 + 17
    doc = json.loads((out / "report.json").read_text())
    proposed = [r for r in doc["results"] if r["proposed"]]
    assert len(proposed) == 1 and proposed[0]["slug"] == "et+svm"


def test_two_runs_are_byte_identical(two_runs):
    (a, _), (b, _) = two_runs
    for rel in ("prepared/train.csv", "prepared/test.csv", "metrics_overall.csv",
                "metrics_per_class.csv", "confusion.csv", "confusion.txt"):
        assert (a / rel).read_bytes() == (b / rel).read_bytes(), rel
    for name in ("svm", "et", "xgb"):
        pa = json.loads((a / "models" / f"{name}.json").read_text())
        pb = json.loads((b / "models" / f"{name}.json").read_text())
        assert pa["payload"] == pb["payload"]


def test_report_matches_persisted_predictions(two_runs):
    (out, cfg), _ = two_runs
    before = json.loads((out / "report.json").read_text())["results"]
    assert run("--config", cfg, "--quiet", "report") == 0
    after = json.loads((out / "report.json").read_text())["results"]
    sets = {s.slug: s for s in read_predictions(out / "predictions")}
    for x, y in zip(before, after):
        assert x["name"] == y["name"]
        assert abs(x["accuracy"] - y["accuracy"]) <= 1e-9
        s = sets[x["slug"]]
        assert abs(metrics_report(s.y_true, s.y_pred).accuracy - x["accuracy"]) <= 1e-9


def test_perfect_predictions_row(tmp_path):
    from ctgkit.experiment import PredictionSet, render_outputs

    y = np.array([0, 1, 2, 0, 0])
    doc = render_outputs(tmp_path, [PredictionSet("Oracle", "oracle", ("oracle",), False, y, y)])
    assert doc["results"][0]["accuracy_2dp"] == "100.00"
    assert "100.00" in (tmp_path / "metrics_overall.csv").read_text()


def test_leakage_safe_flagged(tmp_path, small_csv):
    cfg = write_config(tmp_path / "c.json", small_csv, tmp_path / "o", models=["knn"], ensembles=[])
    assert run("--config", cfg, "--mode", "leakage_safe", "--quiet", "prepare") == 0
    assert run("--config", cfg, "--quiet", "tune", "knn") == 0
    assert run("--config", cfg, "--quiet", "evaluate") == 0
    text = (tmp_path / "o" / "report.txt").read_text()
    assert "leakage_safe" in text
    assert json.loads((tmp_path / "o" / "prepared" / "pipeline.json").read_text())["mode"] == "leakage_safe"


def test_global_flags_before_and_after_subcommand(tmp_path, small_csv):
    assert run("--seed", 3, "--out", tmp_path / "a", "--quiet", "prepare", "--data", small_csv) == 0
    assert run("prepare", "--data", small_csv, "--seed", 3, "--out", tmp_path / "b", "--quiet") == 0
    assert (tmp_path / "a" / "prepared" / "train.csv").read_bytes() == \
        (tmp_path / "b" / "prepared" / "train.csv").read_bytes()


def test_out_dir_env_fallback(tmp_path, small_csv, monkeypatch):
    monkeypatch.setenv("CTG_OUT_DIR", str(tmp_path / "env_out"))
    assert run("--quiet", "prepare", "--data", small_csv) == 0
    assert (tmp_path / "env_out" / "prepared" / "test.csv").exists()


def test_interrupted_write_leaves_no_file(tmp_path, monkeypatch):
    target = tmp_path / "models" / "m.json"

    def boom(src, dst):
        raise KeyboardInterrupt

    monkeypatch.setattr(modelfile.os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        modelfile.atomic_write_text(target, "{}")
    assert list((tmp_path / "models").iterdir()) == []


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ctgkit.cli", "prepare", "--data", str(tmp_path / "x.csv"),
                           "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert proc.returncode == 2
    assert json.loads(proc.stderr.strip().splitlines()[-1])["error"] == "file_not_found"
