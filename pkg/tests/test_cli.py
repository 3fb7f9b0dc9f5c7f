import csv
import hashlib
import json

import numpy as np
import pytest

from boostforest.cli import main


@pytest.fixture
def reg_csv(tmp_path):
    rng = np.random.default_rng(0)
    X = rng.uniform(size=(100, 3))
    y = 10 * X[:, 0] + np.sin(4 * X[:, 1]) + 0.1 * rng.normal(size=100) + 50
    p = tmp_path / "reg.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "c", "y"])
        w.writerows(np.column_stack([X, y]).tolist())
    return p


@pytest.fixture
def cls_csv(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.uniform(size=(90, 2))
    lab = np.array(["lo", "mid", "hi"])[(X[:, 0] * 3).astype(int)]
    col = rng.choice(["r", "g"], size=90)
    p = tmp_path / "cls.csv"
    with p.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["a", "b", "col", "label"])
        for row, c, l in zip(X.tolist(), col, lab):
            w.writerow(row + [c, l])
    return p


def run(capsys, *args):
    code = main([str(a) for a in args])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_train_and_predict_regression(tmp_path, reg_csv, capsys):
    model = tmp_path / "m.bf"
    code, out, _ = run(capsys, "train", "--data", reg_csv, "--task", "reg", "--seed", 3,
                       "--n-estimators", 5, "--out", model)
    assert code == 0 and model.exists()
    summary = json.loads(out.strip().splitlines()[-1])
    assert summary["n_trees"] == 5 and summary["seed"] == 3
    assert {"mean_leaves", "train_metric"} <= set(summary)
    pred = tmp_path / "p.csv"
    code, _, _ = run(capsys, "predict", "--model", model, "--data", reg_csv, "--out", pred)
    assert code == 0
    rows = list(csv.reader(pred.open()))
    assert rows[0] == ["index", "prediction"] and len(rows) == 101
    vals = np.array([float(r[1]) for r in rows[1:]])
    assert 45 < vals.mean() < 60  # raw label units


def test_default_pools_are_reference_configuration(tmp_path, reg_csv, capsys):
    from boostforest.cli import _config, build_parser
    args = build_parser().parse_args(["train", "--data", str(reg_csv), "--task", "reg",
                                      "--seed", "1", "--out", "x"])
    cfg = _config(args)
    assert cfg.n_estimators == 100
    assert cfg.pool.min_samples_leaf == tuple(range(5, 16))
    assert cfg.pool.lam == (0.0001, 0.001, 0.01, 0.1)


def test_train_is_reproducible(tmp_path, reg_csv, capsys):
    hashes = []
    for name, threads in (("a.bf", 1), ("b.bf", 2)):
        run(capsys, "train", "--data", reg_csv, "--task", "reg", "--seed", 9,
            "--n-estimators", 4, "--threads", threads, "--out", tmp_path / name)
        hashes.append(hashlib.sha256((tmp_path / name).read_bytes()).hexdigest())
    assert hashes[0] == hashes[1]


def test_classification_predict_layout(tmp_path, cls_csv, capsys):
    model = tmp_path / "c.bf"
    code, _, _ = run(capsys, "train", "--data", cls_csv, "--task", "multiclass",
                     "--categorical-cols", "col", "--seed", 1, "--n-estimators", 3,
                     "--vote", "hard", "--no-weight-filter", "--out", model)
    assert code == 0
    pred = tmp_path / "p.csv"
    assert run(capsys, "predict", "--model", model, "--data", cls_csv, "--out", pred)[0] == 0
    rows = list(csv.reader(pred.open()))
    assert rows[0] == ["index", "class", "p_0", "p_1", "p_2"]
    assert len(rows) == 91 and rows[1][1] in {"lo", "mid", "hi"}
    assert all(abs(sum(float(v) for v in r[2:]) - 1) < 1e-9 for r in rows[1:])


@pytest.mark.parametrize("extra,flag", [
    (["--n-estimators", "0"], "--n-estimators"),
    (["--threads", "0"], "--threads"),
    (["--pool-lambda", "a,b"], "--pool-lambda"),
    (["--base", "boosttree-elm", "--task", "binary"], "--base"),
])
def test_config_errors(tmp_path, reg_csv, capsys, extra, flag):
    args = ["train", "--data", reg_csv, "--seed", 1, "--out", tmp_path / "m.bf"]
    if "--task" not in extra:
        args += ["--task", "reg"]
    code, _, err = run(capsys, *(args + extra))
    assert code == 2 and flag in err


def test_missing_task_and_seed(tmp_path, reg_csv, capsys):
    assert run(capsys, "train", "--data", reg_csv, "--seed", 1, "--out", tmp_path / "m")[0] == 2
    assert run(capsys, "cv", "--data", reg_csv, "--task", "reg", "--out", tmp_path / "m")[0] == 2


def test_data_errors(tmp_path, reg_csv, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b,y\n1,x,2\n")
    assert run(capsys, "train", "--data", bad, "--task", "reg", "--seed", 1,
               "--out", tmp_path / "m.bf")[0] == 3
    model = tmp_path / "m.bf"
    run(capsys, "train", "--data", reg_csv, "--task", "reg", "--seed", 1,
        "--n-estimators", 2, "--out", model)
    narrow = tmp_path / "narrow.csv"
    narrow.write_text("1,2\n3,4\n")
    assert run(capsys, "predict", "--model", model, "--data", narrow,
               "--out", tmp_path / "p.csv")[0] == 3


def test_tampered_model_exit_4(tmp_path, reg_csv, capsys):
    model = tmp_path / "m.bf"
    run(capsys, "train", "--data", reg_csv, "--task", "reg", "--seed", 1,
        "--n-estimators", 2, "--out", model)
    raw = bytearray(model.read_bytes())
    i = raw.rindex(b"5")
    raw[i] = ord("6")
    model.write_bytes(bytes(raw))
    code, _, err = run(capsys, "predict", "--model", model, "--data", reg_csv,
                       "--out", tmp_path / "p.csv")
    assert code == 4 and "checksum" in err


def test_cv_and_sweep(tmp_path, reg_csv, capsys):
    out = tmp_path / "cv.csv"
    code, stdout, _ = run(capsys, "cv", "--data", reg_csv, "--task", "reg", "--seed", 2,
                          "--n-estimators", 3, "--repeats", 5, "--folds", 2, "--out", out)
    assert code == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["dataset", "algorithm", "repeat", "fold", "metric", "value"]
    assert len(rows) == 11
    assert (tmp_path / "cv_aggregate.csv").exists() and "mean" in stdout
    sw = tmp_path / "sw.csv"
    code, _, _ = run(capsys, "sweep", "--data", reg_csv, "--task", "reg", "--seed", 2,
                     "--knob", "n_estimators", "--values", "3,10,50,100", "--repeats", 1,
                     "--out", sw)
    assert code == 0
    assert len(list(csv.reader(sw.open()))) == 5
    code, _, _ = run(capsys, "sweep", "--data", reg_csv, "--task", "reg", "--seed", 2,
                     "--knob", "n_estimators", "--values", "10,3", "--out", sw)
    assert code == 2
