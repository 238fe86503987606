import csv
import json

import numpy as np
import pytest

from mprtkit import config as cfgmod
from mprtkit.cli import (
    EXIT_DATA,
    EXIT_OK,
    EXIT_USAGE,
    cmd_evaluate,
    cmd_layer_order_report,
    cmd_metaeval,
    cmd_train,
    load_model,
    load_splits,
    main,
)
from mprtkit.config import ExperimentConfig, config_hash
from mprtkit.metrics import curve_auc
from mprtkit.nn import accuracy
from mprtkit.nn.checkpoint import to_dict

from doubles import coin_flip_metric

SMALL = {
    ("dataset", "n_classes"): "4", ("dataset", "n_train"): "50", ("dataset", "n_test"): "10",
    ("dataset", "n_eval"): "6", ("model", "epochs"): "8",
    ("metric", "methods"): "Gradient, Saliency, GradCAM, Random",
    ("metaeval", "methods"): "Gradient, Saliency, Random", ("metaeval", "K"): "2",
    ("metaeval", "iterations"): "2",
}


def make_cfg(out, **extra):
    cfg = cfgmod.update(ExperimentConfig(), {**SMALL, ("output", "dir"): str(out)})
    return cfgmod.update(cfg, {tuple(k.split("__")): v for k, v in extra.items()}) if extra else cfg


def read_csv(path):
    with open(path, newline="") as f:
        lines = f.read().splitlines()
    assert lines[0].startswith("# mprtkit ")
    return list(csv.DictReader(lines[1:]))


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = make_cfg(out)
    cmd_train(cfg)
    return cfg


# ---------------------------------------------------------------- train

def test_train_writes_checkpoint_and_log(trained):
    model = load_model(trained)
    _, test = load_splits(trained)
    assert accuracy(model, test) > 0.5
    rows = read_csv(f"{trained.output.dir}/train_log.csv")
    assert len(rows) == 8
    assert float(rows[-1]["loss"]) < float(rows[0]["loss"])


def test_train_deterministic(tmp_path, trained):
    other = make_cfg(tmp_path)
    cmd_train(other)
    a = open(f"{trained.output.dir}/model.json", "rb").read()
    b = open(f"{other.output.dir}/model.json", "rb").read()
    assert a == b


def test_train_zero_epochs_is_untrained(tmp_path):
    from mprtkit.nn.zoo import build_model
    cfg = make_cfg(tmp_path, model__epochs="0")
    cmd_train(cfg)
    want = build_model("toy_cnn", (1, 16, 16), 4, seed=0)
    assert to_dict(load_model(cfg))["layers"] == to_dict(want)["layers"]


def test_reload_same_accuracy(trained):
    _, test = load_splits(trained)
    assert accuracy(load_model(trained), test) == accuracy(load_model(trained), test)


# ---------------------------------------------------------------- evaluate

@pytest.fixture(scope="module")
def evaluated(trained, tmp_path_factory):
    out = tmp_path_factory.mktemp("eval")
    cfg = cfgmod.update(trained, {("output", "dir"): str(out),
                                  ("model", "checkpoint"): f"{trained.output.dir}/model.json"})
    cmd_evaluate(cfg, threads=1)
    return cfg


def test_evaluate_thread_invariance(evaluated, tmp_path):
    cfg = cfgmod.update(evaluated, {("output", "dir"): str(tmp_path)})
    cmd_evaluate(cfg, threads=3)
    for name in ("curves.csv", "scalars.csv", "summary.csv", "ranking.csv", "skips.csv"):
        assert open(f"{evaluated.output.dir}/{name}", "rb").read() == open(tmp_path / name, "rb").read()


def test_evaluate_outputs(evaluated):
    d = evaluated.output.dir
    ranking = read_csv(f"{d}/ranking.csv")
    assert len(ranking) == len(evaluated.metric.methods)
    assert [r["rank"] for r in ranking] == ["R1", "R2", "R3", "R4"]
    curves = read_csv(f"{d}/curves.csv")
    summary = {r["method"]: r for r in read_csv(f"{d}/summary.csv")}
    for method in ("Gradient", "Random"):
        rows = [r for r in curves if r["method"] == method]
        steps = sorted({int(r["step"]) for r in rows})
        mean = [np.mean([float(r["score"]) for r in rows if int(r["step"]) == k]) for k in steps]
        auc = curve_auc(np.arange(1, len(mean) + 1), np.array(mean))
        assert float(summary[method]["auc"]) == pytest.approx(auc, rel=1e-12)
        assert int(summary[method]["n"]) == evaluated.dataset.n_eval
    header = open(f"{d}/summary.csv").readline()
    assert f"config={config_hash(evaluated)}" in header and "command=evaluate" in header


def test_evaluate_mlp_gradcam_skip(trained, tmp_path):
    cfg = cfgmod.update(trained, {("model", "arch"): "mlp", ("output", "dir"): str(tmp_path),
                                  ("metric", "methods"): "Gradient, GradCAM"})
    cmd_train(cfg)
    cmd_evaluate(cfg)
    skips = read_csv(tmp_path / "skips.csv")
    assert [s["method"] for s in skips] == ["GradCAM"]
    ranking = {r["method"]: r["rank"] for r in read_csv(tmp_path / "ranking.csv")}
    assert ranking == {"Gradient": "R1", "GradCAM": "NA"}


def test_evaluate_emprt_and_dump(evaluated, tmp_path):
    cfg = cfgmod.update(evaluated, {("output", "dir"): str(tmp_path), ("metric", "metric"): "emprt",
                                    ("metric", "methods"): "Gradient, Random", ("metric", "dump"): "true"})
    cmd_evaluate(cfg)
    scalars = read_csv(tmp_path / "scalars.csv")
    assert len(scalars) == 2 * cfg.dataset.n_eval
    lines = (tmp_path / "attributions.jsonl").read_text().splitlines()
    assert len(lines) > 0 and all(json.loads(l) for l in lines)


# ---------------------------------------------------------------- metaeval

def test_metaeval_outputs(evaluated, tmp_path):
    cfg = cfgmod.update(evaluated, {("output", "dir"): str(tmp_path), ("metaeval", "iterations"): "1"})
    cmd_metaeval(cfg, score_fn=coin_flip_metric, higher_is_better=True)
    doc = json.load(open(tmp_path / "metaeval.json"))
    assert doc["config"] == cfg.to_dict()
    assert doc["config_hash"] == config_hash(cfg)
    rows = read_csv(tmp_path / "metaeval.csv")
    assert [r["setting"] for r in rows] == ["IPT", "MPT", "MC_bar"]
    assert all(float(r["mc_std"]) == 0.0 for r in rows)
    assert rows[0]["method_set"] == "Gradient+Saliency+Random"


def test_metaeval_builtin_metric(evaluated, tmp_path):
    cfg = cfgmod.update(evaluated, {("output", "dir"): str(tmp_path), ("metaeval", "iterations"): "1",
                                    ("metric", "metric"): "emprt", ("metric", "bins"): "20"})
    cmd_metaeval(cfg)
    mc = float(read_csv(tmp_path / "metaeval.csv")[-1]["mc"])
    assert 0.0 <= mc <= 1.0


# ---------------------------------------------------------------- layer order

def test_layer_order_report(evaluated, tmp_path):
    cfg = cfgmod.update(evaluated, {("output", "dir"): str(tmp_path),
                                    ("metric", "methods"): "Gradient, Random"})
    cmd_layer_order_report(cfg)
    rows = read_csv(tmp_path / "layer_order.csv")
    for method in ("Gradient", "Random"):
        assert {r["order"] for r in rows if r["method"] == method} == {"TopDown", "BottomUp"}
    final = [r for r in rows if r["order"] == "BottomUp" and r["method"] == "Gradient"][-1]
    assert abs(float(final["model_accuracy"]) - 1 / cfg.dataset.n_classes) <= 0.2
    # AUC agrees with evaluate run on the same order
    bu = cfgmod.update(cfg, {("output", "dir"): str(tmp_path / "bu")})
    cmd_evaluate(bu)
    summary = {r["method"]: float(r["auc"]) for r in read_csv(tmp_path / "bu" / "summary.csv")}
    assert float(final["auc"]) == pytest.approx(summary["Gradient"], rel=1e-12)


# ---------------------------------------------------------------- entry point

def test_main_exit_codes(trained, tmp_path, capsys):
    ckpt = f"{trained.output.dir}/model.json"
    flags = ["--dataset-n-classes", "4", "--dataset-n-train", "50", "--dataset-n-test", "10",
             "--dataset-n-eval", "3", "--model-checkpoint", ckpt, "--metric-methods", "Gradient"]
    assert main(["evaluate", "--out", str(tmp_path / "ok"), "--threads", "2"] + flags) == EXIT_OK
    assert (tmp_path / "ok" / "curves.csv").exists()
    assert main(["evaluate", "--metric-order", "Sideways"] + flags) == EXIT_USAGE
    assert main(["evaluate", "--threads", "0"] + flags) == EXIT_USAGE
    with pytest.raises(SystemExit) as e:
        main(["nosuchcommand"])
    assert e.value.code == EXIT_USAGE
    bad = ["--dataset-n-classes", "4", "--model-checkpoint", str(tmp_path / "missing.json")]
    assert main(["evaluate", "--out", str(tmp_path / "x")] + bad) == EXIT_DATA
    (tmp_path / "corrupt.json").write_text("{not json")
    bad[-1] = str(tmp_path / "corrupt.json")
    assert main(["evaluate", "--out", str(tmp_path / "x")] + bad) == EXIT_DATA
    assert main(["train", "--config", str(tmp_path / "nope.ini")]) == EXIT_USAGE


def test_main_config_file(tmp_path):
    cfg = make_cfg(tmp_path / "o", model__epochs="1")
    cfgmod.save(cfg, tmp_path / "c.ini")
    assert main(["train", "--config", str(tmp_path / "c.ini")]) == EXIT_OK
    assert (tmp_path / "o" / "model.json").exists()
