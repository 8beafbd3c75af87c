import json
import os
import subprocess
import sys
from collections import Counter

import numpy as np
import pytest

from symnorm.cli import run
from symnorm.groups import SO2
from symnorm.oracle import Dataset, load_dataset, save_dataset


def read(path):
    with open(path, "rb") as fh:
        return fh.read()


def tree(directory):
    out = {}
    for root, _, files in os.walk(directory):
        for f in files:
            p = os.path.join(root, f)
            out[os.path.relpath(p, directory)] = read(p)
    return out


@pytest.fixture(scope="module")
def mnist(tmp_path_factory):
    d = tmp_path_factory.mktemp("mnist")
    assert run(["gen", "--experiment", "mnist_analog", "--n", "60", "--seed", "3", "--out", str(d)]) == 0
    return d


def test_gen_is_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run(["gen", "--n", "40", "--seed", "1", "--out", str(tmp_path / name)]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")
    assert run(["gen", "--n", "40", "--seed", "2", "--out", str(tmp_path / "c")]) == 0
    assert read(tmp_path / "c" / "dataset.jsonl") != read(tmp_path / "a" / "dataset.jsonl")


def test_seed_flag_accepted_before_subcommand(tmp_path):
    assert run(["--seed", "1", "gen", "--n", "40", "--out", str(tmp_path / "a")]) == 0
    assert run(["gen", "--n", "40", "--seed", "1", "--out", str(tmp_path / "b")]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


@pytest.mark.parametrize("cmd, extra", [
    ("normalize", []), ("estimate", []), ("eval", ["--truth", "truth.json"]), ("ood", []),
    ("frechet", None)])
def test_pipeline_commands_are_deterministic(mnist, tmp_path, cmd, extra):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        if extra is None:
            argv = [cmd, str(mnist / "dataset.jsonl")]
        else:
            argv = [cmd, "--data", str(mnist / "dataset.jsonl")] + \
                [str(mnist / x) if x.endswith(".json") else x for x in extra]
        assert run(argv + ["--out", str(out)]) == 0
        outs.append(tree(out))
    assert outs[0] == outs[1] and outs[0]


def test_eval_report_schema(mnist, tmp_path):
    assert run(["normalize", "--data", str(mnist / "dataset.jsonl"), "--out", str(tmp_path)]) == 0
    assert run(["eval", "--data", str(mnist / "dataset.jsonl"), "--truth", str(mnist / "truth.json"),
                "--labels", str(tmp_path / "pseudo_labels.jsonl"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert len(rep["per_class"]) == 10
    for entry in rep["per_class"].values():
        assert {"n", "w1", "theta_error", "theta_pred", "theta_true"} <= set(entry)
        assert entry["theta_pred"]["family"] == "uniform_arc"
    assert rep["aggregate"]["mae_deg"] >= 0
    hists = sorted(os.listdir(tmp_path / "histograms"))
    assert hists and all(h.endswith(".csv") for h in hists)


def test_labels_file_gives_same_estimates(mnist, tmp_path):
    data = str(mnist / "dataset.jsonl")
    assert run(["normalize", "--data", data, "--out", str(tmp_path / "n")]) == 0
    assert run(["estimate", "--data", data, "--out", str(tmp_path / "a")]) == 0
    assert run(["estimate", "--data", data, "--labels", str(tmp_path / "n" / "pseudo_labels.jsonl"),
                "--out", str(tmp_path / "b")]) == 0
    assert tree(tmp_path / "a") == tree(tmp_path / "b")


def test_fisher_gen_has_64_per_class(tmp_path):
    assert run(["gen", "--experiment", "fisher_analog", "--out", str(tmp_path)]) == 0
    counts = Counter(load_dataset(tmp_path / "dataset.jsonl").class_ids)
    assert len(counts) == 30 and min(counts.values()) >= 64


def test_ood_report(mnist, tmp_path):
    assert run(["ood", "--data", str(mnist / "dataset.jsonl"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "ood_report.json").read_text())
    assert 0.5 < rep["auc"] <= 1.0 and rep["n_in"] == rep["n_out"] == 600
    assert (tmp_path / "ood_scores.csv").read_text().startswith("sample_id,class,log_likelihood,label")


def test_custom_config(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('seed = 4\nn_per_class = 30\ngroup = "so2"\n[[class]]\nid = "a"\nfamily = "wrapped_gaussian"\n'
                   'sigma_deg = 20\n[[class]]\nid = "b"\nfamily = "uniform_arc"\nhalf_width_deg = 45\n')
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 0
    ds = load_dataset(tmp_path / "dataset.jsonl")
    assert ds.class_ids.count("a") == 30 and ds.group == SO2


# --- exit codes -------------------------------------------------------------------------

def test_duplicate_class_id_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "dup.toml"
    cfg.write_text('group = "so2"\n[[class]]\nid = "a"\nfamily = "uniform_arc"\nhalf_width_deg = 30\n'
                   '[[class]]\nid = "a"\nfamily = "uniform_arc"\nhalf_width_deg = 40\n')
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    assert "duplicate" in capsys.readouterr().err


def test_group_mismatch_is_config_error(mnist, tmp_path):
    cfg = tmp_path / "so3.toml"
    cfg.write_text('group = "so3"\n')
    assert run(["normalize", "--data", str(mnist / "dataset.jsonl"), "--config", str(cfg),
                "--out", str(tmp_path)]) == 2
    assert run(["normalize", "--data", str(mnist / "dataset.jsonl"), "--family", "matrix_fisher",
                "--out", str(tmp_path)]) == 2
    assert not (tmp_path / "pseudo_labels.jsonl").exists()


def test_unknown_config_key_is_config_error(tmp_path):
    cfg = tmp_path / "bad.toml"
    cfg.write_text("neighbours = 5\n")
    assert run(["gen", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_file_is_data_error(tmp_path):
    assert run(["normalize", "--data", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 3
    assert run(["frechet", str(tmp_path / "nope.jsonl"), "--out", str(tmp_path)]) == 3


def test_degenerate_data_aborts_with_numeric_code(tmp_path):
    angles = np.linspace(-np.pi, np.pi, 8, endpoint=False)
    save_dataset(Dataset(SO2, ["u"] * 8, np.ones((8, 2)), angles), tmp_path / "d.jsonl")
    assert run(["normalize", "--data", str(tmp_path / "d.jsonl"), "--k", "8",
                "--out", str(tmp_path)]) == 4


def test_frechet_command(tmp_path, capsys):
    path = tmp_path / "poses.jsonl"
    path.write_text("".join(json.dumps({"type": "so2", "angle": float(np.deg2rad(a))}) + "\n"
                            for a in (150, 180, 210)))
    assert run(["frechet", str(path), "--out", str(tmp_path)]) == 0
    mean = json.loads((tmp_path / "frechet.json").read_text())["mean"]["angle"]
    assert abs(abs(mean) - np.pi) < 1e-12
    assert capsys.readouterr().out.startswith("frechet:")


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "symnorm.cli", "gen", "--n", "5",
                          "--out", str(tmp_path)], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("gen:")
    res = subprocess.run([sys.executable, "-m", "symnorm.cli", "gen", "--experiment", "nope"],
                         capture_output=True, text=True)
    assert res.returncode == 2
