import json
import subprocess
import sys

import pytest

from ecgmamba.cli import main
from ecgmamba.train import read_log

TINY = """\
seq_len = 136
d_model = 8
n_blocks = 1
d_state = 4
warmup_epochs = 1
cosine_epochs = 1
total_epochs = 2
batch_size = 8
"""


def run(*argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:  # argparse usage errors
        return exc.code


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert run("synth", "--out", root / "data", "--records", 40, "--classes", 2, "--seed", 1) == 0
    (root / "tiny.cfg").write_text(TINY)
    assert run("train", "--data", root / "data", "--config", root / "tiny.cfg", "--out", root / "run", "--folds", 2) == 0
    return root


def test_synth_file_contract(tmp_path):
    out = tmp_path / "c"
    assert run("synth", "--out", out, "--records", 64, "--classes", 2, "--seed", 1) == 0
    assert len(list(out.glob("*.ecg"))) == 64
    assert (out / "labels.csv").exists() and (out / "labelmap.csv").exists()
    assert len((out / "labels.csv").read_text().splitlines()) == 65
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 1


def test_synth_rerun_byte_identical(tmp_path):
    for name in ("a", "b"):
        assert run("synth", "--out", tmp_path / name, "--records", 6, "--classes", 3, "--seed", 4) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir() if p.name != "manifest.json")
    for f in files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["synth", "--out", "x", "--classes", "0"],
        ["synth", "--out", "x", "--records", "many"],
        ["train", "--data", "x", "--folds", "1"],
        ["eval", "--data", "x"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert run(*argv) == 2


def test_train_structure(workspace):
    run_dir = workspace / "run"
    assert sorted(p.name for p in run_dir.glob("fold_*")) == ["fold_0", "fold_1"]
    for j in range(2):
        for f in ("train_log.tsv", "best.ckpt", "final.ckpt", "curves.png"):
            assert (run_dir / f"fold_{j}" / f).stat().st_size > 0
    summary = (run_dir / "summary.tsv").read_text().splitlines()
    assert summary[0].split("\t") == ["fold", "val_auprc", "val_auroc", "test_auprc", "test_auroc"]
    assert [line.split("\t")[0] for line in summary[1:]] == ["0", "1", "mean", "std"]
    vals = [float(line.split("\t")[1]) for line in summary[1:3]]
    assert float(summary[3].split("\t")[1]) == pytest.approx(sum(vals) / 2)


def test_train_five_folds(tmp_path, workspace):
    data = tmp_path / "d100"
    assert run("synth", "--out", data, "--records", 100, "--classes", 2, "--seed", 0) == 0
    cfg = tmp_path / "c.cfg"
    cfg.write_text(TINY.replace("total_epochs = 2", "total_epochs = 1").replace("warmup_epochs = 1", "warmup_epochs = 0"))
    assert run("train", "--data", data, "--config", cfg, "--out", tmp_path / "r", "--folds", 5) == 0
    assert len(list((tmp_path / "r").glob("fold_*"))) == 5
    lines = (tmp_path / "r" / "summary.tsv").read_text().splitlines()
    assert lines[6].startswith("mean\t") and lines[7].startswith("std\t")


def test_train_rerun_from_manifest_is_identical(workspace, tmp_path):
    manifest = json.loads((workspace / "run" / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["folds"] == 2
    assert manifest["model_config"]["d_model"] == 8 and manifest["train_config"]["batch_size"] == 8
    cfg = tmp_path / "from_manifest.cfg"
    items = {**manifest["model_config"], **manifest["train_config"], "test_frac": manifest["test_frac"]}
    cfg.write_text("".join(f"{k} = {v}\n" for k, v in items.items()))
    argv = ["train", "--data", manifest["corpus"], "--config", cfg, "--out", tmp_path / "again"]
    assert run(*argv, "--folds", manifest["folds"], "--seed", manifest["seed"]) == 0
    for f in ("summary.tsv", "split.tsv", "fold_0/train_log.tsv", "fold_1/final.ckpt"):
        assert (workspace / "run" / f).read_bytes() == (tmp_path / "again" / f).read_bytes()


def test_train_errors_exit_1(tmp_path, workspace):
    assert run("train", "--data", tmp_path / "missing", "--out", tmp_path / "o") == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("d_model = eight\n")
    assert run("train", "--data", workspace / "data", "--config", bad, "--out", tmp_path / "o") == 1


def test_eval_reproduces_logged_metrics(workspace, tmp_path):
    run_dir = workspace / "run"
    out = tmp_path / "ev"
    argv = ["eval", "--checkpoint", run_dir / "fold_1" / "final.ckpt", "--data", workspace / "data"]
    assert run(*argv, "--split", run_dir / "split.tsv", "--fold", 1, "--out", out) == 0
    kv = dict(line.split("=", 1) for line in (out / "report.kv").read_text().splitlines())
    last = read_log(run_dir / "fold_1" / "train_log.tsv")[-1]
    assert float(kv["macro_auprc"]) == last.val_auprc
    assert float(kv["macro_auroc"]) == last.val_auroc
    assert (out / "report.png").stat().st_size > 0 and (out / "report.txt").exists()


def test_eval_restricts_to_test_ids(workspace, tmp_path):
    run_dir = workspace / "run"
    out = tmp_path / "ev"
    argv = ["eval", "--checkpoint", run_dir / "fold_0" / "best.ckpt", "--data", workspace / "data"]
    assert run(*argv, "--split", run_dir / "split.tsv", "--out", out) == 0
    n_test = sum(1 for line in (run_dir / "split.tsv").read_text().splitlines() if "\ttest\t" in line)
    kv = dict(line.split("=", 1) for line in (out / "report.kv").read_text().splitlines())
    for c in (0, 1):
        if f"class.{c}.n_pos" in kv:
            assert int(kv[f"class.{c}.n_pos"]) + int(kv[f"class.{c}.n_neg"]) == n_test


def test_eval_mismatched_classes_exit_1(workspace, tmp_path, capsys):
    data3 = tmp_path / "d3"
    assert run("synth", "--out", data3, "--records", 8, "--classes", 3, "--seed", 0) == 0
    ckpt = workspace / "run" / "fold_0" / "final.ckpt"
    assert run("eval", "--checkpoint", ckpt, "--data", data3, "--out", tmp_path / "e") == 1
    assert "2 classes" in capsys.readouterr().err


def test_plot(workspace, tmp_path):
    out = tmp_path / "curves.png"
    assert run("plot", "--log", workspace / "run" / "fold_0" / "train_log.tsv", "--out", out) == 0
    assert out.stat().st_size > 0
    empty = tmp_path / "empty.tsv"
    empty.write_text("# epoch\tlr\ttrain_loss\tval_auprc\tval_auroc\n")
    assert run("plot", "--log", empty, "--out", tmp_path / "e.png") == 1
    bad = tmp_path / "bad.tsv"
    bad.write_text("0\tnot-a-number\n")
    assert run("plot", "--log", bad, "--out", tmp_path / "b.png") == 1


def test_console_script_exit_codes(tmp_path):
    ok = subprocess.run([sys.executable, "-m", "ecgmamba.cli", "--version"], capture_output=True, text=True)
    assert ok.returncode == 0 and ok.stdout.strip() == "0.1.0"
    usage = subprocess.run([sys.executable, "-m", "ecgmamba.cli", "synth", "--out", tmp_path, "--classes", "0"])
    assert usage.returncode == 2
