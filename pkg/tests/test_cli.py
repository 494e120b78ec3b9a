import csv
import json
import subprocess
import sys

import pytest

from corelw.cli import main
from corelw.config import CONFIG_ENV

TINY = "embedding_path: e.txt\nembedding_dim: 8\nhidden_dim: 4\nconv_dim: 4\nepochs: 1\nbatch_size: 64\ntriplets_per_anchor: 2\n"


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "c.csv"), "--size", "24", "--embeddings", str(d / "e.txt"),
                 "--dim", "8"]) == 0
    (d / "cfg.yaml").write_text(TINY)
    return d


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def _drop_timestamp(path):
    data = json.loads(path.read_text())
    data.pop("timestamp")
    return data


def test_synth_command(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out", tmp_path / "x" / "s.csv", "--size", 150, "--levels", 4)
    assert code == 0
    rows = list(csv.DictReader((tmp_path / "x" / "s.csv").open()))
    assert len(rows) == 150 and {r["score"] for r in rows} == {"1", "2", "3", "4"}


def test_train_outputs_and_determinism(workspace, capsys):
    for name in ("r1", "r2"):
        code, _, err = run(capsys, "train", "--corpus", workspace / "c.csv", "--config", workspace / "cfg.yaml",
                           "--out", workspace / name)
        assert code == 0, err
        assert {p.name for p in (workspace / name).iterdir()} == {"checkpoint.json", "report.json", "config.echo"}
    assert _drop_timestamp(workspace / "r1" / "report.json") == _drop_timestamp(workspace / "r2" / "report.json")
    assert (workspace / "r1" / "checkpoint.json").read_bytes() == (workspace / "r2" / "checkpoint.json").read_bytes()
    echo = (workspace / "r1" / "config.echo").read_text()
    assert "hidden_dim: 4" in echo and "learning_rate: 0.01" in echo


def test_missing_embeddings_is_load_error_without_checkpoint(workspace, capsys):
    out_dir = workspace / "bad"
    code, _, err = run(capsys, "train", "--corpus", workspace / "c.csv", "--config", workspace / "cfg.yaml",
                       "--set", "embedding_path=/nonexistent/vectors.txt", "--out", out_dir)
    assert code == 3
    assert err.startswith("ERROR load_error:") and err.count("\n") == 1
    assert not (out_dir / "checkpoint.json").exists()


def test_unknown_key_aborts(workspace, capsys):
    code, _, err = run(capsys, "evaluate", "--corpus", workspace / "c.csv", "--set", "lr=0.1",
                       "--out", workspace / "never")
    assert code == 2 and err.startswith("ERROR config_error:")
    assert not (workspace / "never").exists()


def test_predict(workspace, capsys):
    ck = workspace / "r1" / "checkpoint.json"
    if not ck.exists():
        run(capsys, "train", "--corpus", workspace / "c.csv", "--config", workspace / "cfg.yaml", "--out", workspace / "r1")
    code, out, err = run(capsys, "predict", "--checkpoint", ck, "--train-corpus", workspace / "c.csv",
                         "--test-corpus", workspace / "c.csv", "--out", workspace / "p.csv")
    assert code == 0, err
    rows = list(csv.DictReader((workspace / "p.csv").open()))
    assert len(rows) == 24
    assert all(len(r["neighbor_ids"].split(";")) == 7 for r in rows)
    assert all(1 <= int(r["predicted"]) <= 4 for r in rows)

    (workspace / "empty.csv").write_text("id,score,text\n")
    code, _, _ = run(capsys, "predict", "--checkpoint", ck, "--train-corpus", workspace / "c.csv",
                     "--test-corpus", workspace / "empty.csv", "--out", workspace / "pe.csv")
    assert code == 0
    assert (workspace / "pe.csv").read_text() == "id,gold,predicted,raw_mean,neighbor_ids,neighbor_distances\n"

    code, _, err = run(capsys, "predict", "--checkpoint", ck, "--train-corpus", workspace / "c.csv",
                       "--test-corpus", workspace / "c.csv", "--out", workspace / "px.csv", "-k", 25)
    assert code == 2 and "K=25" in err

    code, out, err = run(capsys, "kappa", workspace / "p.csv")
    assert code == 0
    result = json.loads(out)
    assert set(result) == {"n", "num_levels", "qwk", "linear_kappa"} and result["n"] == 24


def test_evaluate_single_repeat(workspace, capsys, monkeypatch):
    monkeypatch.setenv(CONFIG_ENV, str(workspace / "cfg.yaml"))
    for name in ("e1", "e2"):
        code, out, err = run(capsys, "evaluate", "--corpus", workspace / "c.csv", "--repeats", 1,
                             "--method", "corel-lstm", "--out", workspace / name)
        assert code == 0, err
    report = _drop_timestamp(workspace / "e1" / "protocol_report.json")
    assert report == _drop_timestamp(workspace / "e2" / "protocol_report.json")
    assert len(report["repeats"]) == 1 and report["method"] == "corel-lstm"
    assert report["config"]["hidden_dim"] == 4
    assert len(report["run_id"]) == 12
    rows = list(csv.reader((workspace / "e1" / "consistency.csv").open()))
    assert rows[0][:3] == ["consistency", "id", "original_score"] and len(rows) == 25


def test_evaluate_baseline(workspace, capsys):
    code, _, err = run(capsys, "evaluate", "--corpus", workspace / "c.csv", "--config", workspace / "cfg.yaml",
                       "--repeats", 2, "--method", "baseline-bilstm", "--out", workspace / "eb")
    assert code == 0, err
    assert len(json.loads((workspace / "eb" / "protocol_report.json").read_text())["repeats"]) == 2


def test_kappa_command(tmp_path, capsys):
    path = tmp_path / "pairs.csv"
    path.write_text("true,pred\n1,4\n4,1\n")
    code, out, _ = run(capsys, "kappa", path, "--levels", 4)
    assert code == 0 and json.loads(out)["qwk"] == pytest.approx(-1.0)
    path.write_text("true,pred\n2,2\n2,2\n")
    code, _, err = run(capsys, "kappa", path)
    assert code == 6 and err.startswith("ERROR undefined_kappa:")
    path.write_text("a,b\n1,2\n")
    code, _, err = run(capsys, "kappa", path)
    assert code == 3


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "corelw", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "corelw" in res.stdout
