import csv
import json

import pytest

from cliqueqnn.ansatz import load_checkpoint
from cliqueqnn.cli import main
from cliqueqnn.dataset import DatasetEntry, DatasetManifest, load_manifest, save_manifest
from cliqueqnn.graphs import Graph


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture
def data(tmp_path):
    path = tmp_path / "d.jsonl"
    assert main(["gen-data", "--cells", "3-4:all", "--out", str(path)]) == 0
    return path


@pytest.fixture
def trained(tmp_path, data):
    out = tmp_path / "run"
    assert main(["train", "--data", str(data), "--out", str(out), "--layers", "2",
                 "--epochs", "3", "--batch-size", "8"]) == 0
    return out


class TestGenData:
    def test_exhaustive_counts(self, tmp_path, capsys):
        path = tmp_path / "all.jsonl"
        assert main(["gen-data", "--cells", "2-6:all", "--out", str(path)]) == 0
        assert len(load_manifest(path)) == 2 + 4 + 11 + 34 + 156
        assert "total: 207" in capsys.readouterr().out
        rec = json.loads((tmp_path / "all.jsonl.run.json").read_text())
        assert rec["seed"] == 0 and rec["command"] == "gen-data"

    def test_refuses_overwrite(self, data):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--cells", "3:all", "--out", str(data)])
        assert exc.value.code == 2
        assert main(["gen-data", "--cells", "3:all", "--out", str(data), "--force"]) == 0
        assert len(load_manifest(data)) == 4

    @pytest.mark.parametrize("cells", ["", "3:", "x:all", "3:1.5:10"])
    def test_bad_cells(self, tmp_path, cells):
        with pytest.raises(SystemExit) as exc:
            main(["gen-data", "--cells", cells, "--out", str(tmp_path / "x.jsonl")])
        assert exc.value.code == 2


class TestTrain:
    def test_outputs_and_echo(self, tmp_path, data, capsys):
        out = tmp_path / "r"
        assert main(["train", "--data", str(data), "--out", str(out), "--epochs", "1",
                     "--layers", "1"]) == 0
        text = capsys.readouterr().out
        assert "lr=0.01" in text and "batch_size=100" in text
        for name in ("checkpoint.json", "log.csv", "config.json", "run.json"):
            assert (out / name).exists()
        assert load_checkpoint(out / "checkpoint.json").spec.layers == 1

    def test_invalid_family(self, tmp_path, data):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", str(data), "--out", str(tmp_path / "r"),
                  "--family", "tower"])
        assert exc.value.code == 2

    def test_bad_inner_layers(self, tmp_path, data):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--data", str(data), "--out", str(tmp_path / "r"),
                  "--family", "millefeuille", "--inner-layers", "0"])
        assert exc.value.code == 2

    def test_warm_start(self, tmp_path, data, trained):
        out = tmp_path / "warm"
        assert main(["train", "--data", str(data), "--out", str(out), "--layers", "2",
                     "--epochs", "2", "--warm-start", str(trained / "checkpoint.json")]) == 0
        log = rows(out / "log.csv")
        assert len(log) > 0

    def test_corrupt_checkpoint(self, tmp_path, data, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = main(["train", "--data", str(data), "--out", str(tmp_path / "r"),
                     "--warm-start", str(bad)])
        assert code == 1
        assert "corrupt checkpoint" in capsys.readouterr().err

    def test_config_precedence(self, tmp_path, data, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"lr": 0.2, "batch_size": 7, "epochs": 1, "layers": 1}))
        assert main(["train", "--data", str(data), "--out", str(tmp_path / "r"),
                     "--config", str(cfg), "--lr", "0.05"]) == 0
        text = capsys.readouterr().out
        assert "lr=0.05" in text and "batch_size=7" in text
        rec = json.loads((tmp_path / "r" / "run.json").read_text())
        assert rec["config"]["lr"] == 0.05 and rec["config"]["batch_size"] == 7

    def test_unknown_config_key(self, tmp_path, data):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"learning_rate": 0.2}))
        with pytest.raises(SystemExit):
            main(["train", "--data", str(data), "--out", str(tmp_path / "r"),
                  "--config", str(cfg)])


class TestEval:
    def test_columns_and_baseline(self, tmp_path, data, trained):
        out = tmp_path / "m.csv"
        assert main(["eval", "--checkpoint", str(trained / "checkpoint.json"),
                     "--data", str(data), "--out", str(out)]) == 0
        table = rows(out)
        assert list(table[0]) == ["n", "p", "count", "loss", "argmax_acc", "dist_acc",
                                  "sureness", "approx_ratio", "random_baseline"]
        assert [int(r["count"]) for r in table] == [4, 11]
        for r in table:
            assert 0 < float(r["random_baseline"]) <= 1

    def test_missing_checkpoint(self, tmp_path, data):
        with pytest.raises(SystemExit) as exc:
            main(["eval", "--checkpoint", str(tmp_path / "nope.json"), "--data", str(data),
                  "--out", str(tmp_path / "m.csv")])
        assert exc.value.code == 2


class TestPine:
    def test_complete_graph(self, tmp_path):
        path = tmp_path / "k4.jsonl"
        save_manifest(DatasetManifest([DatasetEntry.label(Graph.complete(4))]), path)
        out = tmp_path / "p"
        assert main(["pine", "--heuristic", "uniform", "--data", str(path), "--runs", "20",
                     "--out", str(out)]) == 0
        runs = rows(out / "pine_runs.csv")
        assert all(r["clique_size"] == "4" and r["success"] == "1" for r in runs)
        summary = rows(out / "pine_summary.csv")
        assert float(summary[0]["exact_success"]) == 1.0

    def test_quantum_needs_checkpoint(self, tmp_path, data):
        with pytest.raises(SystemExit):
            main(["pine", "--heuristic", "quantum", "--data", str(data),
                  "--out", str(tmp_path / "p")])

    def test_quantum_runs(self, tmp_path, data, trained):
        out = tmp_path / "q"
        assert main(["pine", "--heuristic", "quantum", "--checkpoint",
                     str(trained / "checkpoint.json"), "--data", str(data), "--runs", "5",
                     "--out", str(out)]) == 0
        assert all(r["valid"] == "1" for r in rows(out / "pine_runs.csv"))


def test_audit(tmp_path, data, trained):
    out = tmp_path / "a"
    assert main(["audit", "--checkpoint", str(trained / "checkpoint.json"),
                 "--data", str(data), "--out", str(out)]) == 0
    rep = json.loads((out / "audit.json").read_text())
    assert rep["max_swap_asymmetry"] < 1e-12
    assert rep["max_equivariance_gap"] < 1e-10
    assert rep["max_abs_accuracy_drop"] < 1e-9


def test_calibrate_needs_clique_number(tmp_path, data, trained):
    with pytest.raises(SystemExit):
        main(["calibrate", "--checkpoint", str(trained / "checkpoint.json"),
              "--data", str(data), "--out", str(tmp_path / "c.json")])


def test_calibrate(tmp_path, data):
    run = tmp_path / "cn"
    assert main(["train", "--data", str(data), "--out", str(run), "--layers", "1",
                 "--epochs", "2", "--task", "clique_number"]) == 0
    out = tmp_path / "c.json"
    assert main(["calibrate", "--checkpoint", str(run / "checkpoint.json"),
                 "--data", str(data), "--out", str(out)]) == 0
    assert json.loads(out.read_text())["mode"] == "linear_in_n"


class TestPlot:
    def test_empty_csv(self, tmp_path):
        empty = tmp_path / "e.csv"
        empty.write_text("n,argmax_acc\n")
        assert main(["plot", "--inputs", str(empty), "--out", str(tmp_path / "g.svg")]) == 1

    def test_identical_svg(self, tmp_path, trained):
        a, b = tmp_path / "a.svg", tmp_path / "b.svg"
        for out in (a, b):
            assert main(["plot", "--kind", "training", "--inputs", str(trained / "log.csv"),
                         "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()


def test_replay_is_bitwise_identical(tmp_path, data):
    outs = [tmp_path / "x", tmp_path / "y"]
    for out in outs:
        assert main(["train", "--data", str(data), "--out", str(out), "--layers", "2",
                     "--epochs", "3", "--batch-size", "5", "--seed", "11"]) == 0
        assert main(["eval", "--checkpoint", str(out / "checkpoint.json"), "--data", str(data),
                     "--out", str(out / "m.csv")]) == 0
    for name in ("checkpoint.json", "log.csv", "config.json", "m.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
