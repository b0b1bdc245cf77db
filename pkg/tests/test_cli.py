import json

import pytest

from tart import cli
from tart import graphs as gc
from tart import tokens as tk


def run(capsys, *argv):
    code = cli.main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


TINY_CONFIG = """\
# tiny settings for fast tests
model.n_layer = 1
model.d_model = 8
model.n_heads = 2
model.d_ff = 16
model.dropout = 0.0
train.epochs = 1
train.batch_size = 8
train.lr = 0.001
"""


@pytest.fixture()
def dataset(tmp_path):
    path = tmp_path / "data.jsonl"
    records = gc.generate_synthetic(24, 8, 0.4, 0.05, seed=3)
    gc.write_dataset(records, path)
    return path


@pytest.fixture()
def config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


class TestGen:
    def test_writes_jsonl(self, tmp_path, capsys):
        out = tmp_path / "d.jsonl"
        code, stdout, _ = run(capsys, "gen", "--count", "40", "--max-nodes", "16",
                              "--seed", "7", "--out", str(out))
        assert code == 0
        assert "wrote 40 graphs" in stdout
        assert len(out.read_text().splitlines()) == 40

    def test_rerun_byte_identical(self, tmp_path, capsys):
        a = tmp_path / "a.jsonl"
        b = tmp_path / "b.jsonl"
        for out in (a, b):
            code, _, _ = run(capsys, "gen", "--count", "15", "--seed", "9",
                             "--out", str(out))
            assert code == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_density_exit_2(self, tmp_path, capsys):
        code, _, err = run(capsys, "gen", "--density", "0", "--out",
                           str(tmp_path / "x.jsonl"))
        assert code == 2
        assert "edge_density" in err


class TestTokenize:
    def test_lap_shape_report(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        g = {"id": "g0", "num_nodes": 5, "node_ops": [1, 4, 4, 7, 15],
             "edges": [[0, 1], [1, 2], [1, 3], [2, 4]]}
        data.write_text(json.dumps(g) + "\n")
        out = tmp_path / "t.bin"
        code, stdout, _ = run(capsys, "tokenize", "--in", str(data), "--out", str(out),
                              "--mode", "lap")
        assert code == 0
        assert "g0: 9 x 11" in stdout
        assert len(tk.read_token_file(out)) == 1

    def test_node_only_shape(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        g = {"id": "g0", "num_nodes": 5, "node_ops": [1, 4, 4, 7, 15],
             "edges": [[0, 1], [1, 2], [1, 3], [2, 4]]}
        data.write_text(json.dumps(g) + "\n")
        code, stdout, _ = run(capsys, "tokenize", "--in", str(data),
                              "--out", str(tmp_path / "t.bin"), "--mode", "node-only")
        assert code == 0
        assert "g0: 5 x 11" in stdout

    def test_cyclic_graph_exit_2_names_id(self, tmp_path, capsys):
        data = tmp_path / "d.jsonl"
        g = {"id": "bad1", "num_nodes": 2, "node_ops": [1, 1],
             "edges": [[0, 1], [1, 0]]}
        data.write_text(json.dumps(g) + "\n")
        code, _, err = run(capsys, "tokenize", "--in", str(data),
                           "--out", str(tmp_path / "t.bin"))
        assert code == 2
        assert "bad1" in err

    def test_reduction_ratio_printed(self, dataset, tmp_path, capsys):
        code, stdout, _ = run(capsys, "tokenize", "--in", str(dataset),
                              "--out", str(tmp_path / "t.bin"))
        assert code == 0
        assert "reduction ratio" in stdout


class TestTrain:
    def test_history_csv_one_epoch(self, dataset, config_file, tmp_path, capsys):
        hist = tmp_path / "h.csv"
        code, _, _ = run(capsys, "train", "--config", str(config_file),
                         "--data", str(dataset), "--seed", "1",
                         "--out-model", str(tmp_path / "m.ckpt"), "--history", str(hist))
        assert code == 0
        lines = hist.read_text().splitlines()
        assert lines[0] == "epoch,loss,tau_clean,tau_noisy,tau_inf,tau_conv"
        assert len(lines) == 2

    def test_same_seed_identical_checkpoint(self, dataset, config_file, tmp_path, capsys):
        paths = []
        for tag in ("a", "b"):
            ckpt = tmp_path / f"{tag}.ckpt"
            code, _, _ = run(capsys, "train", "--config", str(config_file),
                             "--data", str(dataset), "--seed", "4",
                             "--out-model", str(ckpt),
                             "--history", str(tmp_path / f"{tag}.csv"))
            assert code == 0
            paths.append(ckpt)
        assert paths[0].read_bytes() == paths[1].read_bytes()

    def test_missing_data_exit_1(self, config_file, tmp_path, capsys):
        code, _, err = run(capsys, "train", "--config", str(config_file),
                           "--data", str(tmp_path / "nope.jsonl"),
                           "--out-model", str(tmp_path / "m.ckpt"),
                           "--history", str(tmp_path / "h.csv"))
        assert code == 1
        assert "nope.jsonl" in err

    def test_unknown_config_key_exit_2(self, dataset, tmp_path, capsys):
        bad = tmp_path / "bad.cfg"
        bad.write_text("model.n_layers = 3\n")
        code, _, err = run(capsys, "train", "--config", str(bad),
                           "--data", str(dataset),
                           "--out-model", str(tmp_path / "m.ckpt"),
                           "--history", str(tmp_path / "h.csv"))
        assert code == 2
        assert "n_layers" in err


class TestEvalAndCompare:
    def test_eval_prints_tau_json(self, dataset, config_file, tmp_path, capsys):
        ckpt = tmp_path / "m.ckpt"
        code, _, _ = run(capsys, "train", "--config", str(config_file),
                         "--data", str(dataset), "--seed", "0",
                         "--out-model", str(ckpt), "--history", str(tmp_path / "h.csv"))
        assert code == 0
        code, stdout, _ = run(capsys, "eval", "--model", str(ckpt),
                              "--data", str(dataset))
        assert code == 0
        table = json.loads(stdout)
        assert set(table) == set(gc.TARGET_NAMES)

    def test_compare_csv_row_count(self, dataset, config_file, tmp_path, capsys):
        csv_path = tmp_path / "c.csv"
        code, stdout, _ = run(capsys, "compare", "--config", str(config_file),
                              "--data", str(dataset), "--trials", "2",
                              "--seed", "0", "--out-csv", str(csv_path))
        assert code == 0
        lines = csv_path.read_text().strip().splitlines()
        assert len(lines) == 1 + 2 * 2 * 4  # header + modes x seeds x targets
        assert "not reproduced" in stdout

    def test_compare_deterministic_csv(self, dataset, config_file, tmp_path, capsys):
        outs = []
        for tag in ("a", "b"):
            csv_path = tmp_path / f"{tag}.csv"
            code, _, _ = run(capsys, "compare", "--config", str(config_file),
                             "--data", str(dataset), "--trials", "1",
                             "--seed", "3", "--out-csv", str(csv_path))
            assert code == 0
            outs.append(csv_path.read_bytes())
        assert outs[0] == outs[1]

    def test_env_seed_used_as_default(self, dataset, config_file, tmp_path,
                                      capsys, monkeypatch):
        monkeypatch.setenv("TART_SEED", "11")
        csv_env = tmp_path / "env.csv"
        code, _, _ = run(capsys, "compare", "--config", str(config_file),
                         "--data", str(dataset), "--trials", "1",
                         "--out-csv", str(csv_env))
        assert code == 0
        csv_flag = tmp_path / "flag.csv"
        code, _, _ = run(capsys, "compare", "--config", str(config_file),
                         "--data", str(dataset), "--trials", "1", "--seed", "11",
                         "--out-csv", str(csv_flag))
        assert code == 0
        assert csv_env.read_bytes() == csv_flag.read_bytes()


class TestHelp:
    @pytest.mark.parametrize("command", ["gen", "tokenize", "train", "eval", "compare"])
    def test_help_exits_zero(self, command, capsys):
        with pytest.raises(SystemExit) as exc:
            cli.main([command, "--help"])
        assert exc.value.code == 0
        stdout = capsys.readouterr().out
        assert "--" in stdout
