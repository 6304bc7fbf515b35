import json
import subprocess
import sys

import pytest

from kgextrap import cli
from kgextrap.config import KEYS, read_config_file, resolve
from kgextrap.errors import ConfigError
from kgextrap.kg import save_graph
from kgextrap.sampler import DatasetSampleParams, sample_dataset
from kgextrap.synthetic import schema_kg

FAST = ["--n_tasks", "32", "--batch_size", "8", "--max_steps", "6", "--validation_every", "3", "--dim", "8", "--hidden_dim", "8", "--n_repeats", "2"]


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    split = sample_dataset(schema_kg(n_types=4, per_type=30, n_base=8, n_composed=4), DatasetSampleParams(10, 60, 4, 4, 0.1, 0))
    p = cli.data_paths(d)
    for part in ("valid", "test"):
        (d / part).mkdir()
    save_graph(split.train, p["train"])
    save_graph(split.valid, p["valid_support"], p["valid_query"])
    save_graph(split.test, p["test_support"], p["test_query"])
    return d


def run(*args):
    return cli.main([str(a) for a in args])


def test_help_lists_every_key():
    out = subprocess.run([sys.executable, "-m", "kgextrap.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for k in KEYS:
        assert f"--{k.name} (default:" in out.stdout


def test_unknown_key(capsys, tmp_path):
    assert run("train", "--learnig_rate", "0.1") == 2
    err = capsys.readouterr().err
    assert "--learnig_rate" in err and "learning_rate" in err
    cfg = tmp_path / "c.cfg"
    cfg.write_text("sed = 3\n")
    with pytest.raises(ConfigError, match="valid keys"):
        read_config_file(cfg)


def test_missing_input_names_path(capsys, tmp_path):
    assert run("train", "--data_dir", tmp_path / "nowhere", "--out_dir", tmp_path / "out") == 1
    err = capsys.readouterr().err
    assert "missing training triples" in err and str(tmp_path / "nowhere" / "train.txt") in err
    # the manifest is written before the inputs are read
    assert (tmp_path / "out" / "manifest-train.json").exists()


def test_config_precedence(tmp_path, monkeypatch):
    cfg_file = tmp_path / "run.cfg"
    cfg_file.write_text("seed = 3  # file value\nmargin = 4.5\n")
    cfg = resolve(read_config_file(cfg_file), {"seed": "7"})
    assert cfg["seed"] == 7 and cfg["margin"] == 4.5 and cfg["dim"] == 32
    monkeypatch.setenv("KGEXTRAP_DATA", str(tmp_path / "env"))
    assert resolve().data_dir == tmp_path / "env"
    assert resolve(overrides={"data_dir": "x"}).data_dir.name == "x"
    with pytest.raises(ConfigError):
        resolve(overrides={"ablations": "GNN,Magic"})


def test_train_evaluate_report(data_dir, tmp_path, capsys):
    out = tmp_path / "run"
    assert run("train", "--data_dir", data_dir, "--out_dir", out, *FAST) == 0
    manifest = json.loads((out / "manifest-train.json").read_text())
    assert manifest["config"]["n_tasks"] == 32 and str(data_dir / "train.txt") in manifest["inputs"]
    lines = (out / "train_log.jsonl").read_text().splitlines()
    assert json.loads(lines[0])["step"] == 1
    assert run("evaluate", "--data_dir", data_dir, "--out_dir", out, *FAST) == 0
    assert (out / "report-model.tsv").exists()
    assert run("baseline", "--data_dir", data_dir, "--out_dir", out, "--kge_max_epochs", "3", *FAST) == 0
    assert run("evaluate", "--data_dir", data_dir, "--out_dir", out, "--checkpoint", out / "kge.ckpt", *FAST) == 0
    reports = f"{out / 'report-model.tsv'},{out / 'asmp_report.tsv'}"
    assert run("report", "--out_dir", out, "--reports", reports) == 0
    table = (out / "comparison.tsv").read_text().splitlines()
    assert table[0] == "category\tmetric\tmodel\tAsmp-transe"
    assert any(line.startswith("all\tmrr\t") for line in table)


def test_ablate_columns(data_dir, tmp_path):
    out = tmp_path / "abl"
    assert run("ablate", "--data_dir", data_dir, "--out_dir", out, *FAST) == 0
    rows = [line.split("\t") for line in (out / "ablation.tsv").read_text().splitlines()]
    assert rows[0] == ["metric", "MaKEr", "-Meta", "-RelFeat", "-EntFeat", "-GNN"]
    assert [r[0] for r in rows[1:]] == ["MRR", "Hits@1"] and all(len(r) == 6 for r in rows)


def test_synthetic_and_sampling_commands(tmp_path):
    src = tmp_path / "kg.txt"
    assert run("make-synthetic", "--source", src, "--out_dir", tmp_path / "o") == 0
    data = tmp_path / "d"
    args = ["--source", src, "--data_dir", data, "--out_dir", tmp_path / "o", "--n_seed_entities_test", "25", "--n_seed_entities_train", "200", "--walk_len_test", "6", "--walk_len_train", "6"]
    assert run("sample-dataset", *args) == 0
    for p in cli.data_paths(data).values():
        assert p.exists()
    assert run("sample-tasks", "--data_dir", data, "--out_dir", tmp_path / "o", "--n_tasks", "20") == 0
    assert (tmp_path / "o" / "tasks.tsv").exists()
    assert run("sample-dataset", "--out_dir", tmp_path / "o") == 1
