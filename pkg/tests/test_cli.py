import json
import subprocess
import sys

import pytest

from graphite.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main
from graphite.datasets import read_embeddings
from graphite.graph import read_edgelist

LINK_CONFIG = """\
task = link
model = graphite_vae
family = erdos_renyi
n_nodes = 30
runs = 2
iters = 20
lambda_grid = 0.5
dropout_grid = 0.0
encoder_hidden = 8
latent_dim = 4
decoder_hidden = 8
out_dim = 4
"""


@pytest.fixture
def out_root(tmp_path, monkeypatch):
    monkeypatch.setenv("GRAPHITE_OUTPUT_ROOT", str(tmp_path / "runs"))
    return tmp_path / "runs"


def test_generate_file(tmp_path, capsys):
    path = tmp_path / "g.tsv"
    assert main(["generate", "--family", "barabasi_albert", "--n", "25", "--seed", "1", "--out", str(path)]) == 0
    assert read_edgelist(path, 25).num_edges == 21 * 4


def test_run_link_config_is_reproducible(tmp_path, out_root, capsys):
    cfg = tmp_path / "link.cfg"
    cfg.write_text(LINK_CONFIG)
    assert main(["run", str(cfg)]) == EXIT_OK
    out = json.loads(capsys.readouterr().out.strip().splitlines()[-1])["out"]
    run_dir = out_root / out.split("/")[-1]
    assert {"metrics.json", "metrics.csv", "config.resolved", "checkpoint.bin"} <= {p.name for p in run_dir.iterdir()}
    first = (run_dir / "metrics.csv").read_bytes()
    summary = json.loads((run_dir / "metrics.json").read_text())["results"][0]["summary"]
    assert summary["auc"]["n"] == 2
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (run_dir / "metrics.csv").read_bytes() == first


def test_run_check_theorem(tmp_path, out_root, capsys):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("task = check-theorem\nseed = 3\n")
    assert main(["run", str(cfg), "--trials", "5"]) == EXIT_OK
    report = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert report["trials"] == 5 and report["max_abs_diff"] <= 1e-12


def test_check_theorem_command(capsys):
    assert main(["check-theorem", "--trials", "3", "--dim", "2"]) == EXIT_OK


@pytest.mark.parametrize("model", ["graphite_vae", "vgae"])
def test_grad_check_command(model, capsys):
    assert main(["grad-check", "--model", model, "--n", "5"]) == EXIT_OK
    assert json.loads(capsys.readouterr().out)["max_rel_error"] <= 1e-4


def test_train_then_export(tmp_path, out_root, capsys):
    data = tmp_path / "data"
    data.mkdir()
    # a 14-cycle with chords, plus an isolated pair that the LCC drops
    edges = [(i, (i + 1) % 14) for i in range(14)] + [(i, (i + 5) % 14) for i in range(0, 14, 2)] + [(20, 21)]
    (data / "edges.tsv").write_text("".join(f"v{u}\tv{v}\n" for u, v in edges))
    assert main(["train", "--dataset", str(data), "--iters", "10", "--set", "encoder_hidden=4",
                 "--set", "latent_dim=2", "--set", "decoder_hidden=4", "--set", "out_dim=2"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)["out"]
    ckpt = out_root / out.split("/")[-1] / "checkpoint.bin"
    emb = tmp_path / "emb.tsv"
    assert main(["export-embeddings", "--checkpoint", str(ckpt), "--dataset", str(data), "--out", str(emb)]) == EXIT_OK
    ids, mat = read_embeddings(emb)
    assert len(ids) == 14 and mat.shape == (14, 2) and "v20" not in ids


def test_exit_codes(tmp_path, out_root, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("no_such_key = 1\n")
    assert main(["run", str(bad)]) == EXIT_CONFIG
    assert main(["eval-link", "--set", "lr=-1"]) == EXIT_CONFIG
    assert main(["eval-link", "--dataset", str(tmp_path / "missing")]) == EXIT_DATA
    junk = tmp_path / "junk.bin"
    junk.write_bytes(b"nope")
    assert main(["export-embeddings", "--checkpoint", str(junk), "--dataset", str(tmp_path), "--out", "x"]) == EXIT_DATA


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "graphite", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "export-embeddings" in res.stdout
