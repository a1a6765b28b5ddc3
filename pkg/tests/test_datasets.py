import logging

import numpy as np
import pytest

from graphite.datasets import (DataError, DatasetBundle, export_embeddings, ingest_citation_dataset, read_embeddings,
                               write_dataset)
from graphite import model as M

from helpers import connected_er


def _write(d, **files):
    d.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (d / f"{name}.tsv").write_text(text)
    return d


def test_duplicate_and_reversed_edges_collapse(tmp_path):
    b = ingest_citation_dataset(_write(tmp_path / "d", edges="0\t1\n1\t0\n0\t1\n1\t2\n"))
    assert b.graph.num_edges == 2
    assert b.node_ids == ["0", "1", "2"]


def test_self_loops_dropped_with_warning(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        b = ingest_citation_dataset(_write(tmp_path / "d", edges="a\ta\na\tb\n"))
    assert b.graph.num_edges == 1 and np.trace(b.graph.adjacency) == 0
    assert "self-loop" in caplog.text


def test_features_define_order_and_labels(tmp_path):
    d = _write(tmp_path / "d", edges="p2\tp1\n", features="p1\t1\t0\np2\t0\t1\np3\t1\t1\n",
               labels="p1\tTheory\np2\tAI\n")
    b = ingest_citation_dataset(d)
    assert b.node_ids == ["p1", "p2", "p3"] and b.feature_dim == 2
    assert b.class_names == ["AI", "Theory"]
    assert b.graph.labels.tolist() == [1, 0, -1]


@pytest.mark.parametrize("files,fragment", [
    ({"edges": "0\t1\n0 1\n"}, "edges.tsv:2"),
    ({"edges": "0\t1\n", "features": "0\t1\t2\n1\t3\n"}, "features.tsv:2"),
    ({"edges": "0\t1\n0\t9\n", "features": "0\t1\n1\t1\n"}, "edges.tsv:2"),
    ({"edges": "0\t1\n", "labels": "0\tA\n0\tB\n"}, "labels.tsv:2"),
    ({"edges": "0\t1\n", "features": "0\tx\n1\t2\n"}, "features.tsv:1"),
])
def test_malformed_inputs_name_file_and_line(tmp_path, files, fragment):
    with pytest.raises(DataError, match=fragment):
        ingest_citation_dataset(_write(tmp_path / "d", **files))


def test_missing_edges_file(tmp_path):
    with pytest.raises(DataError):
        ingest_citation_dataset(tmp_path)


def test_ingest_is_idempotent(tmp_path):
    d = _write(tmp_path / "d", edges="3\t1\n1\t2\n2\t3\n", features="1\t0.5\n2\t0.25\n3\t1e-3\n",
               labels="1\t0\n2\t1\n3\t0\n")
    first = ingest_citation_dataset(d)
    write_dataset(first, tmp_path / "again")
    second = ingest_citation_dataset(tmp_path / "again")
    assert second.node_ids == first.node_ids and second.class_names == first.class_names
    np.testing.assert_array_equal(second.graph.adjacency, first.graph.adjacency)
    assert second.graph.features.tobytes() == first.graph.features.tobytes()
    np.testing.assert_array_equal(second.graph.labels, first.graph.labels)


def test_export_roundtrip(tmp_path):
    g = connected_er(12, seed=2, p=0.4)
    bundle = DatasetBundle(g, [f"n{i}" for i in range(12)])
    cfg = M.ModelConfig(kind="graphite_vae", input_dim=12, encoder_hidden=(6,), latent_dim=3, decoder_hidden=(6,),
                        out_dim=3)
    model = M.GraphiteModel.create(cfg, seed=0)
    z = export_embeddings(model, bundle, tmp_path / "emb.tsv")
    ids, mat = read_embeddings(tmp_path / "emb.tsv")
    assert ids == bundle.node_ids and mat.shape == (12, 3)
    assert mat.tobytes() == z.tobytes()


def test_export_dimension_mismatch(tmp_path):
    g = connected_er(5, seed=0)
    model = M.GraphiteModel.create(M.ModelConfig(kind="gae", input_dim=7, latent_dim=2), seed=0)
    with pytest.raises(DataError):
        export_embeddings(model, DatasetBundle(g, list("abcde")), tmp_path / "e.tsv")
