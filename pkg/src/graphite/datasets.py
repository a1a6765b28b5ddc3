"""TSV datasets (edges, features, labels) and embedding export."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .graph import Graph

logger = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent input files; messages carry file and line."""


@dataclass
class DatasetBundle:
    graph: Graph
    node_ids: list
    class_names: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def feature_dim(self) -> int:
        return 0 if self.graph.features is None else self.graph.features.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def index(self) -> dict:
        return {nid: i for i, nid in enumerate(self.node_ids)}


def _rows(path: Path):
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if line.strip() and not line.startswith("#"):
                yield lineno, line.split("\t")


def _read_features(path: Path):
    ids, rows, width = [], [], None
    for lineno, parts in _rows(path):
        if width is None:
            width = len(parts) - 1
        if len(parts) - 1 != width or width < 1:
            raise DataError(f"{path}:{lineno}: expected {width} feature values, got {len(parts) - 1}")
        try:
            rows.append([float(v) for v in parts[1:]])
        except ValueError as e:
            raise DataError(f"{path}:{lineno}: {e}") from None
        ids.append(parts[0])
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate node ids")
    return ids, np.asarray(rows, dtype=np.float64).reshape(len(ids), width or 0)


def _read_pairs(path: Path, what: str):
    out = []
    for lineno, parts in _rows(path):
        if len(parts) != 2:
            raise DataError(f"{path}:{lineno}: expected 2 tab-separated fields for {what}, got {len(parts)}")
        out.append((lineno, parts[0].strip(), parts[1].strip()))
    return out


def ingest_citation_dataset(dir_path) -> DatasetBundle:
    """Read ``edges.tsv`` plus optional ``features.tsv`` and ``labels.tsv``.

    Node order follows ``features.tsv`` when present; otherwise order of first
    appearance in labels then edges. With features, every id elsewhere must
    appear there.
    """
    d = Path(dir_path)
    epath = d / "edges.tsv"
    if not epath.is_file():
        raise DataError(f"{epath}: missing")
    fpath, lpath = d / "features.tsv", d / "labels.tsv"
    features = None
    if fpath.is_file():
        ids, features = _read_features(fpath)
    else:
        ids = []
    index = {nid: i for i, nid in enumerate(ids)}
    closed = features is not None

    def lookup(nid, path, lineno):
        if nid not in index:
            if closed:
                raise DataError(f"{path}:{lineno}: node id {nid!r} not in {fpath.name}")
            index[nid] = len(ids)
            ids.append(nid)
        return index[nid]

    label_rows = _read_pairs(lpath, "labels") if lpath.is_file() else []
    label_of = {}
    for lineno, nid, cls in label_rows:
        i = lookup(nid, lpath, lineno)
        if i in label_of and label_of[i] != cls:
            raise DataError(f"{lpath}:{lineno}: conflicting label for node {nid!r}")
        label_of[i] = cls
    edges, loops = set(), 0
    for lineno, u, v in _read_pairs(epath, "edges"):
        a, b = lookup(u, epath, lineno), lookup(v, epath, lineno)
        if a == b:
            loops += 1
            continue
        edges.add((min(a, b), max(a, b)))
    if loops:
        logger.warning("%s: dropped %d self-loops", epath, loops)
    n = len(ids)
    labels, classes = None, []
    if label_rows:
        classes = sorted(set(label_of.values()))
        if all(c.lstrip("-").isdigit() for c in classes):
            classes.sort(key=int)
        cidx = {c: k for k, c in enumerate(classes)}
        labels = np.full(n, -1, dtype=np.int64)
        for i, c in label_of.items():
            labels[i] = cidx[c]
    graph = Graph.from_edges(n, sorted(edges), features=features, labels=labels)
    logger.info("%s: %d nodes, %d edges, %d features, %d classes", d, n, graph.num_edges,
                0 if features is None else features.shape[1], len(classes))
    return DatasetBundle(graph, ids, classes)


def write_dataset(bundle: DatasetBundle, dir_path) -> None:
    d = Path(dir_path)
    d.mkdir(parents=True, exist_ok=True)
    ids = bundle.node_ids
    with open(d / "edges.tsv", "w") as fh:
        for u, v in bundle.graph.edges():
            fh.write(f"{ids[u]}\t{ids[v]}\n")
    if bundle.graph.features is not None:
        with open(d / "features.tsv", "w") as fh:
            for nid, row in zip(ids, bundle.graph.features):
                fh.write(nid + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")
    if bundle.graph.labels is not None:
        with open(d / "labels.tsv", "w") as fh:
            for nid, lab in zip(ids, bundle.graph.labels):
                if lab >= 0:
                    fh.write(f"{nid}\t{bundle.class_names[lab]}\n")


def write_embeddings(ids, matrix: np.ndarray, out_path) -> None:
    with open(out_path, "w") as fh:
        for nid, row in zip(ids, np.asarray(matrix)):
            fh.write(str(nid) + "\t" + "\t".join(repr(float(v)) for v in row) + "\n")


def read_embeddings(path) -> tuple[list, np.ndarray]:
    ids, mat = _read_features(Path(path))
    return ids, mat


def export_embeddings(checkpoint, dataset, out_path) -> np.ndarray:
    """Write the final combined embedding (posterior means through the decoder) per node."""
    from .checkpoint import load_checkpoint
    from .tasks.common import feature_operand, sparse_normalized
    from .tasks.link_prediction import embed

    model, _ = load_checkpoint(checkpoint) if not hasattr(checkpoint, "config") else (checkpoint, None)
    bundle = dataset if isinstance(dataset, DatasetBundle) else ingest_citation_dataset(dataset)
    g = bundle.graph
    c = model.config
    if c.input_dim == bundle.feature_dim and c.input_dim != 0:
        x = feature_operand(g.features)
    elif c.input_dim == g.n:
        x = None
    else:
        raise DataError(f"checkpoint expects input dim {c.input_dim}; dataset has {g.n} nodes "
                        f"and {bundle.feature_dim} features")
    a_norm = sparse_normalized(g.n, g.edges(), self_loops=c.self_loops)
    z = embed(model, a_norm, x)
    write_embeddings(bundle.node_ids, z, out_path)
    return z
