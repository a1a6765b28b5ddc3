"""Undirected graphs: normalization, WL test, generators, components, splits."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

logger = logging.getLogger(__name__)

FAMILIES = ("erdos_renyi", "ego", "regular", "geometric", "powerlaw_tree", "barabasi_albert")

# Generator defaults used for density estimation.
DEFAULT_FAMILY_PARAMS = {
    "erdos_renyi": {"p": 0.5},
    "ego": {"p": 0.5},
    "regular": {"d": 4},
    "geometric": {"radius": 0.5},
    "powerlaw_tree": {"gamma": 3.0},
    "barabasi_albert": {"m": 4},
}


class GeneratorError(RuntimeError):
    pass


class SplitError(RuntimeError):
    pass


@dataclass
class Graph:
    adjacency: np.ndarray
    features: np.ndarray | None = None
    labels: np.ndarray | None = None
    attrs: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.adjacency, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got {a.shape}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if (a < 0).any():
            raise ValueError("adjacency entries must be non-negative")
        np.fill_diagonal(a, 0.0)
        self.adjacency = a
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=np.float64)
            if self.features.shape[0] != self.n:
                raise ValueError("feature rows must match node count")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if self.labels.shape != (self.n,):
                raise ValueError("labels must have one entry per node")

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(np.triu(self.adjacency)))

    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def edges(self) -> np.ndarray:
        """Undirected edges as an (E, 2) array with u < v, lexicographic."""
        u, v = np.nonzero(np.triu(self.adjacency))
        return np.stack([u, v], axis=1).astype(np.int64)

    @classmethod
    def from_edges(cls, n: int, edges, **kw) -> "Graph":
        a = np.zeros((n, n))
        e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if e.size:
            a[e[:, 0], e[:, 1]] = 1.0
            a[e[:, 1], e[:, 0]] = 1.0
        return cls(a, **kw)

    def permuted(self, perm) -> "Graph":
        """Graph with node ``perm[i]`` of self becoming node ``i``."""
        perm = np.asarray(perm)
        return Graph(
            self.adjacency[np.ix_(perm, perm)],
            None if self.features is None else self.features[perm],
            None if self.labels is None else self.labels[perm],
        )


def normalize_sym(graph: Graph | np.ndarray, self_loops: bool = False, sparse: bool = False):
    """D^{-1/2} A D^{-1/2}; zero-degree nodes get all-zero rows and columns.

    ``self_loops=True`` normalizes A + I instead (GCN renormalization).
    """
    a = graph.adjacency if isinstance(graph, Graph) else np.asarray(graph, dtype=np.float64)
    if self_loops:
        a = a + np.eye(a.shape[0])
    deg = a.sum(axis=1)
    with np.errstate(divide="ignore"):
        s = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    if sparse:
        return sp.csr_matrix(a).multiply(s[:, None]).multiply(s[None, :]).tocsr()
    return a * s[:, None] * s[None, :]


# ------------------------------------------------------------------ WL


@dataclass
class WlResult:
    verdict: str  # "isomorphic-candidate" | "not-isomorphic"
    iterations: int
    history: list  # per iteration: (labels_g1, labels_g2)

    @property
    def isomorphic(self) -> bool:
        return self.verdict == "isomorphic-candidate"


def _neighbors(a: np.ndarray) -> list[np.ndarray]:
    return [np.flatnonzero(row) for row in a]


def wl_test(g1: Graph, g2: Graph, max_iters: int | None = None) -> WlResult:
    """1-dim Weisfeiler-Lehman color refinement run jointly on two graphs.

    Labels start as degrees; each round a node's new label is the canonical
    id of (own label, sorted neighbor labels), with ids shared across both
    graphs so label multisets are directly comparable.
    """
    if g1.n == 0 or g2.n == 0:
        raise ValueError("wl_test needs non-empty graphs")
    h1 = g1.degrees().astype(np.int64)
    h2 = g2.degrees().astype(np.int64)
    history = [(h1.copy(), h2.copy())]
    if g1.n != g2.n or Counter(h1.tolist()) != Counter(h2.tolist()):
        return WlResult("not-isomorphic", 0, history)
    nb1, nb2 = _neighbors(g1.adjacency), _neighbors(g2.adjacency)
    max_iters = g1.n if max_iters is None else max_iters
    n_classes = len(set(h1.tolist()) | set(h2.tolist()))
    it = 0
    for it in range(1, max_iters + 1):
        table: dict = {}
        sig1 = [(int(h1[i]), tuple(sorted(h1[nb1[i]].tolist()))) for i in range(g1.n)]
        sig2 = [(int(h2[i]), tuple(sorted(h2[nb2[i]].tolist()))) for i in range(g2.n)]
        for s in sorted(set(sig1) | set(sig2)):
            table[s] = len(table)
        h1 = np.array([table[s] for s in sig1], dtype=np.int64)
        h2 = np.array([table[s] for s in sig2], dtype=np.int64)
        history.append((h1.copy(), h2.copy()))
        if Counter(h1.tolist()) != Counter(h2.tolist()):
            return WlResult("not-isomorphic", it, history)
        if len(table) == n_classes:
            break
        n_classes = len(table)
    return WlResult("isomorphic-candidate", it, history)


# ----------------------------------------------------------- generators


def generate(family: str, n: int, seed=None, **params) -> Graph:
    """Sample one graph from a named random family."""
    if family not in FAMILIES:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    rng = np.random.default_rng(seed)
    kw = dict(DEFAULT_FAMILY_PARAMS[family])
    kw.update(params)
    return _GENERATORS[family](n, rng, **kw)


def _erdos_renyi(n, rng, p=0.5):
    upper = np.triu(rng.random((n, n)) < p, k=1)
    return Graph((upper | upper.T).astype(np.float64))


def _ego(n, rng, p=0.5):
    g = _erdos_renyi(n, rng, p)
    a = g.adjacency
    center = int(rng.integers(n))
    a[center, :] = 1.0
    a[:, center] = 1.0
    return Graph(a, attrs={"center": center})


def _regular(n, rng, d=4, max_tries=1000):
    if (n * d) % 2 or d >= n:
        raise GeneratorError(f"no simple {d}-regular graph on {n} nodes")
    stubs = np.repeat(np.arange(n), d)
    for _ in range(max_tries):
        rng.shuffle(stubs)
        u, v = stubs[0::2], stubs[1::2]
        if (u == v).any():
            continue
        lo, hi = np.minimum(u, v), np.maximum(u, v)
        if len(set(zip(lo.tolist(), hi.tolist()))) != len(lo):
            continue
        return Graph.from_edges(n, np.stack([lo, hi], axis=1))
    raise GeneratorError(f"regular: no simple pairing after {max_tries} tries")


def _geometric(n, rng, radius=0.5):
    pts = rng.random((n, 2))
    dist = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(-1))
    a = (dist < radius).astype(np.float64)
    np.fill_diagonal(a, 0.0)
    return Graph(a, attrs={"points": pts})


def _powerlaw_degrees(size, rng, gamma, dmax):
    d = np.arange(1, dmax + 1)
    p = d ** (-gamma)
    return rng.choice(d, size=size, p=p / p.sum())


def _powerlaw_tree(n, rng, gamma=3.0, max_tries=None):
    if n < 2:
        raise GeneratorError("powerlaw_tree needs n >= 2")
    max_tries = 1000 * n if max_tries is None else max_tries
    seq = _powerlaw_degrees(n, rng, gamma, n - 1)
    target = 2 * (n - 1)
    for _ in range(max_tries):
        if seq.sum() == target:
            break
        seq[rng.integers(n)] = _powerlaw_degrees(1, rng, gamma, n - 1)[0]
    else:
        raise GeneratorError(f"powerlaw_tree: degree repair failed after {max_tries} swaps")
    # Pruefer decoding: node i appears deg(i) - 1 times in the code.
    code = np.repeat(np.arange(n), seq - 1)
    rng.shuffle(code)
    deg = seq.astype(np.int64).copy()
    edges = []
    for x in code:
        leaf = int(np.flatnonzero(deg == 1)[0])
        edges.append((leaf, int(x)))
        deg[leaf] -= 1
        deg[x] -= 1
    u, v = np.flatnonzero(deg == 1)
    edges.append((int(u), int(v)))
    return Graph.from_edges(n, edges)


def _barabasi_albert(n, rng, m=4):
    if not 1 <= m < n:
        raise GeneratorError(f"barabasi_albert needs 1 <= m < n, got m={m}, n={n}")
    edges = []
    targets = list(range(m))
    repeated: list[int] = []
    for v in range(m, n):
        edges.extend((t, v) for t in targets)
        repeated.extend(targets)
        repeated.extend([v] * m)
        chosen: set[int] = set()
        while len(chosen) < m:
            chosen.add(repeated[int(rng.integers(len(repeated)))])
        targets = sorted(chosen)
    return Graph.from_edges(n, edges)


_GENERATORS = {
    "erdos_renyi": _erdos_renyi,
    "ego": _ego,
    "regular": _regular,
    "geometric": _geometric,
    "powerlaw_tree": _powerlaw_tree,
    "barabasi_albert": _barabasi_albert,
}


# --------------------------------------------------- components, padding


def largest_connected_component(graph: Graph) -> Graph:
    if graph.n == 0:
        raise ValueError("empty graph")
    k, comp = connected_components(sp.csr_matrix(graph.adjacency), directed=False)
    if k == 1:
        return graph
    sizes = np.bincount(comp)
    # first occurrence in node order = smallest minimum index among ties
    best = max(range(k), key=lambda c: (sizes[c], -int(np.flatnonzero(comp == c)[0])))
    keep = np.flatnonzero(comp == best)
    return Graph(
        graph.adjacency[np.ix_(keep, keep)],
        None if graph.features is None else graph.features[keep],
        None if graph.labels is None else graph.labels[keep],
        attrs={"kept_nodes": keep},
    )


def is_connected(graph: Graph) -> bool:
    return connected_components(sp.csr_matrix(graph.adjacency), directed=False)[0] == 1


def pad_with_dummy_nodes(graph: Graph, n_max: int) -> Graph:
    if graph.n > n_max:
        raise ValueError(f"graph has {graph.n} nodes, more than n_max={n_max}")
    if graph.n == n_max:
        return graph
    a = np.zeros((n_max, n_max))
    a[: graph.n, : graph.n] = graph.adjacency
    x = None
    if graph.features is not None:
        x = np.zeros((n_max, graph.features.shape[1]))
        x[: graph.n] = graph.features
    labels = None
    if graph.labels is not None:
        labels = np.full(n_max, -1, dtype=np.int64)
        labels[: graph.n] = graph.labels
    return Graph(a, x, labels, attrs={"real_nodes": graph.n})


# ------------------------------------------------------------ splitting


@dataclass
class EdgeSplit:
    train_graph: Graph
    val_pos: np.ndarray
    val_neg: np.ndarray
    test_pos: np.ndarray
    test_neg: np.ndarray


def random_spanning_tree(graph: Graph, rng: np.random.Generator) -> set:
    """Uniform spanning tree of a connected graph (Wilson's algorithm)."""
    nbrs = _neighbors(graph.adjacency)
    n = graph.n
    in_tree = np.zeros(n, dtype=bool)
    nxt = np.full(n, -1, dtype=np.int64)
    in_tree[int(rng.integers(n))] = True
    for start in rng.permutation(n):
        u = int(start)
        while not in_tree[u]:
            nb = nbrs[u]
            nxt[u] = nb[int(rng.integers(len(nb)))]
            u = int(nxt[u])
        u = int(start)
        while not in_tree[u]:
            in_tree[u] = True
            u = int(nxt[u])
    return {(min(i, int(nxt[i])), max(i, int(nxt[i]))) for i in range(n) if nxt[i] >= 0}


def split_edges(graph: Graph, val_frac: float = 0.05, test_frac: float = 0.10, seed=None,
                max_tries: int = 100) -> EdgeSplit:
    """Hold out positive edges (keeping the train graph connected) and equal-size negatives."""
    rng = np.random.default_rng(seed)
    edges = graph.edges()
    n_e = len(edges)
    n_val = int(np.floor(n_e * val_frac))
    n_test = int(np.floor(n_e * test_frac))
    empty = np.zeros((0, 2), dtype=np.int64)
    if n_val + n_test == 0:
        return EdgeSplit(Graph(graph.adjacency.copy(), graph.features, graph.labels), empty, empty, empty, empty)
    if not is_connected(graph):
        raise SplitError("split_edges needs a connected graph")
    tree = random_spanning_tree(graph, rng)
    free = np.array([i for i, (u, v) in enumerate(edges.tolist()) if (u, v) not in tree], dtype=np.int64)
    if len(free) < n_val + n_test:
        raise SplitError(f"only {len(free)} non-tree edges, need {n_val + n_test}")
    held = rng.permutation(free)[: n_val + n_test]
    val_pos, test_pos = edges[held[:n_val]], edges[held[n_val:]]

    n = graph.n
    want = n_val + n_test
    if n * (n - 1) // 2 - n_e < want:
        raise SplitError("not enough non-edges for negative sampling")
    neg: set = set()
    for _ in range(max_tries):
        cand = rng.integers(0, n, size=(4 * want + 16, 2))
        for u, v in cand.tolist():
            if u == v or graph.adjacency[u, v] != 0:
                continue
            key = (min(u, v), max(u, v))
            if key not in neg:
                neg.add(key)
                if len(neg) == want:
                    break
        if len(neg) == want:
            break
    else:
        raise SplitError(f"negative sampling failed after {max_tries} rounds")
    neg_arr = rng.permutation(np.array(sorted(neg), dtype=np.int64))
    a = graph.adjacency.copy()
    hu, hv = edges[held, 0], edges[held, 1]
    a[hu, hv] = 0.0
    a[hv, hu] = 0.0
    train = Graph(a, graph.features, graph.labels)
    return EdgeSplit(train, val_pos, neg_arr[:n_val], test_pos, neg_arr[n_val:])


# ------------------------------------------------------------- edge I/O


def write_edgelist(graph: Graph, path) -> None:
    with open(path, "w") as fh:
        for u, v in graph.edges().tolist():
            fh.write(f"{u}\t{v}\n")


def read_edgelist(path, n: int | None = None) -> Graph:
    edges = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'u<TAB>v'")
        edges.append((int(parts[0]), int(parts[1])))
    e = np.array(edges, dtype=np.int64).reshape(-1, 2)
    size = (int(e.max()) + 1 if e.size else 0) if n is None else n
    e = e[e[:, 0] != e[:, 1]]
    return Graph.from_edges(size, e)
