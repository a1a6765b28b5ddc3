"""Semi-supervised node classification with a Graphite-regularized GCN encoder.

The hybrid loss is cross-entropy on labeled nodes plus gamma times the
(scaled) negative ELBO. The classifier head is one GCN layer over
[mu | log sigma | X]. ``gcn_classifier_run`` trains the same network with
plain cross-entropy through separate code (gnn.gcn_layer) as a baseline.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .. import model as M
from .. import tensor as T
from ..gnn import gcn_layer
from ..graph import Graph
from .common import feature_operand, model_config, sparse_normalized
from .config import Metrics, RunConfig

logger = logging.getLogger(__name__)


class LabelError(ValueError):
    pass


@dataclass
class NodeSplit:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray


def standard_split(labels, per_class: int = 20, n_val: int = 500, n_test: int = 1000, seed=None) -> NodeSplit:
    """First ``per_class`` nodes of every class train; next ``n_val`` others validate; last ``n_test`` test.

    Unlabeled nodes (label < 0) are never selected. With ``seed`` the node
    order is shuffled first.
    """
    labels = np.asarray(labels)
    if labels.ndim != 1 or not (labels >= 0).any():
        raise LabelError("no labeled nodes")
    order = np.arange(labels.size)
    if seed is not None:
        order = np.random.default_rng(seed).permutation(labels.size)
    order = order[labels[order] >= 0]
    train = np.concatenate([order[labels[order] == c][:per_class] for c in np.unique(labels[order])])
    rest = order[~np.isin(order, train)]
    n_test = min(n_test, rest.size)
    test = rest[rest.size - n_test:]
    val = rest[: max(0, min(n_val, rest.size - n_test))]
    return NodeSplit(np.sort(train), np.sort(val), np.sort(test))


def _dropout(x, rate: float, rng: np.random.Generator):
    if rate <= 0.0 or x is None:
        return x
    if sp.issparse(x):
        x = x.copy()
        x.data = x.data * (rng.random(x.data.size) >= rate) / (1.0 - rate)
        return x
    return x * (rng.random(x.shape) >= rate) / (1.0 - rate)


def _l2(w: T.Tensor, decay: float) -> T.Tensor:
    return T.scalar_mul(T.reduce_sum(T.hadamard(w, w)), decay / 2.0)


def _init_head(in_blocks, n_classes: int, seed: int) -> dict:
    """Glorot over the full concatenated input, split into per-block weights."""
    rng = np.random.default_rng([seed, 5])
    full = T.glorot_uniform(sum(d for _, d in in_blocks), n_classes, rng).data
    out, row = {}, 0
    for name, d in in_blocks:
        out[name] = T.Tensor(full[row:row + d].copy(), requires_grad=True, name=name)
        row += d
    out["head.b"] = T.Tensor(np.zeros((1, n_classes)), requires_grad=True, name="head.b")
    return out


def _accuracy(logits: np.ndarray, labels: np.ndarray, idx: np.ndarray) -> float:
    return float(np.mean(logits[idx].argmax(axis=1) == labels[idx])) if idx.size else float("nan")


@dataclass
class _Prepared:
    a_norm: sp.csr_matrix
    x: object
    labels: np.ndarray
    n_classes: int
    split: NodeSplit
    train_mask: np.ndarray


def _prepare(graph: Graph, cfg: RunConfig, split: NodeSplit | None) -> _Prepared:
    if graph.labels is None:
        raise LabelError("node classification needs labels")
    if graph.features is None:
        raise LabelError("node classification needs node features")
    labels = np.asarray(graph.labels)
    split = split or standard_split(labels, cfg.labels_per_class, cfg.n_val, cfg.n_test)
    mask = np.zeros(graph.n, dtype=bool)
    mask[split.train] = True
    a_norm = sparse_normalized(graph.n, graph.edges(), self_loops=True)
    return _Prepared(a_norm, feature_operand(graph.features), labels, int(labels.max()) + 1, split, mask)


def _fit(step, evaluate, params, cfg: RunConfig):
    """Adam with early stopping; returns (best val accuracy, epochs run).

    Training stops after ``cfg.patience`` epochs in which neither validation
    accuracy rose nor validation loss fell; the best-accuracy parameters are restored.
    """
    opt = T.Adam(params, lr=cfg.lr)
    best_acc, best_loss, best_snap, stale, epoch = -1.0, np.inf, None, 0, 0
    for epoch in range(1, cfg.iters + 1):
        opt.zero_grad()
        step().backward()
        opt.step()
        acc, loss = evaluate()
        improved = False
        if acc > best_acc or (acc == best_acc and loss < best_loss):
            best_snap = [p.data.copy() for p in params]
            improved = True
        if acc > best_acc or loss < best_loss:
            improved = True
        best_acc, best_loss = max(best_acc, acc), min(best_loss, loss)
        stale = 0 if improved else stale + 1
        if stale >= cfg.patience:
            break
    for p, d in zip(params, best_snap):
        p.data[...] = d
    return best_acc, epoch


def train_hybrid(graph: Graph, cfg: RunConfig, gamma: float, seed: int, split: NodeSplit | None = None):
    """Graphite encoder + GCN head trained on CE + gamma * scaled negative ELBO.

    Returns (test accuracy, val accuracy, epochs, model, head).
    """
    d = _prepare(graph, cfg, split)
    n = graph.n
    m = d.x.shape[1]
    model = M.GraphiteModel.create(model_config(cfg, m, m, cfg.lambda_grid[0]), seed=seed)
    c = model.config
    blocks = [("head.Wmu", c.latent_dim)] + ([("head.Wls", c.latent_dim)] if c.variational else []) + [("head.Wx", m)]
    head = _init_head(blocks, d.n_classes, seed)
    drop_rng = np.random.default_rng([seed, 6])
    noise_rng = np.random.default_rng([seed, 7])

    targets = M.reconstruction_targets(graph.adjacency)
    nnz = float(np.count_nonzero(targets))
    pos_weight = (n * n - nnz) / nnz
    norm = n * n / (2.0 * (n * n - nnz))

    def logits_of(post, x):
        hw = T.add(T.matmul(post.mu, head["head.Wmu"]), M._const_matmul(x, head["head.Wx"]))
        if c.variational:
            hw = T.add(hw, T.matmul(post.log_sigma, head["head.Wls"]))
        return T.add(T.spmatmul(d.a_norm, hw), head["head.b"])

    def step():
        x = _dropout(d.x, cfg.input_dropout, drop_rng)
        post = M.encode(model, d.a_norm, x)
        loss = T.softmax_cross_entropy(logits_of(post, x), d.labels, d.train_mask)
        loss = T.add(loss, _l2(model.params["enc0.W"], cfg.weight_decay))
        if gamma > 0:
            # the same posterior feeds both terms
            z = M.reparam_sample(post, noise_rng.standard_normal((n, c.latent_dim))) if c.variational else post.mu
            recon = M.reconstruction_loss(M.edge_logits(M.decode(model, z, x)), targets, pos_weight=pos_weight)
            elbo_term = T.scalar_mul(recon, norm / (n * n))
            if c.variational:
                elbo_term = T.add(elbo_term, T.scalar_mul(M.kl_standard_normal(post), 1.0 / (n * n)))
            loss = T.add(loss, T.scalar_mul(elbo_term, gamma))
        return loss

    val_mask = np.zeros(n, dtype=bool)
    val_mask[d.split.val] = True

    def evaluate():
        with T.no_grad():
            lg = logits_of(M.encode(model, d.a_norm, d.x), d.x)
            loss = T.softmax_cross_entropy(lg, d.labels, val_mask).item() if val_mask.any() else 0.0
        return _accuracy(lg.data, d.labels, d.split.val), loss

    params = model.parameters() + list(head.values())
    val_acc, epochs = _fit(step, evaluate, params, cfg)
    with T.no_grad():
        lg = logits_of(M.encode(model, d.a_norm, d.x), d.x).data
    return _accuracy(lg, d.labels, d.split.test), val_acc, epochs, model, head


def train_gcn_classifier(graph: Graph, cfg: RunConfig, seed: int, split: NodeSplit | None = None):
    """Plain GCN with the encoder's architecture and initialization order; CE only.

    Returns (test accuracy, val accuracy, epochs).
    """
    d = _prepare(graph, cfg, split)
    m = d.x.shape[1]
    variational = cfg.model in ("graphite_vae", "vgae")
    rng = np.random.default_rng(seed)
    dims = [m] + list(cfg.encoder_hidden)
    hidden = []
    for i in range(len(cfg.encoder_hidden)):
        hidden.append((T.glorot_uniform(dims[i], dims[i + 1], rng),
                       T.Tensor(np.zeros((1, dims[i + 1])), requires_grad=True)))
    heads = [(T.glorot_uniform(dims[-1], cfg.latent_dim, rng), T.Tensor(np.zeros((1, cfg.latent_dim)), requires_grad=True))
             for _ in range(2 if variational else 1)]
    blocks = [("head.Wmu", cfg.latent_dim)] + ([("head.Wls", cfg.latent_dim)] if variational else []) + [("head.Wx", m)]
    out = _init_head(blocks, d.n_classes, seed)
    drop_rng = np.random.default_rng([seed, 6])

    def forward(x):
        h = x
        for w, b in hidden:
            h = gcn_layer(d.a_norm, h, w, b, "relu")
        mu = gcn_layer(d.a_norm, h, *heads[0], "identity")
        hw = T.add(T.matmul(mu, out["head.Wmu"]), T.spmatmul(x, out["head.Wx"]) if sp.issparse(x)
                   else T.matmul(T.as_tensor(x), out["head.Wx"]))
        if variational:
            ls = T.clip(gcn_layer(d.a_norm, h, *heads[1], "identity"), *M.LOG_SIGMA_BOUNDS)
            hw = T.add(hw, T.matmul(ls, out["head.Wls"]))
        return T.add(T.spmatmul(d.a_norm, hw), out["head.b"])

    def step():
        x = _dropout(d.x, cfg.input_dropout, drop_rng)
        loss = T.softmax_cross_entropy(forward(x), d.labels, d.train_mask)
        return T.add(loss, _l2(hidden[0][0], cfg.weight_decay))

    val_mask = np.zeros(graph.n, dtype=bool)
    val_mask[d.split.val] = True

    def evaluate():
        with T.no_grad():
            lg = forward(d.x)
            loss = T.softmax_cross_entropy(lg, d.labels, val_mask).item() if val_mask.any() else 0.0
        return _accuracy(lg.data, d.labels, d.split.val), loss

    params = [p for pair in hidden + heads for p in pair] + list(out.values())
    val_acc, epochs = _fit(step, evaluate, params, cfg)
    with T.no_grad():
        lg = forward(d.x).data
    return _accuracy(lg, d.labels, d.split.test), val_acc, epochs


def node_classification_run(graph: Graph, cfg: RunConfig, gamma: float | None = None,
                            split: NodeSplit | None = None) -> Metrics:
    """Mean test accuracy over ``cfg.runs`` seeds; gamma tuned on validation accuracy unless given."""
    metrics = Metrics(label=f"{cfg.model}:classify")
    if gamma is None:
        scores = []
        for g in cfg.gamma_grid:
            vals = [train_hybrid(graph, cfg, g, cfg.seed + r, split)[1] for r in range(min(cfg.tune_splits, cfg.runs))]
            scores.append((float(np.mean(vals)), g))
            logger.info("gamma=%.2f val accuracy %.4f", g, scores[-1][0])
        gamma = max(scores, key=lambda s: s[0])[1]
    for r in range(cfg.runs):
        test, val, epochs = train_hybrid(graph, cfg, gamma, cfg.seed + r, split)[:3]
        metrics.add(seed=cfg.seed + r, accuracy=test, val_accuracy=val, gamma=gamma, epochs=epochs)
    return metrics


def gcn_classifier_run(graph: Graph, cfg: RunConfig, split: NodeSplit | None = None) -> Metrics:
    metrics = Metrics(label="gcn:classify")
    for r in range(cfg.runs):
        test, val, epochs = train_gcn_classifier(graph, cfg, cfg.seed + r, split)
        metrics.add(seed=cfg.seed + r, accuracy=test, val_accuracy=val, epochs=epochs)
    return metrics
