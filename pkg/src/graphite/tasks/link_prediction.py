"""Link prediction: held-out edges scored by reconstruction probability."""

from __future__ import annotations

import itertools
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .. import model as M
from .. import tensor as T
from ..graph import EdgeSplit, Graph, largest_connected_component, split_edges
from ..metrics import auc, average_precision
from .common import edge_dropout, feature_operand, model_config, restore, snapshot, sparse_normalized
from .config import Metrics, RunConfig

logger = logging.getLogger(__name__)


@dataclass
class LinkResult:
    model: M.GraphiteModel
    val_auc: float
    val_ap: float
    test_auc: float
    test_ap: float
    best_iter: int
    val_loss: float


def _pair_scores(z_final: np.ndarray, pairs: np.ndarray) -> np.ndarray:
    logits = np.einsum("ij,ij->i", z_final[pairs[:, 0]], z_final[pairs[:, 1]])
    return T._sigmoid(logits)


def embed(model: M.GraphiteModel, a_norm, x) -> np.ndarray:
    """Deterministic final embedding (posterior means, no sampling)."""
    with T.no_grad():
        post = M.encode(model, a_norm, x)
        return M.decode(model, post.mu, x).data


def score_pairs(model: M.GraphiteModel, a_norm, x, pos: np.ndarray, neg: np.ndarray):
    zf = embed(model, a_norm, x)
    s = np.concatenate([_pair_scores(zf, pos), _pair_scores(zf, neg)])
    y = np.concatenate([np.ones(len(pos)), np.zeros(len(neg))])
    return s, y


def train_link_model(split: EdgeSplit, cfg: RunConfig, lam: float, dropout: float, seed: int,
                     features=None, kind: str | None = None) -> LinkResult:
    g = split.train_graph
    n = g.n
    x = feature_operand(features)
    m = 0 if x is None else x.shape[1]
    mcfg = model_config(cfg, m if x is not None else n, m, lam, kind)
    model = M.GraphiteModel.create(mcfg, seed=seed)
    opt = T.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng([seed, 1])

    edges = g.edges()
    a_norm = sparse_normalized(n, edges, self_loops=cfg.self_loops)
    targets = M.reconstruction_targets(g.adjacency)
    nnz = float(np.count_nonzero(targets))
    pos_weight = (n * n - nnz) / nnz if cfg.pos_weight else 1.0
    norm = n * n / (2.0 * (n * n - nnz)) if cfg.pos_weight else 1.0
    count = len(edges) if cfg.subsample_count < 0 else cfg.subsample_count

    val_pairs = np.concatenate([split.val_pos, split.val_neg])
    val_y = np.concatenate([np.ones(len(split.val_pos)), np.zeros(len(split.val_neg))])
    best = (np.inf, 0, snapshot(model))
    for it in range(1, cfg.iters + 1):
        kept, w = edge_dropout(edges, dropout, rng)
        a_it = a_norm if w is None else sparse_normalized(n, kept, w, cfg.self_loops)
        noise = rng.standard_normal((n, mcfg.latent_dim)) if mcfg.variational else None
        sub = (count, rng) if count else None
        opt.zero_grad()
        obj = M.objective(model, a_it, targets, x, noise, pos_weight=pos_weight,
                          recon_scale=norm / (n * n), kl_scale=1.0 / (n * n), subsample=sub)
        obj.loss.backward()
        opt.step()
        if len(val_pairs) and (it % cfg.eval_every == 0 or it == cfg.iters):
            zf = embed(model, a_norm, x)
            logits = np.einsum("ij,ij->i", zf[val_pairs[:, 0]], zf[val_pairs[:, 1]])
            vloss = float(np.mean(np.logaddexp(0.0, logits) - val_y * logits))
            if vloss < best[0]:
                best = (vloss, it, snapshot(model))
    restore(model, best[2])
    res = LinkResult(model, np.nan, np.nan, np.nan, np.nan, best[1], best[0])
    if len(split.val_pos):
        s, y = score_pairs(model, a_norm, x, split.val_pos, split.val_neg)
        res.val_auc, res.val_ap = auc(s, y), average_precision(s, y)
    if len(split.test_pos):
        s, y = score_pairs(model, a_norm, x, split.test_pos, split.test_neg)
        res.test_auc, res.test_ap = auc(s, y), average_precision(s, y)
    return res


def _grid(cfg: RunConfig, kind: str):
    lams = cfg.lambda_grid if kind in ("graphite_vae", "graphite_ae") else (0.0,)
    return list(itertools.product(lams, cfg.dropout_grid))


def _one_split(args):
    graph, features, cfg, kind, r, choice = args
    seed = cfg.seed + r
    split = split_edges(graph, cfg.val_frac, cfg.test_frac, seed=seed)
    tried = []
    if choice is None:
        for lam, drop in _grid(cfg, kind):
            res = train_link_model(split, cfg, lam, drop, seed, features, kind)
            tried.append(((lam, drop), res))
            logger.info("split %d lambda=%.2f dropout=%.2f val_auc=%.4f", r, lam, drop, res.val_auc)
        (lam, drop), res = max(tried, key=lambda t: t[1].val_auc)
    else:
        lam, drop = choice
        res = train_link_model(split, cfg, lam, drop, seed, features, kind)
    rec = {"seed": seed, "auc": res.test_auc, "ap": res.test_ap, "val_auc": res.val_auc,
           "lambda": lam, "dropout": drop, "best_iter": res.best_iter}
    return rec, res.model


def link_prediction_run(graph: Graph, cfg: RunConfig, features=None, kind: str | None = None,
                        return_models: bool = False):
    """Train and evaluate over ``cfg.runs`` random splits; mean and stderr in Metrics."""
    kind = kind or cfg.model
    if features is None and cfg.use_features:
        features = graph.features
    if not cfg.use_features:
        features = None
    lcc = largest_connected_component(graph)
    if lcc.n != graph.n:
        logger.info("link prediction on largest component: %d of %d nodes", lcc.n, graph.n)
        if features is not None:
            features = np.asarray(features)[lcc.attrs["kept_nodes"]]
    graph = lcc
    metrics = Metrics(label=kind)
    models = []
    tuned = []
    n_tune = min(cfg.tune_splits, cfg.runs)
    for r in range(n_tune):
        rec, mdl = _one_split((graph, features, cfg, kind, r, None))
        metrics.add(**rec)
        models.append(mdl)
        tuned.append((rec["lambda"], rec["dropout"]))
    rest = range(n_tune, cfg.runs)
    if rest:
        choice = Counter(tuned).most_common(1)[0][0]
        jobs = [(graph, features, cfg, kind, r, choice) for r in rest]
        if cfg.jobs > 1:
            with ProcessPoolExecutor(cfg.jobs) as ex:
                outs = list(ex.map(_one_split, jobs))
        else:
            outs = [_one_split(j) for j in jobs]
        for rec, mdl in outs:
            metrics.add(**rec)
            models.append(mdl)
    return (metrics, models) if return_models else metrics
