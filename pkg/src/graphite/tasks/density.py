"""Density estimation over families of small graphs padded to a common size."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .. import model as M
from .. import tensor as T
from ..graph import generate, largest_connected_component, normalize_sym, pad_with_dummy_nodes
from .common import model_config, restore, snapshot
from .config import Metrics, RunConfig

logger = logging.getLogger(__name__)


@dataclass
class GraphBatch:
    """Padded graphs stacked along a leading batch axis."""

    adjacency: np.ndarray  # B x n x n
    a_norm: np.ndarray
    features: np.ndarray  # B x n x 1, 1 on real nodes
    targets: np.ndarray
    real_nodes: np.ndarray

    def __len__(self):
        return self.adjacency.shape[0]

    def permute_slots(self, perms) -> "GraphBatch":
        """Same graphs with nodes (real and dummy) reordered by ``perms[b]``."""
        idx = np.asarray(perms)
        take = lambda arr: np.stack([arr[b][np.ix_(p, p)] for b, p in enumerate(idx)])
        feats = np.stack([self.features[b][p] for b, p in enumerate(idx)])
        return GraphBatch(take(self.adjacency), take(self.a_norm), feats, take(self.targets), self.real_nodes)


def make_batch(graphs, n_max: int, self_loops: bool = False) -> GraphBatch:
    adj, norm, feats, real = [], [], [], []
    for g in graphs:
        g = largest_connected_component(g)
        k = g.n
        p = pad_with_dummy_nodes(g, n_max)
        adj.append(p.adjacency)
        norm.append(normalize_sym(p.adjacency, self_loops))
        f = np.zeros((n_max, 1))
        f[:k] = 1.0
        feats.append(f)
        real.append(k)
    adjacency = np.stack(adj)
    real = np.asarray(real)
    targets = M.reconstruction_targets(adjacency, real)
    # dummy diagonals stay 0
    return GraphBatch(adjacency, np.stack(norm), np.stack(feats), targets, real)


def sample_family(family: str, count: int, n_min: int, n_max: int, seed) -> list:
    rng = np.random.default_rng(seed)
    sizes = rng.integers(n_min, n_max + 1, size=count)
    seeds = rng.integers(0, 2**63 - 1, size=count)
    return [generate(family, int(n), seed=int(s)) for n, s in zip(sizes, seeds)]


def per_graph_loss(model: M.GraphiteModel, batch: GraphBatch, noise=None) -> np.ndarray:
    """Negative ELBO (VAE kinds) or reconstruction error (AE kinds) of every graph, in nats."""
    with T.no_grad():
        post = M.encode(model, batch.a_norm, batch.features)
        z = M.reparam_sample(post, noise) if model.config.variational else post.mu
        zf = M.decode(model, z, batch.features)
        logits = M.edge_logits(zf).data
    t = batch.targets
    per = (1.0 - t) * logits + np.logaddexp(0.0, -logits)
    out = per.reshape(len(batch), -1).sum(axis=1)
    if model.config.variational:
        mu, ls = post.mu.data, post.log_sigma.data
        kl = 0.5 * (mu ** 2 + np.exp(2 * ls) - 2 * ls - 1.0)
        out = out + kl.reshape(len(batch), -1).sum(axis=1)
    return out


def evaluate(model: M.GraphiteModel, batch: GraphBatch, samples: int, rng) -> np.ndarray:
    if not model.config.variational:
        return per_graph_loss(model, batch)
    shape = (len(batch), batch.adjacency.shape[1], model.config.latent_dim)
    return np.mean([per_graph_loss(model, batch, rng.standard_normal(shape)) for _ in range(samples)], axis=0)


def train_density_model(train: GraphBatch, val: GraphBatch, cfg: RunConfig, lam: float, seed: int,
                        kind: str | None = None):
    """Full-batch Adam on the mean per-graph loss; keeps the best-validation checkpoint."""
    mcfg = model_config(cfg, input_dim=1, feature_dim=1, lam=lam, kind=kind)
    model = M.GraphiteModel.create(mcfg, seed=seed)
    opt = T.Adam(model.parameters(), lr=cfg.lr)
    rng = np.random.default_rng([seed, 2])
    b = len(train)
    shape = (b, train.adjacency.shape[1], mcfg.latent_dim)
    best = (np.inf, 0, snapshot(model))
    for it in range(1, cfg.iters + 1):
        noise = rng.standard_normal(shape) if mcfg.variational else None
        opt.zero_grad()
        obj = M.objective(model, train.a_norm, train.targets, train.features, noise,
                          recon_scale=1.0 / b, kl_scale=1.0 / b)
        obj.loss.backward()
        opt.step()
        if it % cfg.eval_every == 0 or it == cfg.iters:
            v = float(evaluate(model, val, cfg.eval_samples, np.random.default_rng([seed, 3])).mean())
            if v < best[0]:
                best = (v, it, snapshot(model))
    restore(model, best[2])
    return model, best[0], best[1]


def density_estimation_run(family: str, cfg: RunConfig, kind: str | None = None,
                           return_models: bool = False):
    """``cfg.runs`` independent runs: sample 3 x n_graphs/3 graphs, train, test."""
    kind = kind or cfg.model
    metrics = Metrics(label=f"{kind}:{family}")
    models = []
    third = cfg.n_graphs // 3
    for r in range(cfg.runs):
        seed = cfg.seed + r
        graphs = sample_family(family, 3 * third, cfg.n_min, cfg.n_max, seed)
        tr, va, te = (make_batch(graphs[i * third:(i + 1) * third], cfg.n_max, cfg.self_loops) for i in range(3))
        lams = cfg.lambda_grid if kind in ("graphite_vae", "graphite_ae") else (0.0,)
        fits = [(lam,) + train_density_model(tr, va, cfg, lam, seed, kind) for lam in lams]
        lam, model, vloss, best_iter = min(fits, key=lambda f: f[2])
        test = evaluate(model, te, cfg.eval_samples, np.random.default_rng([seed, 4]))
        key = "neg_elbo" if model.config.variational else "recon_error"
        metrics.add(**{"seed": seed, key: float(test.mean()), "test_stderr": float(test.std(ddof=1) / np.sqrt(len(test))),
                       "val": vloss, "lambda": lam, "best_iter": best_iter, "family": family})
        logger.info("%s %s run %d: test %s = %.3f (lambda %.2f)", kind, family, r, key, test.mean(), lam)
        models.append(model)
    return (metrics, models) if return_models else metrics
