"""Pieces shared by the task harnesses."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..model import GraphiteModel, ModelConfig
from .config import RunConfig


def model_config(cfg: RunConfig, input_dim: int, feature_dim: int = 0, lam: float = 0.5,
                 kind: str | None = None) -> ModelConfig:
    return ModelConfig(
        kind=kind or cfg.model,
        input_dim=input_dim,
        encoder_hidden=cfg.encoder_hidden,
        latent_dim=cfg.latent_dim,
        decoder_hidden=cfg.decoder_hidden,
        out_dim=cfg.out_dim,
        rounds=cfg.rounds,
        skip_lambda=lam,
        skip_mode=cfg.skip_mode,
        norm_mode=cfg.norm_mode,
        feature_dim=feature_dim,
        pre_decoder=cfg.pre_decoder,
        self_loops=cfg.self_loops,
    )


def sparse_normalized(n: int, edges: np.ndarray, weights=None, self_loops: bool = False) -> sp.csr_matrix:
    """D^-1/2 A D^-1/2 as CSR, built from an undirected edge list."""
    e = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    w = np.ones(len(e)) if weights is None else np.asarray(weights, dtype=np.float64)
    rows = np.concatenate([e[:, 0], e[:, 1]])
    cols = np.concatenate([e[:, 1], e[:, 0]])
    vals = np.concatenate([w, w])
    a = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if self_loops:
        a = a + sp.identity(n, format="csr")
    deg = np.asarray(a.sum(axis=1)).ravel()
    s = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    d = sp.diags(s)
    return (d @ a @ d).tocsr()


def edge_dropout(edges: np.ndarray, rate: float, rng: np.random.Generator):
    """Keep each undirected edge with prob 1-rate; survivors rescaled by 1/(1-rate)."""
    if rate <= 0.0:
        return edges, None
    keep = rng.random(len(edges)) >= rate
    return edges[keep], np.full(int(keep.sum()), 1.0 / (1.0 - rate))


def feature_operand(x):
    """Dense features, or CSR when mostly zeros (bag-of-words style)."""
    if x is None:
        return None
    x = np.asarray(x, dtype=np.float64)
    if x.size and np.count_nonzero(x) / x.size < 0.2:
        return sp.csr_matrix(x)
    return x


def snapshot(model: GraphiteModel) -> dict:
    return {k: v.data.copy() for k, v in model.params.items()}


def restore(model: GraphiteModel, snap: dict) -> None:
    for k, v in snap.items():
        model.params[k].data[...] = v
