"""Quadrature over the latent space of tiny models: log p(A | X) and the exact ELBO.

Only for n <= 3 nodes with k = 1. With row normalization and k = 1 the
intermediate graph depends on sign(z), so each axis is cut into panels with
a break at 0 and each panel integrated by Gauss-Legendre (``rule="split"``,
``order`` points per panel). Panels also break at mu + c sigma and at fixed
|z| values, since logits grow like z^2 and a wide posterior would otherwise
leave the region near 0 with few nodes. ``rule="hermite"`` uses plain
tensorized Gauss-Hermite, which converges slowly across the jump.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import logsumexp

from .. import model as M
from .. import tensor as T

MAX_NODES = 3
HALF_WIDTH = 12.0  # standard deviations kept on each side; mass beyond is ~1e-33
SIGMA_BREAKS = (1.0, 3.0, 6.0)
Z_BREAKS = (0.0, 1.0, -1.0, 3.0, -3.0)
CHUNK = 32768


class OracleError(ValueError):
    pass


def _check(model: M.GraphiteModel, n: int):
    if n > MAX_NODES or model.config.latent_dim != 1:
        raise OracleError(f"oracle needs n <= {MAX_NODES} and latent_dim == 1 (got n={n}, k={model.config.latent_dim})")


def axis_rule(mean: float, std: float, order: int, rule: str = "split"):
    """Nodes and log-weights integrating f(z) N(z; mean, std^2) dz on one axis."""
    if rule == "hermite":
        x, w = np.polynomial.hermite_e.hermegauss(order)
        return mean + std * x, np.log(w) - 0.5 * np.log(2 * np.pi)
    if rule != "split":
        raise OracleError(f"unknown quadrature rule {rule!r}")
    lo, hi = mean - HALF_WIDTH * std, mean + HALF_WIDTH * std
    cuts = [mean + c * std for c in SIGMA_BREAKS] + [mean - c * std for c in SIGMA_BREAKS] + list(Z_BREAKS)
    edges = [lo] + sorted(c for c in set(cuts) if lo < c < hi) + [hi]
    x, w = np.polynomial.legendre.leggauss(order)
    nodes, logw = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        z = 0.5 * (b - a) * x + 0.5 * (a + b)
        nodes.append(z)
        logw.append(np.log(0.5 * (b - a) * w) - 0.5 * ((z - mean) / std) ** 2 - np.log(std) - 0.5 * np.log(2 * np.pi))
    return np.concatenate(nodes), np.concatenate(logw)


def _axes(means, stds, order, rule):
    return [axis_rule(m, s, order, rule) for m, s in zip(means, stds)]


def _chunks(axes):
    """Yield (points, log-weights) of the tensor grid in bounded-size pieces."""
    shape = tuple(len(a[0]) for a in axes)
    total = int(np.prod(shape))
    for s in range(0, total, CHUNK):
        idx = np.unravel_index(np.arange(s, min(s + CHUNK, total)), shape)
        pts = np.stack([a[0][i] for a, i in zip(axes, idx)], axis=-1)
        logw = sum(a[1][i] for a, i in zip(axes, idx))
        yield pts, logw


def _loglik(model, pts, targets, x, pos_weight):
    return M.log_likelihood_given_z(model, pts[:, :, None], targets, x, pos_weight)


def oracle_log_marginal(model: M.GraphiteModel, targets, x=None, order: int = 16, rule: str = "split",
                        pos_weight: float = 1.0) -> float:
    """log of the integral of p(A | Z, X) N(Z; 0, I) over Z (n x 1)."""
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[-1]
    _check(model, n)
    parts = [logsumexp(logw + _loglik(model, pts, targets, x, pos_weight))
             for pts, logw in _chunks(_axes(np.zeros(n), np.ones(n), order, rule))]
    return float(logsumexp(parts))


def quadrature_elbo(model: M.GraphiteModel, a_norm, targets, x=None, order: int = 16, rule: str = "split",
                    pos_weight: float = 1.0) -> float:
    """E_q[log p(A | Z, X)] - KL(q || p) with the expectation done by quadrature."""
    targets = np.asarray(targets, dtype=np.float64)
    n = targets.shape[-1]
    _check(model, n)
    if not model.config.variational:
        raise OracleError("ELBO needs a variational model")
    with T.no_grad():
        post = M.encode(model, a_norm, x)
    mu, ls = post.mu.data[:, 0], post.log_sigma.data[:, 0]
    expected = math.fsum(float(np.sum(np.exp(logw) * _loglik(model, pts, targets, x, pos_weight)))
                         for pts, logw in _chunks(_axes(mu, np.exp(ls), order, rule)))
    kl = float(0.5 * np.sum(mu ** 2 + np.exp(2 * ls) - 2 * ls - 1.0))
    return expected - kl
