"""Numerical check that a GNN layer reproduces first-order mean-field embedding updates.

An update operator maps the masked vector of neighbor embeddings N_i to the
node's next embedding. Its first-order expansion at the origin is realized
exactly by a GNN layer with identity activation, bias O(0), unit weight and
one scaled-adjacency operator per neighbor slot j:
f_j(A)[i, j] = dO/dmu_j(0) * A[i, j].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .gnn import GnnLayerSpec, gnn_layer
from .tensor import Tensor

FD_EPS = 1e-6


@dataclass
class UpdateOperator:
    """Smooth map from an n-vector (or n x d matrix) of neighbor embeddings to an embedding."""

    fn: Callable[[np.ndarray], np.ndarray | float]
    gradient: Callable[[tuple], np.ndarray] | None = None  # shape -> dO/dN at 0
    name: str = "operator"

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.fn(np.asarray(v, dtype=np.float64)), dtype=np.float64))

    def value_at_zero(self, shape) -> np.ndarray:
        return self(np.zeros(shape))

    def jacobian_at_zero(self, shape) -> np.ndarray:
        """d_out x (input shape); analytic when available, else central differences."""
        if self.gradient is not None:
            g = np.asarray(self.gradient(tuple(shape)), dtype=np.float64)
            d_out = self.value_at_zero(shape).size
            return g.reshape((d_out,) + tuple(shape))
        base = np.zeros(shape)
        d_out = self(base).size
        jac = np.zeros((d_out,) + tuple(shape))
        for idx in np.ndindex(*shape):
            e = np.zeros(shape)
            e[idx] = FD_EPS
            jac[(slice(None),) + idx] = (self(base + e) - self(base - e)) / (2 * FD_EPS)
        return jac


# ----------------------------------------------------------- operators


def linear_operator(weights, offset: float = 0.0) -> UpdateOperator:
    w = np.asarray(weights, dtype=np.float64)
    return UpdateOperator(lambda v: offset + float((w * v).sum()), lambda s: w.reshape(s), "linear")


def sine_sum_operator() -> UpdateOperator:
    return UpdateOperator(lambda v: float(np.sin(v).sum()), lambda s: np.ones(s), "sine_sum")


def quadratic_operator() -> UpdateOperator:
    return UpdateOperator(lambda v: float((v ** 2).sum()), lambda s: np.zeros(s), "quadratic")


def logistic_operator(weights, offset: float = 0.0) -> UpdateOperator:
    w = np.asarray(weights, dtype=np.float64)
    s0 = 1.0 / (1.0 + np.exp(-offset))

    def fn(v):
        return 1.0 / (1.0 + np.exp(-(offset + float((w * v).sum()))))

    return UpdateOperator(fn, lambda s: (s0 * (1 - s0) * w).reshape(s), "logistic")


def random_operator(n: int, rng: np.random.Generator, shape=None) -> UpdateOperator:
    shape = (n,) if shape is None else shape
    kind = rng.integers(4)
    if kind == 0:
        return linear_operator(rng.normal(size=shape), float(rng.normal()))
    if kind == 1:
        return sine_sum_operator()
    if kind == 2:
        return quadratic_operator()
    return logistic_operator(rng.normal(size=shape), float(rng.normal()))


# ---------------------------------------------------------- embeddings


def neighbor_vector(adjacency: np.ndarray, embeddings: np.ndarray, i: int) -> np.ndarray:
    """Embeddings with non-neighbors of ``i`` zeroed (rows, for vector embeddings)."""
    mask = np.asarray(adjacency)[i] != 0
    emb = np.asarray(embeddings, dtype=np.float64)
    return np.where(mask.reshape((-1,) + (1,) * (emb.ndim - 1)), emb, 0.0)


def mf_embedding_update(op: UpdateOperator, adjacency: np.ndarray, embeddings: np.ndarray) -> np.ndarray:
    """mu_i <- O(N_i) for every node."""
    n = np.asarray(adjacency).shape[0]
    out = np.stack([op(neighbor_vector(adjacency, embeddings, i)) for i in range(n)])
    return out[:, 0] if np.ndim(embeddings) == 1 and out.shape[1] == 1 else out


def taylor_first_order(op: UpdateOperator, n_i: np.ndarray) -> np.ndarray:
    """O(0) + J(0) . N_i."""
    n_i = np.asarray(n_i, dtype=np.float64)
    jac = op.jacobian_at_zero(n_i.shape)
    val = op.value_at_zero(n_i.shape) + jac.reshape(jac.shape[0], -1) @ n_i.ravel()
    return val


# --------------------------------------------------- constructed network


@dataclass
class ConstructedGnn:
    operators: list[np.ndarray]  # F_l
    weight: Tensor  # W_l = 1
    bias: Tensor  # B_l, every entry O(0)
    spec: GnnLayerSpec  # identity activation
    out_shape: tuple = field(default=())

    def __call__(self, embeddings: np.ndarray) -> np.ndarray:
        h = Tensor(np.asarray(embeddings, dtype=np.float64).reshape(-1, 1))
        with T.no_grad():
            out = gnn_layer(self.operators, h, self.spec, self.weight, self.bias).data
        return out.reshape(self.out_shape)


def construct_equivalent_gnn(op: UpdateOperator, adjacency: np.ndarray, emb_shape=None) -> ConstructedGnn:
    """GNN layer whose output equals the first-order expansion of ``op`` at every node.

    Vector embeddings (n x d in, d_out out) are handled by lifting each
    (node, dim) pair to its own scalar slot: the lifted adjacency is
    A kron 1 and operator (j, a) scales column (j, a) by the Jacobian entry.
    """
    a = np.asarray(adjacency, dtype=np.float64)
    n = a.shape[0]
    emb_shape = (n,) if emb_shape is None else tuple(emb_shape)
    jac = op.jacobian_at_zero(emb_shape)  # d_out x n [x d]
    d_out = jac.shape[0]
    d_in = int(np.prod(emb_shape[1:])) if len(emb_shape) > 1 else 1
    jac = jac.reshape(d_out, n, d_in)
    b0 = op.value_at_zero(emb_shape)
    rows, cols = n * d_out, n * d_in
    operators = []
    for j in range(n):
        for q in range(d_in):
            f = np.zeros((rows, cols))
            # row (i, p) <- dO_p/dmu_{j,q}(0) * A_ij at column (j, q)
            f[:, j * d_in + q] = np.kron(a[:, j], jac[:, j, q])
            operators.append(f)
    spec = GnnLayerSpec(1, 1, "identity", has_bias=True, full_bias=True)
    bias = Tensor(np.tile(b0, n).reshape(rows, 1))
    out_shape = (n,) if d_out == 1 and len(emb_shape) == 1 else (n, d_out)
    return ConstructedGnn(operators, Tensor(np.ones((1, 1))), bias, spec, out_shape)


def check_theorem(op: UpdateOperator, adjacency: np.ndarray, embeddings: np.ndarray,
                  scales=(1.0, 0.5, 0.25)) -> dict:
    """Compare constructed GNN with the first-order expansion and with the exact update."""
    a = np.asarray(adjacency, dtype=np.float64)
    emb = np.asarray(embeddings, dtype=np.float64)
    n = a.shape[0]
    gnn = construct_equivalent_gnn(op, a, emb.shape)
    out_gnn = gnn(emb)
    taylor = np.stack([taylor_first_order(op, neighbor_vector(a, emb, i)) for i in range(n)]).reshape(out_gnn.shape)
    remainders = []
    for s in scales:
        e = emb * s
        exact = mf_embedding_update(op, a, e).reshape(out_gnn.shape)
        remainders.append(float(np.max(np.abs(gnn(e) - exact))))
    ratios = [remainders[i] / remainders[i + 1] if remainders[i + 1] > 0 else float("nan")
              for i in range(len(remainders) - 1)]
    return {
        "operator": op.name,
        "n": n,
        "max_abs_diff_vs_taylor": float(np.max(np.abs(out_gnn - taylor))),
        "scales": list(scales),
        "remainder": remainders,
        "remainder_ratios": ratios,
    }
