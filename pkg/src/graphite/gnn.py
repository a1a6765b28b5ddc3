"""Message-passing layers: the generic operator-family rule and its GCN case."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from . import tensor as T
from .tensor import ShapeError, Tensor

ACTIVATIONS = {"relu": T.relu, "identity": T.identity, "sigmoid": T.sigmoid}


@dataclass
class GnnLayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "relu"
    has_bias: bool = True
    full_bias: bool = False  # n x d bias instead of broadcast 1 x d

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0:
            raise ValueError("layer dims must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass
class GnnParams:
    weights: list[Tensor]
    biases: list[Tensor | None] = field(default_factory=list)

    def tensors(self) -> list[Tensor]:
        return [w for w in self.weights] + [b for b in self.biases if b is not None]


def init_params(specs: Sequence[GnnLayerSpec], rng: np.random.Generator, n: int | None = None,
                prefix: str = "gnn") -> GnnParams:
    """Glorot-uniform weights, zero biases."""
    ws, bs = [], []
    for i, s in enumerate(specs):
        ws.append(T.glorot_uniform(s.in_dim, s.out_dim, rng, name=f"{prefix}.W{i}"))
        if not s.has_bias:
            bs.append(None)
            continue
        rows = 1
        if s.full_bias:
            if n is None:
                raise ValueError("full_bias layers need the node count")
            rows = n
        bs.append(Tensor(np.zeros((rows, s.out_dim)), requires_grad=True, name=f"{prefix}.B{i}"))
    return GnnParams(ws, bs)


def propagate(op, h: Tensor) -> Tensor:
    if isinstance(op, Tensor):
        return T.matmul(op, h)
    if sp.issparse(op):
        return T.spmatmul(op, h)
    if callable(op):
        return op(h)
    return T.matmul(Tensor(op), h)


def gnn_layer(operators, h: Tensor, spec: GnnLayerSpec, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """eta(B + sum_f f(A) H W).

    ``operators`` holds n x n matrices (dense arrays, scipy sparse, or
    Tensors) or callables ``H -> f(A) H`` for operators that are never
    materialized.
    """
    if h.shape[-1] != spec.in_dim or weight.shape != (spec.in_dim, spec.out_dim):
        raise ShapeError("gnn_layer", T.as_tensor(np.zeros((1, h.shape[-1]))), weight,
                         detail=f"spec {spec.in_dim}->{spec.out_dim}")
    hw = T.spmatmul(h, weight) if sp.issparse(h) else T.matmul(h, weight)
    out = None
    for op in operators:
        term = propagate(op, hw)
        out = term if out is None else T.add(out, term)
    if out is None:
        out = T.scalar_mul(hw, 0.0)
    if bias is not None:
        out = T.add(out, bias)
    return ACTIVATIONS[spec.activation](out)


def gcn_layer(a_norm, h: Tensor, weight: Tensor, bias: Tensor | None = None, activation: str = "relu") -> Tensor:
    """eta(B + A~ H W)."""
    spec = GnnLayerSpec(weight.shape[0], weight.shape[1], activation, has_bias=bias is not None)
    return gnn_layer([a_norm], h, spec, weight, bias)


def gnn_forward(a_norm, x, specs: Sequence[GnnLayerSpec], params: GnnParams) -> Tensor:
    """Stack of GCN layers; ``x=None`` means identity input features."""
    if x is None:
        n = a_norm.shape[-1]
        h = Tensor(np.eye(n))
    else:
        h = T.as_tensor(x)
    for i, spec in enumerate(specs):
        bias = params.biases[i] if i < len(params.biases) else None
        h = gnn_layer([a_norm], h, spec, params.weights[i], bias)
    return h
