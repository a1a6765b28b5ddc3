"""Dense-matrix reverse-mode autodiff and the Adam optimizer.

Every op builds a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. The record is
rebuilt on every forward pass (define-by-run).

Matrices are float64 arrays with at least two dimensions. Leading dimensions
act as a batch: ``matmul`` follows ``np.matmul`` and ``transpose`` swaps the
last two axes. ``add``/``sub``/``hadamard`` accept numpy-broadcastable
shapes (used for row biases); their gradients are summed back to the
operand shape.
"""

from __future__ import annotations

import contextlib
import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested op."""

    def __init__(self, op: str, *operands: "Tensor", detail: str = ""):
        names = ", ".join(f"{t.name or '<anon>'}{tuple(t.shape)}" for t in operands)
        msg = f"{op}: incompatible operands {names}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.op = op
        self.shapes = [tuple(t.shape) for t in operands]


class NumericError(ArithmeticError):
    """An op produced a non-finite value."""

    def __init__(self, op: str, count: int):
        super().__init__(f"{op}: produced {count} non-finite value(s)")
        self.op = op


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def T(self) -> "Tensor":
        return transpose(self)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self):
        tag = f" {self.name}" if self.name else ""
        return f"Tensor{tag}(shape={self.shape}, op={self.op})"

    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scalar_mul(self, other)
        return hadamard(self, other)

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scalar_mul(self, -1.0)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Forward passes inside the block record no backward graph."""
    global _grad_enabled
    prev, _grad_enabled = _grad_enabled, False
    try:
        yield
    finally:
        _grad_enabled = prev


def _make(op: str, value: np.ndarray, parents: tuple, backward_fn) -> Tensor:
    if not np.isfinite(value).all():
        raise NumericError(op, int((~np.isfinite(value)).sum()))
    out = Tensor.__new__(Tensor)
    out.data = value
    out.grad = None
    out.requires_grad = _grad_enabled and any(p.requires_grad for p in parents)
    out._parents = parents if out.requires_grad else ()
    out._backward = backward_fn if out.requires_grad else None
    out.op = op
    out.name = None
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a, b) from None


# ---------------------------------------------------------------- ops


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a, b, detail="inner dimensions differ")
    try:
        value = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a, b, detail="batch dimensions differ") from None

    def bw(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2)) if a.requires_grad else None
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g) if b.requires_grad else None
        return (
            None if ga is None else _unbroadcast(ga, a.shape),
            None if gb is None else _unbroadcast(gb, b.shape),
        )

    return _make("matmul", value, (a, b), bw)


def spmatmul(op_matrix, b) -> Tensor:
    """Constant (possibly scipy-sparse) n x n operator times a tensor."""
    b = as_tensor(b)
    if op_matrix.shape[1] != b.shape[-2] or b.data.ndim != 2:
        raise ShapeError("spmatmul", Tensor(np.zeros((1, 1))), b,
                         detail=f"operator shape {op_matrix.shape}")
    value = np.asarray(op_matrix @ b.data)
    opT = op_matrix.T

    def bw(g):
        return (np.asarray(opT @ g),)

    return _make("spmatmul", value, (b,), bw)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    value = a.data + b.data
    return _make("add", value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    value = a.data - b.data
    return _make("sub", value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def hadamard(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("hadamard", a, b)
    value = a.data * b.data

    def bw(g):
        return (
            _unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
            _unbroadcast(g * a.data, b.shape) if b.requires_grad else None,
        )

    return _make("hadamard", value, (a, b), bw)


def scalar_mul(a, c: float) -> Tensor:
    a = as_tensor(a)
    c = float(c)
    return _make("scalar_mul", a.data * c, (a,), lambda g: (g * c,))


def concat_cols(*ts) -> Tensor:
    ts = tuple(as_tensor(t) for t in ts)
    lead = ts[0].shape[:-1]
    for t in ts[1:]:
        if t.shape[:-1] != lead:
            raise ShapeError("concat_cols", *ts, detail="row counts differ")
    value = np.concatenate([t.data for t in ts], axis=-1)
    edges = np.cumsum([0] + [t.shape[-1] for t in ts])

    def bw(g):
        return tuple(g[..., edges[i]:edges[i + 1]] for i in range(len(ts)))

    return _make("concat_cols", value, ts, bw)


def l2_normalize(a, axis: int | None = -1) -> Tensor:
    """x / ||x||_2 along rows (``axis=-1``) or over each whole matrix (``axis=None``).

    Zero-norm slices map to zero and pass no gradient.
    """
    a = as_tensor(a)
    axes = (-1,) if axis is not None else (-2, -1)
    norm = np.sqrt((a.data ** 2).sum(axis=axes, keepdims=True))
    zero = norm == 0.0
    if zero.any():
        logger.debug("l2_normalize: %d zero-norm slice(s) mapped to zero", int(zero.sum()))
    safe = np.where(zero, 1.0, norm)
    y = np.where(zero, 0.0, a.data / safe)

    def bw(g):
        dot = (g * y).sum(axis=axes, keepdims=True)
        return (np.where(zero, 0.0, (g - y * dot) / safe),)

    return _make("row_l2_normalize" if axis is not None else "l2_normalize", y, (a,), bw)


def row_l2_normalize(a) -> Tensor:
    return l2_normalize(a, axis=-1)


def reduce_sum(a, axis: int | None = None) -> Tensor:
    """Sum of all entries (1x1 result) or along one axis with dims kept."""
    a = as_tensor(a)
    if axis is None:
        value = np.array([[a.data.sum()]])
        return _make("reduce_sum", value, (a,), lambda g: (np.full(a.shape, g.reshape(-1)[0]),))
    value = a.data.sum(axis=axis, keepdims=True)
    return _make("reduce_sum", value, (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make("transpose", np.swapaxes(a.data, -1, -2).copy(), (a,), lambda g: (np.swapaxes(g, -1, -2),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0.0
    if _relu_trace is not None:
        _relu_trace.append((mask, a.data == 0.0))
    return _make("relu", np.where(mask, a.data, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = _sigmoid(a.data)
    return _make("sigmoid", y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    with np.errstate(over="ignore"):
        y = np.exp(a.data)
    return _make("exp", y, (a,), lambda g: (g * y,))


def log(a) -> Tensor:
    a = as_tensor(a)
    if (a.data <= 0.0).any():
        raise NumericError("log", int((a.data <= 0.0).sum()))
    x = a.data
    return _make("log", np.log(x), (a,), lambda g: (g / x,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; zero gradient where clamped."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _make("clip", np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def identity(a) -> Tensor:
    return as_tensor(a)


# ------------------------------------------------- fused loss primitives


def bce_with_logits(logits, targets, pos_weight: float = 1.0, weights=None) -> Tensor:
    """Sum over entries of weighted sigmoid cross-entropy (1x1 result).

    Targets and weights are constants. Positive targets are scaled by
    ``pos_weight``.
    """
    x = as_tensor(logits)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != x.shape:
        raise ShapeError("bce_with_logits", x, Tensor(t.reshape(1, -1) if t.ndim < 2 else t),
                         detail="targets must match logits")
    total, grad = kernels.bce_logits(x.data, t, float(pos_weight), weights)
    grad = np.asarray(grad).reshape(x.shape)
    return _make("bce_with_logits", np.array([[total]]), (x,), lambda g: (grad * g.reshape(-1)[0],))


def pair_dot(z, rows, cols) -> Tensor:
    """Column vector of <z[rows[p]], z[cols[p]]> without forming z z^T."""
    z = as_tensor(z)
    rows = np.ascontiguousarray(rows, dtype=np.int64)
    cols = np.ascontiguousarray(cols, dtype=np.int64)
    zd = np.ascontiguousarray(z.data)
    value = np.asarray(kernels.pair_dot(zd, rows, cols)).reshape(-1, 1)

    def bw(g):
        return (np.asarray(kernels.pair_dot_backward(zd, rows, cols, np.ascontiguousarray(g.reshape(-1)))),)

    return _make("pair_dot", value, (z,), bw)


def softmax_cross_entropy(logits, labels: np.ndarray, mask: np.ndarray | None = None) -> Tensor:
    """Mean cross-entropy over the masked rows of a n x c logit matrix."""
    x = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = x.shape[0]
    idx = np.arange(n) if mask is None else np.flatnonzero(mask)
    if idx.size == 0:
        raise ValueError("softmax_cross_entropy: empty mask")
    z = x.data - x.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    value = -logp[idx, labels[idx]].mean()
    grad = np.zeros_like(x.data)
    p = np.exp(logp[idx])
    p[np.arange(idx.size), labels[idx]] -= 1.0
    grad[idx] = p / idx.size
    return _make("softmax_cross_entropy", np.array([[value]]), (x,), lambda g: (grad * g.reshape(-1)[0],))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


# ------------------------------------------------------------ backward


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf."""
    if loss.data.size != 1:
        raise ValueError(f"backward: loss must be scalar, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node._backward is None:
            if node.requires_grad:
                node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for p, gp in zip(node._parents, node._backward(g)):
            if gp is None or not p.requires_grad:
                continue
            key = id(p)
            grads[key] = gp if key not in grads else grads[key] + gp


# ---------------------------------------------------------- init / adam


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator, name: str | None = None) -> Tensor:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-r, r, size=(fan_in, fan_out)), requires_grad=True, name=name)


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    learning_rate: float = 0.01

    @classmethod
    def for_params(cls, params: Sequence[Tensor], **kw) -> "AdamState":
        return cls([np.zeros_like(p.data) for p in params], [np.zeros_like(p.data) for p in params], **kw)


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray | None], state: AdamState) -> AdamState:
    """In-place bias-corrected Adam update; returns the advanced state."""
    if state.learning_rate <= 0:
        raise ValueError("learning_rate must be positive")
    if len(params) != len(state.first_moment):
        raise ValueError("parameter count does not match optimizer state")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            continue
        if g.shape != p.data.shape:
            raise ShapeError("adam_step", p, Tensor(g), detail="gradient shape")
        m = state.first_moment[i]
        v = state.second_moment[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1 ** t)
        v_hat = v / (1.0 - b2 ** t)
        p.data -= state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return state


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 0.01, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.state = AdamState.for_params(self.params, beta1=beta1, beta2=beta2, epsilon=eps, learning_rate=lr)

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        adam_step(self.params, [p.grad for p in self.params], self.state)


# ---------------------------------------------------------- grad check

_relu_trace: list | None = None


@dataclass
class GradCheckResult:
    max_rel_error: float
    checked: int
    skipped: list = field(default_factory=list)

    def __float__(self):
        return self.max_rel_error


def _traced(fn):
    global _relu_trace
    _relu_trace = []
    try:
        val = fn().item()
        return val, _relu_trace
    finally:
        _relu_trace = None


def _same_pattern(ta, tb) -> bool:
    # units pinned at exactly 0 under both perturbations are structural zeros, not kinks
    if len(ta) != len(tb):
        return False
    return all(np.array_equal(ma, mb) and np.array_equal(za, zb) for (ma, za), (mb, zb) in zip(ta, tb))


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], epsilon: float = 1e-5) -> GradCheckResult:
    """Compare backprop gradients with central differences, entry by entry.

    Entries whose +/- perturbation crosses a relu kink (or sits exactly on
    one) are skipped and listed in ``skipped`` as ``(param_index, flat_index)``.
    """
    for p in params:
        p.grad = None
    loss = fn()
    backward(loss)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    checked = 0
    skipped = []
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + epsilon
            fp, tp = _traced(fn)
            flat[j] = orig - epsilon
            fm, tm = _traced(fn)
            flat[j] = orig
            if not _same_pattern(tp, tm):
                skipped.append((pi, j))
                continue
            num = (fp - fm) / (2.0 * epsilon)
            ana = analytic[pi].reshape(-1)[j]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
            checked += 1
    if skipped:
        logger.warning("grad_check: skipped %d entries at relu kinks", len(skipped))
    for p in params:
        p.grad = None
    return GradCheckResult(worst, checked, skipped)
