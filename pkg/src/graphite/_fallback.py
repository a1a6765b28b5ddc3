"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def bce_logits(x, t, pos_weight=1.0, w=None):
    x = np.asarray(x, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    if x.size != t.size:
        raise ValueError("bce_logits: logits and targets differ in size")
    c = 1.0 + (pos_weight - 1.0) * t
    e = np.exp(-np.abs(x))
    sp = np.log1p(e) + np.maximum(-x, 0.0)
    sneg = np.where(x > 0, e, 1.0) / (1.0 + e)
    per = (1.0 - t) * x + c * sp
    g = (1.0 - t) - c * sneg
    if w is not None:
        w = np.asarray(w, dtype=np.float64)
        if w.size != x.size:
            raise ValueError("bce_logits: weights differ in size")
        per = per * w
        g = g * w
    return float(per.sum()), g


def pair_dot(z, rows, cols):
    return np.einsum("ij,ij->i", z[rows], z[cols])


def pair_dot_backward(z, rows, cols, g):
    out = np.zeros_like(z)
    np.add.at(out, rows, g[:, None] * z[cols])
    np.add.at(out, cols, g[:, None] * z[rows])
    return out
