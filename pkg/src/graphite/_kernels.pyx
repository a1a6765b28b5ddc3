# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the reconstruction objective.

The dense reconstruction loss touches all n^2 logits every iteration; numpy
needs five or six full passes (and temporaries) for value + gradient, these
kernels do it in one.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs

cnp.import_array()


def bce_logits(x, t, double pos_weight=1.0, w=None):
    """Weighted sigmoid cross-entropy summed over all entries.

    Returns ``(loss, grad)`` with ``grad`` the derivative w.r.t. ``x``.
    """
    cdef cnp.ndarray[cnp.float64_t, ndim=1] xf = np.ascontiguousarray(x, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] tf = np.ascontiguousarray(t, dtype=np.float64).ravel()
    cdef cnp.ndarray[cnp.float64_t, ndim=1] wf
    cdef cnp.ndarray[cnp.float64_t, ndim=1] g = np.empty_like(xf)
    cdef Py_ssize_t i, n = xf.shape[0]
    cdef double xi, ti, c, sp, sneg, e, total = 0.0, wi
    cdef bint has_w = w is not None
    if tf.shape[0] != n:
        raise ValueError("bce_logits: logits and targets differ in size")
    if has_w:
        wf = np.ascontiguousarray(w, dtype=np.float64).ravel()
        if wf.shape[0] != n:
            raise ValueError("bce_logits: weights differ in size")
    else:
        wf = np.empty(0)
    for i in range(n):
        xi = xf[i]
        ti = tf[i]
        c = 1.0 + (pos_weight - 1.0) * ti
        e = exp(-fabs(xi))
        # softplus(-x) and sigmoid(-x), both overflow-safe
        if xi > 0:
            sp = log1p(e)
            sneg = e / (1.0 + e)
        else:
            sp = log1p(e) - xi
            sneg = 1.0 / (1.0 + e)
        wi = wf[i] if has_w else 1.0
        total += wi * ((1.0 - ti) * xi + c * sp)
        g[i] = wi * ((1.0 - ti) - c * sneg)
    return total, g.reshape(np.shape(x))


def pair_dot(cnp.ndarray[cnp.float64_t, ndim=2] z,
             cnp.ndarray[cnp.int64_t, ndim=1] rows,
             cnp.ndarray[cnp.int64_t, ndim=1] cols):
    """out[p] = <z[rows[p]], z[cols[p]]>."""
    cdef Py_ssize_t p, j, m = rows.shape[0], k = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(m)
    cdef double s
    for p in range(m):
        s = 0.0
        for j in range(k):
            s += z[rows[p], j] * z[cols[p], j]
        out[p] = s
    return out


def pair_dot_backward(cnp.ndarray[cnp.float64_t, ndim=2] z,
                      cnp.ndarray[cnp.int64_t, ndim=1] rows,
                      cnp.ndarray[cnp.int64_t, ndim=1] cols,
                      cnp.ndarray[cnp.float64_t, ndim=1] g):
    """Scatter-add gradient of pair_dot back onto rows of ``z``."""
    cdef Py_ssize_t p, j, r, c, m = rows.shape[0], k = z.shape[1]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros_like(z)
    cdef double gp
    for p in range(m):
        r = rows[p]
        c = cols[p]
        gp = g[p]
        for j in range(k):
            out[r, j] += gp * z[c, j]
            out[c, j] += gp * z[r, j]
    return out
