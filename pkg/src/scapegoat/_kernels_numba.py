"""Numba-compiled numeric kernels (accelerated backend).

Signature-compatible with ``_kernels_numpy``.  Accumulations run in float64
and round once on the way back to the operand dtype, mirroring the reference
backend; elementwise kernels are bit-identical to it, transcendentals and
reductions agree to rounding order.

All inputs must be C-contiguous (``reshape(-1)`` below relies on it).
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def matmul(a, b):
    m, k = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += np.float64(a[i, l]) * np.float64(b[l, j])
            out[i, j] = acc
    return out


@njit(cache=True)
def matmul_nt(a, b):
    m, k = a.shape
    n = b.shape[0]
    out = np.empty((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += np.float64(a[i, l]) * np.float64(b[j, l])
            out[i, j] = acc
    return out


@njit(cache=True)
def matmul_tn(a, b):
    k, m = a.shape
    n = b.shape[1]
    out = np.empty((m, n), dtype=a.dtype)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for l in range(k):
                acc += np.float64(a[l, i]) * np.float64(b[l, j])
            out[i, j] = acc
    return out


@njit(cache=True)
def matvec(w, x):
    m, k = w.shape
    out = np.empty(m, dtype=w.dtype)
    for i in range(m):
        acc = 0.0
        for l in range(k):
            acc += np.float64(w[i, l]) * np.float64(x[l])
        out[i] = acc
    return out


@njit(cache=True)
def matvec_t(w, g):
    m, k = w.shape
    out = np.empty(k, dtype=w.dtype)
    for j in range(k):
        acc = 0.0
        for i in range(m):
            acc += np.float64(w[i, j]) * np.float64(g[i])
        out[j] = acc
    return out


@njit(cache=True)
def affine(w, x, b):
    m, k = w.shape
    out = np.empty(m, dtype=w.dtype)
    for i in range(m):
        acc = np.float64(b[i])
        for l in range(k):
            acc += np.float64(w[i, l]) * np.float64(x[l])
        out[i] = acc
    return out


@njit(cache=True)
def outer(g, x):
    m = g.size
    k = x.size
    out = np.empty((m, k), dtype=g.dtype)
    for i in range(m):
        for j in range(k):
            out[i, j] = g[i] * x[j]
    return out


@njit(cache=True)
def vdot(a, b):
    af = a.reshape(-1)
    bf = b.reshape(-1)
    acc = 0.0
    for i in range(af.size):
        acc += np.float64(af[i]) * np.float64(bf[i])
    return acc


@njit(cache=True)
def sumsq(a):
    af = a.reshape(-1)
    acc = 0.0
    for i in range(af.size):
        acc += np.float64(af[i]) * np.float64(af[i])
    return acc


@njit(cache=True)
def sumall(a):
    af = a.reshape(-1)
    acc = 0.0
    for i in range(af.size):
        acc += np.float64(af[i])
    return acc


@njit(cache=True)
def ew_add(a, b):
    af = a.reshape(-1)
    bf = b.reshape(-1)
    out = np.empty_like(af)
    for i in range(af.size):
        out[i] = af[i] + bf[i]
    return out.reshape(a.shape)


@njit(cache=True)
def ew_sub(a, b):
    af = a.reshape(-1)
    bf = b.reshape(-1)
    out = np.empty_like(af)
    for i in range(af.size):
        out[i] = af[i] - bf[i]
    return out.reshape(a.shape)


@njit(cache=True)
def ew_scale(a, s):
    # s is pre-rounded to a.dtype; float64 product then one store rounding
    # is identical to single-precision multiply of the rounded scalar
    af = a.reshape(-1)
    out = np.empty_like(af)
    for i in range(af.size):
        out[i] = np.float64(af[i]) * s
    return out.reshape(a.shape)


@njit(cache=True)
def tanh_fwd(x):
    xf = x.reshape(-1)
    out = np.empty_like(xf)
    for i in range(xf.size):
        out[i] = math.tanh(np.float64(xf[i]))
    return out.reshape(x.shape)


@njit(cache=True)
def tanh_bwd(y, g):
    yf = y.reshape(-1)
    gf = g.reshape(-1)
    out = np.empty_like(yf)
    for i in range(yf.size):
        out[i] = (1.0 - np.float64(yf[i]) * np.float64(yf[i])) * np.float64(gf[i])
    return out.reshape(y.shape)


@njit(cache=True)
def relu_fwd(x):
    xf = x.reshape(-1)
    out = np.empty_like(xf)
    for i in range(xf.size):
        out[i] = xf[i] if xf[i] > 0 else 0.0
    return out.reshape(x.shape)


@njit(cache=True)
def relu_bwd(x, g):
    xf = x.reshape(-1)
    gf = g.reshape(-1)
    out = np.empty_like(xf)
    for i in range(xf.size):
        out[i] = gf[i] if xf[i] > 0 else 0.0
    return out.reshape(x.shape)


@njit(cache=True)
def mean_mid(x3):
    p, n, q = x3.shape
    out = np.empty((p, q), dtype=x3.dtype)
    for i in range(p):
        for k in range(q):
            acc = 0.0
            for j in range(n):
                acc += np.float64(x3[i, j, k])
            out[i, k] = acc / n
    return out


@njit(cache=True)
def bcast_mid(g2, n):
    p, q = g2.shape
    out = np.empty((p, n, q), dtype=g2.dtype)
    for i in range(p):
        for k in range(q):
            val = np.float64(g2[i, k]) / n
            for j in range(n):
                out[i, j, k] = val
    return out


@njit(cache=True)
def sign(x):
    # finite inputs only (validated upstream); zeros map to +0.0
    xf = x.reshape(-1)
    out = np.empty_like(xf)
    for i in range(xf.size):
        if xf[i] > 0:
            out[i] = 1.0
        elif xf[i] < 0:
            out[i] = -1.0
        else:
            out[i] = 0.0
    return out.reshape(x.shape)


@njit(cache=True)
def clip_box(t, lo, hi):
    tf = t.reshape(-1)
    lf = lo.reshape(-1)
    hf = hi.reshape(-1)
    out = np.empty_like(tf)
    for i in range(tf.size):
        v = tf[i]
        if v < lf[i]:
            v = lf[i]
        elif v > hf[i]:
            v = hf[i]
        out[i] = v
    return out.reshape(t.shape)


@njit(cache=True)
def pgd_step(v, g, step, lo, hi):
    # float64 candidate then one store rounding; see box bound note in tensor.py
    vf = v.reshape(-1)
    gf = g.reshape(-1)
    lf = lo.reshape(-1)
    hf = hi.reshape(-1)
    out = np.empty_like(vf)
    for i in range(vf.size):
        if gf[i] > 0:
            c = np.float64(vf[i]) + step
        elif gf[i] < 0:
            c = np.float64(vf[i]) - step
        else:
            c = np.float64(vf[i])
        if c < lf[i]:
            out[i] = lf[i]
        elif c > hf[i]:
            out[i] = hf[i]
        else:
            out[i] = c
    return out.reshape(v.shape)
