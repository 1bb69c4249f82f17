"""Pure-numpy numeric kernels (reference backend).

Every kernel here has a signature-compatible twin in ``_kernels_numba``.
Reductions accumulate in float64 and cast back to the operand dtype on the
way out; elementwise kernels round exactly once per element, so the two
backends agree bit-for-bit on everything except transcendentals and
accumulation order.

Scalar arguments (``s``, ``step``) must already be representable in the
array dtype; callers pre-round them (see ``autodiff._scale``).
"""

import numpy as np


def matmul(a, b):
    """Matrix product (m,k)@(k,n) with float64 accumulation."""
    return np.dot(a.astype(np.float64), b.astype(np.float64)).astype(a.dtype)


def matmul_nt(a, b):
    """a @ b.T with float64 accumulation."""
    return np.dot(a.astype(np.float64), b.astype(np.float64).T).astype(a.dtype)


def matmul_tn(a, b):
    """a.T @ b with float64 accumulation."""
    return np.dot(a.astype(np.float64).T, b.astype(np.float64)).astype(a.dtype)


def matvec(w, x):
    """Matrix-vector product (m,k)@(k,) with float64 accumulation."""
    return np.dot(w.astype(np.float64), x.astype(np.float64)).astype(w.dtype)


def matvec_t(w, g):
    """w.T @ g with float64 accumulation."""
    return np.dot(w.astype(np.float64).T, g.astype(np.float64)).astype(w.dtype)


def affine(w, x, b):
    """w @ x + b, fused, with float64 accumulation."""
    acc = np.dot(w.astype(np.float64), x.astype(np.float64))
    return (acc + b.astype(np.float64)).astype(w.dtype)


def outer(g, x):
    """Outer product (m,)x(k,) -> (m,k), rounded once per element."""
    return np.outer(g, x).astype(g.dtype)


def vdot(a, b):
    """Flat dot product as a python float (float64 accumulation)."""
    return float(np.dot(a.reshape(-1).astype(np.float64), b.reshape(-1).astype(np.float64)))


def sumsq(a):
    """Sum of squares as a python float (float64 accumulation)."""
    flat = a.reshape(-1).astype(np.float64)
    return float(np.dot(flat, flat))


def sumall(a):
    """Sum of all elements as a python float (float64 accumulation)."""
    return float(a.sum(dtype=np.float64))


def ew_add(a, b):
    return a + b


def ew_sub(a, b):
    return a - b


def ew_scale(a, s):
    # s is pre-rounded to a.dtype by the caller; the cast here is exact
    return a * a.dtype.type(s)


def tanh_fwd(x):
    return np.tanh(x)


def tanh_bwd(y, g):
    # y is tanh(x); d tanh = 1 - y^2
    return (1.0 - y * y) * g


def relu_fwd(x):
    return np.maximum(x, x.dtype.type(0))


def relu_bwd(x, g):
    return np.where(x > 0, g, x.dtype.type(0))


def mean_mid(x3):
    """Mean over the middle axis of a (p,n,q) array, float64 accumulation."""
    return x3.mean(axis=1, dtype=np.float64).astype(x3.dtype)


def bcast_mid(g2, n):
    """Adjoint of mean_mid: spread (p,q) over a new middle axis of size n, dividing by n."""
    scaled = (g2.astype(np.float64) / n).astype(g2.dtype)
    p, q = g2.shape
    return np.ascontiguousarray(np.broadcast_to(scaled[:, None, :], (p, n, q)))


def sign(x):
    # +0.0 forces a positive zero so both backends emit identical bits
    return np.sign(x) + x.dtype.type(0)


def clip_box(t, lo, hi):
    return np.minimum(np.maximum(t, lo), hi)


def pgd_step(v, g, step, lo, hi):
    """Fused sign-gradient ascent step clipped to [lo, hi]."""
    cand = v + v.dtype.type(step) * (np.sign(g) + v.dtype.type(0))
    return np.minimum(np.maximum(cand, lo), hi)
