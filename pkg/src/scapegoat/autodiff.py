"""Taped reverse-mode automatic differentiation over dense float tensors.

The tape is eager: recording an op computes its value immediately.  A
finished tape can be re-evaluated in place after overwriting input leaves
(``set_input`` + ``recompute``), which is what the optimizers do in their
inner loops instead of rebuilding graphs.

Supported ops: add, sub, scale (by a constant), matmul (matrix-matrix and
matrix-vector), affine (w @ x + b), tanh, relu, sum, mean_axis, dot,
l2_norm, and a fused cosine node with an analytic gradient.  There is no
division op; losses that need normalization go through cosine, whose value
is scale-invariant in each operand.

Gradient arrays returned by ``backward`` may share memory with one another;
treat them as read-only.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import ContractError, DegenerateVectorError, ShapeError
from .tensor import NORM_FLOOR, validate_finite

_DTYPES = (np.float32, np.float64)


def _scaled(arr, c):
    # pre-round the scalar to the array dtype so both backends round identically
    return backend.kernels.ew_scale(arr, float(arr.dtype.type(c)))


# ---------------------------------------------------------------------------
# forward rules: (input values, aux) -> (value, cache)
# ---------------------------------------------------------------------------

def _fwd_add(vals, aux):
    return backend.kernels.ew_add(vals[0], vals[1]), ()


def _fwd_sub(vals, aux):
    return backend.kernels.ew_sub(vals[0], vals[1]), ()


def _fwd_scale(vals, aux):
    return backend.kernels.ew_scale(vals[0], aux[0]), ()


def _fwd_matmul(vals, aux):
    a, b = vals
    if b.ndim == 1:
        return backend.kernels.matvec(a, b), ()
    return backend.kernels.matmul(a, b), ()


def _fwd_affine(vals, aux):
    return backend.kernels.affine(vals[0], vals[1], vals[2]), ()


def _fwd_tanh(vals, aux):
    return backend.kernels.tanh_fwd(vals[0]), ()


def _fwd_relu(vals, aux):
    return backend.kernels.relu_fwd(vals[0]), ()


def _fwd_sum(vals, aux):
    (x,) = vals
    return np.array([backend.kernels.sumall(x)], dtype=x.dtype), ()


def _mid_dims(shape, axis):
    pre = math.prod(shape[:axis])
    post = math.prod(shape[axis + 1:])
    return pre, shape[axis], post


def _fwd_mean_axis(vals, aux):
    (x,) = vals
    axis = aux[0]
    pre, n, post = _mid_dims(x.shape, axis)
    out = backend.kernels.mean_mid(x.reshape(pre, n, post))
    rest = x.shape[:axis] + x.shape[axis + 1:]
    return out.reshape(rest if rest else (1,)), ()


def _fwd_dot(vals, aux):
    a, b = vals
    return np.array([backend.kernels.vdot(a, b)], dtype=a.dtype), ()


def _fwd_l2_norm(vals, aux):
    (a,) = vals
    norm = math.sqrt(backend.kernels.sumsq(a))
    return np.array([norm], dtype=a.dtype), (norm,)


def _fwd_cosine(vals, aux):
    a, b = vals
    k = backend.kernels
    na = math.sqrt(k.sumsq(a))
    nb = math.sqrt(k.sumsq(b))
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise DegenerateVectorError(f"cosine: operand norm at or below {NORM_FLOOR:g}")
    s = k.vdot(a, b)
    y = min(1.0, max(-1.0, s / (na * nb)))
    return np.array([y], dtype=a.dtype), (s, na, nb)


# ---------------------------------------------------------------------------
# backward rules: (input values, out value, aux, cache, out grad) -> input grads
# ---------------------------------------------------------------------------

def _bwd_add(vals, out, aux, cache, g):
    return [g, g]


def _bwd_sub(vals, out, aux, cache, g):
    return [g, _scaled(g, -1.0)]


def _bwd_scale(vals, out, aux, cache, g):
    return [backend.kernels.ew_scale(g, aux[0])]


def _bwd_matmul(vals, out, aux, cache, g):
    a, b = vals
    k = backend.kernels
    if b.ndim == 1:
        return [k.outer(g, b), k.matvec_t(a, g)]
    return [k.matmul_nt(g, b), k.matmul_tn(a, g)]


def _bwd_affine(vals, out, aux, cache, g):
    w, x, b = vals
    k = backend.kernels
    return [k.outer(g, x), k.matvec_t(w, g), g]


def _bwd_tanh(vals, out, aux, cache, g):
    return [backend.kernels.tanh_bwd(out, g)]


def _bwd_relu(vals, out, aux, cache, g):
    return [backend.kernels.relu_bwd(vals[0], g)]


def _bwd_sum(vals, out, aux, cache, g):
    (x,) = vals
    return [np.full(x.shape, g[0], dtype=x.dtype)]


def _bwd_mean_axis(vals, out, aux, cache, g):
    (x,) = vals
    axis = aux[0]
    pre, n, post = _mid_dims(x.shape, axis)
    g3 = backend.kernels.bcast_mid(g.reshape(pre, post), n)
    return [g3.reshape(x.shape)]


def _bwd_dot(vals, out, aux, cache, g):
    a, b = vals
    g0 = float(g[0])
    return [_scaled(b, g0), _scaled(a, g0)]


def _bwd_l2_norm(vals, out, aux, cache, g):
    (a,) = vals
    (norm,) = cache
    if norm == 0.0:
        # subgradient choice at the kink
        return [np.zeros_like(a)]
    return [_scaled(a, float(g[0]) / norm)]


def _bwd_cosine(vals, out, aux, cache, g):
    a, b = vals
    s, na, nb = cache
    g0 = float(g[0])
    k = backend.kernels
    ga = k.ew_sub(_scaled(b, g0 / (na * nb)), _scaled(a, g0 * s / (na ** 3 * nb)))
    gb = k.ew_sub(_scaled(a, g0 / (na * nb)), _scaled(b, g0 * s / (nb ** 3 * na)))
    return [ga, gb]


_FWD = {
    "add": _fwd_add,
    "sub": _fwd_sub,
    "scale": _fwd_scale,
    "matmul": _fwd_matmul,
    "affine": _fwd_affine,
    "tanh": _fwd_tanh,
    "relu": _fwd_relu,
    "sum": _fwd_sum,
    "mean_axis": _fwd_mean_axis,
    "dot": _fwd_dot,
    "l2_norm": _fwd_l2_norm,
    "cosine": _fwd_cosine,
}

_BWD = {
    "add": _bwd_add,
    "sub": _bwd_sub,
    "scale": _bwd_scale,
    "matmul": _bwd_matmul,
    "affine": _bwd_affine,
    "tanh": _bwd_tanh,
    "relu": _bwd_relu,
    "sum": _bwd_sum,
    "mean_axis": _bwd_mean_axis,
    "dot": _bwd_dot,
    "l2_norm": _bwd_l2_norm,
    "cosine": _bwd_cosine,
}


@dataclass
class Node:
    """One tape entry: an input leaf or a computed op."""

    op: str
    inputs: tuple
    value: np.ndarray
    aux: tuple = ()
    cache: tuple = field(default_factory=tuple)
    grad: np.ndarray = None


class Graph:
    """A Wengert-list computation graph over same-dtype dense tensors."""

    def __init__(self):
        self.nodes = []
        self.dtype = None

    # -- tape construction --------------------------------------------------

    def input(self, value):
        """Record an input leaf; returns its node id."""
        arr = np.atleast_1d(np.ascontiguousarray(value))
        if arr.dtype.type not in _DTYPES:
            arr = arr.astype(np.float32)
        if self.dtype is None:
            self.dtype = arr.dtype
        elif arr.dtype != self.dtype:
            raise ContractError(
                f"input: dtype {arr.dtype} does not match graph dtype {self.dtype}"
            )
        validate_finite(arr, "graph input")
        return self._append("input", (), arr.copy(), ())

    def set_input(self, nid, value):
        """Overwrite an input leaf's value (same shape and dtype required)."""
        node = self._node(nid)
        if node.op != "input":
            raise ContractError(f"set_input: node {nid} is a {node.op} node, not an input")
        arr = np.ascontiguousarray(value)
        if arr.shape != node.value.shape or arr.dtype != node.value.dtype:
            raise ShapeError(
                f"set_input: expected {node.value.shape} {node.value.dtype}, "
                f"got {arr.shape} {arr.dtype}"
            )
        node.value = arr.copy()

    def add(self, a, b):
        va, vb = self._value_of(a), self._value_of(b)
        if va.shape != vb.shape:
            raise ShapeError(f"add: shapes differ: {va.shape} vs {vb.shape}")
        return self._record("add", (a, b))

    def sub(self, a, b):
        va, vb = self._value_of(a), self._value_of(b)
        if va.shape != vb.shape:
            raise ShapeError(f"sub: shapes differ: {va.shape} vs {vb.shape}")
        return self._record("sub", (a, b))

    def scale(self, a, s):
        va = self._value_of(a)
        s_eff = float(va.dtype.type(s))
        if not np.isfinite(s_eff):
            raise ContractError(f"scale: constant must be finite, got {s!r}")
        return self._record("scale", (a,), aux=(s_eff,))

    def matmul(self, a, b):
        va, vb = self._value_of(a), self._value_of(b)
        if va.ndim != 2 or vb.ndim not in (1, 2):
            raise ShapeError(
                f"matmul: expected (2-d, 1-d or 2-d) operands, got {va.shape} @ {vb.shape}"
            )
        if va.shape[1] != vb.shape[0]:
            raise ShapeError(f"matmul: inner dims differ: {va.shape} @ {vb.shape}")
        return self._record("matmul", (a, b))

    def affine(self, w, x, b):
        vw, vx, vb = self._value_of(w), self._value_of(x), self._value_of(b)
        if vw.ndim != 2 or vx.ndim != 1 or vb.ndim != 1:
            raise ShapeError(
                f"affine: expected (2-d, 1-d, 1-d), got {vw.shape}, {vx.shape}, {vb.shape}"
            )
        if vw.shape[1] != vx.shape[0] or vw.shape[0] != vb.shape[0]:
            raise ShapeError(
                f"affine: dims do not chain: {vw.shape} @ {vx.shape} + {vb.shape}"
            )
        return self._record("affine", (w, x, b))

    def tanh(self, a):
        self._value_of(a)
        return self._record("tanh", (a,))

    def relu(self, a):
        self._value_of(a)
        return self._record("relu", (a,))

    def sum(self, a):
        self._value_of(a)
        return self._record("sum", (a,))

    def mean_axis(self, a, axis):
        va = self._value_of(a)
        if not 0 <= axis < va.ndim:
            raise ShapeError(f"mean_axis: axis {axis} out of range for shape {va.shape}")
        return self._record("mean_axis", (a,), aux=(axis,))

    def dot(self, a, b):
        va, vb = self._value_of(a), self._value_of(b)
        if va.shape != vb.shape:
            raise ShapeError(f"dot: shapes differ: {va.shape} vs {vb.shape}")
        return self._record("dot", (a, b))

    def l2_norm(self, a):
        self._value_of(a)
        return self._record("l2_norm", (a,))

    def cosine(self, a, b):
        va, vb = self._value_of(a), self._value_of(b)
        if va.shape != vb.shape:
            raise ShapeError(f"cosine: shapes differ: {va.shape} vs {vb.shape}")
        return self._record("cosine", (a, b))

    # -- evaluation ----------------------------------------------------------

    def value(self, nid):
        return self._node(nid).value

    def grad(self, nid):
        return self._node(nid).grad

    def recompute(self):
        """Re-evaluate every computed node in tape order.

        Shapes cannot change (set_input enforces them), so the checks from
        construction time still hold.
        """
        for node in self.nodes:
            if node.op == "input":
                continue
            vals = [self.nodes[i].value for i in node.inputs]
            node.value, node.cache = _FWD[node.op](vals, node.aux)

    def backward(self, loss):
        """Reverse-accumulate gradients of a scalar loss node.

        Returns {node id: gradient} for every node the loss depends on
        (including the loss itself); the same arrays land on ``node.grad``.
        Unreachable nodes keep ``grad=None``.
        """
        root = self._node(loss)
        if root.value.size != 1:
            raise ContractError(
                f"backward: loss must have a single element, got shape {root.value.shape}"
            )
        reach = set()
        stack = [loss]
        while stack:
            nid = stack.pop()
            if nid in reach:
                continue
            reach.add(nid)
            stack.extend(self.nodes[nid].inputs)

        for node in self.nodes:
            node.grad = None
        grads = [None] * len(self.nodes)
        grads[loss] = np.ones_like(root.value)
        for nid in range(loss, -1, -1):
            if grads[nid] is None:
                continue
            node = self.nodes[nid]
            node.grad = grads[nid]
            if node.op == "input":
                continue
            vals = [self.nodes[i].value for i in node.inputs]
            in_grads = _BWD[node.op](vals, node.value, node.aux, node.cache, grads[nid])
            for iid, gd in zip(node.inputs, in_grads):
                if grads[iid] is None:
                    grads[iid] = gd
                else:
                    grads[iid] = backend.kernels.ew_add(grads[iid], gd)
        return {nid: self.nodes[nid].grad for nid in reach}

    # -- internals ------------------------------------------------------------

    def _node(self, nid):
        if not isinstance(nid, int) or not 0 <= nid < len(self.nodes):
            raise ContractError(f"node id {nid!r} is not on this tape")
        return self.nodes[nid]

    def _value_of(self, nid):
        return self._node(nid).value

    def _append(self, op, inputs, value, aux, cache=()):
        self.nodes.append(Node(op, inputs, value, aux, cache))
        return len(self.nodes) - 1

    def _record(self, op, inputs, aux=()):
        vals = [self._value_of(i) for i in inputs]
        value, cache = _FWD[op](vals, aux)
        return self._append(op, tuple(inputs), value, aux, cache)
