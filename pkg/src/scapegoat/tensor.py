"""Dense float tensors: validation helpers, exact box clamping, cosine
similarity, finite differences, and the ``.tnsr`` file format.

Tensors are plain C-contiguous numpy arrays, float32 by default; reductions
inside kernels accumulate in float64.  Nothing here wraps ndarray.
"""

import struct

import numpy as np

from . import backend
from .errors import ContractError, DegenerateVectorError, FormatError, NonFiniteError, ShapeError

DTYPE = np.float32

# below this L2 norm a vector cannot be normalized meaningfully
NORM_FLOOR = 1e-12

_MAGIC = b"TNSR"
_VERSION = 1
_DTYPE_F32 = 1
_MAX_RANK = 8


def as_tensor(data, dtype=DTYPE):
    """Coerce to a C-contiguous float array of rank >= 1, validating finiteness."""
    arr = np.atleast_1d(np.ascontiguousarray(data, dtype=dtype))
    validate_finite(arr, "tensor")
    return arr


def validate_finite(arr, what="value"):
    """Raise NonFiniteError if any element is NaN or infinite."""
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{what} contains non-finite elements")
    return arr


def cosine_similarity(a, b):
    """Cosine of the angle between two same-shape tensors, clamped to [-1, 1].

    Norms and the inner product accumulate in float64.  Raises
    DegenerateVectorError if either operand's norm is at or below NORM_FLOOR.
    """
    if a.shape != b.shape:
        raise ShapeError(f"cosine_similarity: shapes differ: {a.shape} vs {b.shape}")
    k = backend.kernels
    na = np.sqrt(k.sumsq(a))
    nb = np.sqrt(k.sumsq(b))
    if na <= NORM_FLOOR or nb <= NORM_FLOOR:
        raise DegenerateVectorError(
            f"cosine_similarity: operand norm at or below {NORM_FLOOR:g}"
        )
    c = k.vdot(a, b) / (na * nb)
    return float(min(1.0, max(-1.0, c)))


def sign_map(t):
    """Elementwise sign with values exactly in {-1, 0, +1}."""
    validate_finite(t, "sign_map input")
    return backend.kernels.sign(t)


def box_bounds(center, eps):
    """Bounds of the L-infinity ball of radius eps around center, in center's dtype.

    The radius is interpreted at the tensor dtype (eps rounds to float32 for
    float32 centers).  Naively computing ``center + eps`` can overshoot the
    radius by far more than one ulp when ``|center| >> eps``, because the sum
    rounds at center's exponent.  Each bound is therefore nudged back toward
    the center with nextafter until ``bound - center`` does not exceed the
    radius in exact (float64) arithmetic.  Values clipped to these bounds
    satisfy the constraint exactly, not just to rounding error.
    """
    if not np.isscalar(eps) and not isinstance(eps, (int, float, np.floating)):
        raise ContractError(f"box_bounds: eps must be a scalar, got {type(eps).__name__}")
    e = center.dtype.type(eps)
    if not np.isfinite(e) or e < 0:
        raise ContractError(f"box_bounds: eps must be finite and >= 0, got {eps!r}")
    validate_finite(center, "box_bounds center")
    c64 = center.astype(np.float64)
    radius = np.float64(e)

    hi = center + e
    over = (hi.astype(np.float64) - c64) > radius
    while over.any():  # one nextafter step suffices; the loop proves the claim
        hi[over] = np.nextafter(hi[over], center[over])
        over = (hi.astype(np.float64) - c64) > radius

    lo = center - e
    under = (c64 - lo.astype(np.float64)) > radius
    while under.any():
        lo[under] = np.nextafter(lo[under], center[under])
        under = (c64 - lo.astype(np.float64)) > radius
    return lo, hi


def clamp_box(t, center, eps):
    """Project t onto the L-infinity ball of radius eps around center.

    Idempotent; the result satisfies ``|out - center| <= eps`` exactly in
    float64 arithmetic (see box_bounds).  With eps=0 the center is returned.
    """
    if t.shape != center.shape:
        raise ShapeError(f"clamp_box: shapes differ: {t.shape} vs {center.shape}")
    validate_finite(t, "clamp_box input")
    lo, hi = box_bounds(center, eps)
    return backend.kernels.clip_box(t, lo, hi)


def finite_diff_gradient(fn, point, h=1e-3):
    """Central-difference gradient estimate of a scalar function at point.

    ``fn`` maps a tensor like ``point`` to a python float.  Steps are taken
    in point's dtype; each quotient divides by the actually-realized step
    (``float64(x+h) - float64(x-h)``), which matters at float32.  Returns a
    float64 array (this is an oracle, not a graph value).
    """
    if h <= 0:
        raise ContractError(f"finite_diff_gradient: h must be > 0, got {h!r}")
    validate_finite(point, "finite_diff_gradient point")
    hd = point.dtype.type(h)
    flat = point.reshape(-1)
    grad = np.empty(flat.size, dtype=np.float64)
    work = flat.copy()
    for i in range(flat.size):
        orig = flat[i]
        plus = point.dtype.type(orig + hd)
        minus = point.dtype.type(orig - hd)
        work[i] = plus
        f_plus = float(fn(work.reshape(point.shape)))
        work[i] = minus
        f_minus = float(fn(work.reshape(point.shape)))
        work[i] = orig
        if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
            raise NonFiniteError("finite_diff_gradient: objective returned non-finite value")
        denom = np.float64(plus) - np.float64(minus)
        grad[i] = (f_plus - f_minus) / denom
    return grad.reshape(point.shape)


def write_tensor(path, t):
    """Serialize a float32 tensor to the binary .tnsr format.

    Layout: magic "TNSR", version byte, dtype byte (1 = float32 LE), rank
    byte (1..8), one zero pad byte, rank u64 little-endian dims, then the
    row-major payload.  No compression, no padding, no trailing bytes.
    """
    if not isinstance(t, np.ndarray) or t.dtype != np.float32:
        raise ContractError("write_tensor: expected a float32 ndarray")
    if not 1 <= t.ndim <= _MAX_RANK:
        raise ContractError(f"write_tensor: rank must be 1..{_MAX_RANK}, got {t.ndim}")
    if any(d < 1 for d in t.shape):
        raise ContractError(f"write_tensor: dims must be >= 1, got {t.shape}")
    validate_finite(t, "write_tensor payload")
    header = struct.pack("<4sBBBB", _MAGIC, _VERSION, _DTYPE_F32, t.ndim, 0)
    dims = struct.pack(f"<{t.ndim}Q", *t.shape)
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(dims)
        fh.write(payload)


def read_tensor(path):
    """Read a .tnsr file back into a float32 array, validating every field.

    FormatError carries the byte offset of the first problem.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    n = len(raw)
    if n < 8:
        raise FormatError(f"truncated header: need 8 bytes, have {n}", offset=n)
    magic, version, dtype_code, rank, pad = struct.unpack_from("<4sBBBB", raw, 0)
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}", offset=0)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    if dtype_code != _DTYPE_F32:
        raise FormatError(f"unsupported dtype code {dtype_code}", offset=5)
    if not 1 <= rank <= _MAX_RANK:
        raise FormatError(f"rank {rank} outside 1..{_MAX_RANK}", offset=6)
    if pad != 0:
        raise FormatError(f"pad byte must be 0, got {pad}", offset=7)
    dims_end = 8 + 8 * rank
    if n < dims_end:
        raise FormatError(f"truncated dim table: need {dims_end} bytes, have {n}", offset=n)
    dims = struct.unpack_from(f"<{rank}Q", raw, 8)
    for i, d in enumerate(dims):
        if d < 1:
            raise FormatError(f"dim {i} must be >= 1, got {d}", offset=8 + 8 * i)
    count = 1
    for d in dims:
        count *= d
    expected = dims_end + 4 * count
    if n < expected:
        raise FormatError(
            f"payload truncated: expected {expected - dims_end} bytes at offset "
            f"{dims_end}, got {n - dims_end}",
            offset=n,
        )
    if n > expected:
        raise FormatError(f"{n - expected} trailing bytes after payload", offset=expected)
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise FormatError(
            f"non-finite element at flat index {bad[0]}",
            offset=dims_end + 4 * int(bad[0]),
        )
    return flat.astype(np.float32).reshape(dims)
