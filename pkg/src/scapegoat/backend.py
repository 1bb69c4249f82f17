"""Kernel backend selection.

Two interchangeable kernel modules exist: ``_kernels_numpy`` (pure numpy,
always available) and ``_kernels_numba`` (jit-compiled, faster inner loops).
The active one is chosen at import time from the ``SCAPEGOAT_NUMBA``
environment variable:

    "0"            force the numpy backend
    "1"            force the numba backend (import failure is an error)
    "auto"/unset   numba if importable, numpy otherwise

Call sites access kernels through the module attribute (``backend.kernels``)
so that ``use()`` can swap implementations at runtime, which the benchmark
and the parity tests rely on.  Results are bit-reproducible within a
backend; across backends they agree to rounding order (see kernel module
docstrings).
"""

import os

kernels = None
_active = None

_NAMES = ("numpy", "numba")


def use(name):
    """Activate a backend by name ("numpy" or "numba")."""
    global kernels, _active
    if name == "numpy":
        from . import _kernels_numpy as mod
    elif name == "numba":
        from . import _kernels_numba as mod
    else:
        raise ValueError(f"unknown backend {name!r}; expected one of {_NAMES}")
    kernels = mod
    _active = name
    return mod


def active():
    """Name of the backend currently in use."""
    return _active


def _init():
    flag = os.environ.get("SCAPEGOAT_NUMBA", "auto").strip().lower()
    if flag in ("0", "numpy"):
        use("numpy")
    elif flag in ("1", "numba"):
        use("numba")
    elif flag in ("", "auto"):
        try:
            use("numba")
        except ImportError:
            use("numpy")
    else:
        raise ValueError(
            f"SCAPEGOAT_NUMBA={flag!r} not understood; use '0', '1' or 'auto'"
        )


_init()
