"""Backend selection for the hot loops.

Kernels are written as plain loops over numpy arrays.  When numba is
importable and ``FAULTWARN_BACKEND`` is not set to ``numpy``, they are
compiled with ``numba.njit``; otherwise the same source runs as ordinary
Python, and the vectorized numpy code paths are preferred where they exist.
"""

import os

BACKEND_ENV = "FAULTWARN_BACKEND"

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def requested_backend():
    value = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {value!r}")
    return value


USE_NUMBA = HAS_NUMBA and requested_backend() == "numba"


def njit(func):
    """Compile ``func`` with numba when enabled; always keep ``py_func``."""
    if USE_NUMBA:
        return numba.njit(cache=True)(func)
    func.py_func = func
    return func


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
