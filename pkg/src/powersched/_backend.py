"""Kernel backend selection.

``POWERSCHED_BACKEND`` picks the implementation of the hot loops:
``numba`` (default when numba imports) or ``numpy`` (vectorized fallback).
``POWERSCHED_NUM_THREADS`` caps numba's worker threads.
"""

import os

BACKEND_ENV = "POWERSCHED_BACKEND"
THREADS_ENV = "POWERSCHED_NUM_THREADS"

try:
    import numba

    HAVE_NUMBA = True
    if "NUMBA_THREADING_LAYER" not in os.environ:
        # skip the TBB probe, which warns on older system TBB builds
        numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False


def requested_backend():
    name = os.environ.get(BACKEND_ENV, "numba" if HAVE_NUMBA else "numpy").strip().lower()
    if name not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        return "numpy"
    return name


def apply_thread_limit():
    value = os.environ.get(THREADS_ENV)
    if value and HAVE_NUMBA:
        numba.set_num_threads(max(1, min(int(value), numba.config.NUMBA_NUM_THREADS)))


if HAVE_NUMBA:
    njit = numba.njit
    prange = numba.prange
else:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

    prange = range
