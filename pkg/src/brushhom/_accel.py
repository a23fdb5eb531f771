"""Numba switch.

Hot kernels are compiled with numba unless the environment variable
``BRUSHHOM_DISABLE_NUMBA`` is set to a truthy value, in which case the
pure-numpy implementations in :mod:`brushhom.kernels` are used instead.
The flag is read once at import time.
"""
import os

_FLAG = os.environ.get("BRUSHHOM_DISABLE_NUMBA", "").strip().lower()

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and _FLAG not in {"1", "true", "yes", "on"}

if numba is not None and "NUMBA_THREADING_LAYER" not in os.environ:
    # the installed TBB is too old and only produces a warning when probed
    numba.config.THREADING_LAYER = "omp"


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if numba is None:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    return numba.njit(*args, **kwargs)


prange = range if numba is None else numba.prange
