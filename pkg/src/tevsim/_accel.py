"""Optional numba acceleration.

Hot kernels are written twice: a loop form compiled with ``numba.njit`` and a
vectorised numpy form. Set ``TEVSIM_DISABLE_NUMBA=1`` to force the numpy path
(also used automatically when numba is not importable).
"""
import os

_DISABLED = os.environ.get("TEVSIM_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes")

try:
    if _DISABLED:
        raise ImportError
    import numba
    HAS_NUMBA = True
except ImportError:
    numba = None
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and not _DISABLED


def njit(func):
    """Compile ``func`` with numba when available, else return it unchanged."""
    if not HAS_NUMBA:
        return func
    return numba.njit(cache=True)(func)


def backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
