"""Select between numba-compiled kernels and the pure-numpy fallback.

Set ``KRST_NUMBA=0`` to force the numpy path. Numba is used otherwise
whenever it imports.
"""
import os

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("KRST_NUMBA", "1").strip().lower() not in ("0", "false", "no", "off")


def njit(fn):
    """``numba.njit(cache=True)`` when numba is present, identity otherwise."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True)(fn)
