"""Optional numba acceleration.

Set ``CANARY_DISABLE_NUMBA=1`` to force the pure-numpy code paths even when
numba is importable. The flag is read once at import time.
"""

import os

try:
    from numba import njit as _njit

    NUMBA_INSTALLED = True
except ImportError:  # pragma: no cover - depends on environment
    NUMBA_INSTALLED = False

_FLAG = os.environ.get("CANARY_DISABLE_NUMBA", "").strip().lower()
USE_NUMBA = NUMBA_INSTALLED and _FLAG not in {"1", "true", "yes", "on"}


def optional_njit(*args, **kwargs):
    """``numba.njit`` when available, identity decorator otherwise.

    The undecorated Python function stays reachable as ``.py_func`` on the
    compiled object, or is the object itself without numba.
    """

    def decorator(func):
        if NUMBA_INSTALLED:
            return _njit(*args, **kwargs)(func)
        return func

    return decorator


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
