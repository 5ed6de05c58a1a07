"""Optional numba acceleration toggle.

Hot kernels are written once and compiled with numba when available.
Setting the environment variable CPTKIT_NO_NUMBA=1 (or any value other
than 0/false/off/empty) before import selects the pure-numpy fallback;
the same happens automatically when numba is not importable. The flag
must be set before the first cptkit import, because compilation happens
at import time.
"""

import os

_flag = os.environ.get("CPTKIT_NO_NUMBA", "").strip().lower()
_DISABLED = _flag not in ("", "0", "false", "off")

try:
    if _DISABLED:
        raise ImportError("numba disabled via CPTKIT_NO_NUMBA")
    from numba import njit as _njit

    NUMBA_ENABLED = True
except ImportError:
    _njit = None
    NUMBA_ENABLED = False


def maybe_njit(*args, **kwargs):
    """Apply numba.njit when enabled; otherwise return the function as-is.

    The undecorated function stays reachable through ``.py_func`` in both
    modes so benchmarks can compare the two paths in one process.
    """

    def wrap(func):
        if NUMBA_ENABLED:
            jitted = _njit(cache=True, **kwargs)(func)
            return jitted
        func.py_func = func
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap
