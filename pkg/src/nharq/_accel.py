"""Optional numba acceleration.

Set ``NHARQ_NUMBA=0`` in the environment to force the pure-numpy paths.
The flag is read once at import time.
"""

import os

_flag = os.environ.get("NHARQ_NUMBA", "1").strip().lower()
_requested = _flag not in ("0", "false", "no", "off")

try:
    if not _requested:
        raise ImportError
    from numba import njit as _numba_njit

    NUMBA_ENABLED = True
except ImportError:
    _numba_njit = None
    NUMBA_ENABLED = False


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, otherwise a no-op decorator.

    The undecorated function is always reachable as ``.py_func``.
    """
    if NUMBA_ENABLED:
        kwargs.setdefault("cache", True)
        return _numba_njit(*args, **kwargs)

    def wrap(fn):
        fn.py_func = fn
        return fn

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap


def backend_name():
    return "numba" if NUMBA_ENABLED else "numpy"
