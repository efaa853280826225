"""Select between numba-compiled kernels and the plain Python path.

Set ``RSFBAYES_DISABLE_NUMBA=1`` before import to run every kernel as
ordinary Python (useful for debugging and for the benchmark comparison).
"""
from __future__ import annotations

import os

_FLAG = "RSFBAYES_DISABLE_NUMBA"

NUMBA_DISABLED = os.environ.get(_FLAG, "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if NUMBA_DISABLED:
        raise ImportError(f"{_FLAG} is set")
    from numba import njit as _njit

    USING_NUMBA = True
except ImportError:
    _njit = None
    USING_NUMBA = False


def jit(fn=None, **options):
    """``numba.njit`` with caching when numba is active, identity otherwise."""
    options.setdefault("cache", True)

    def wrap(f):
        if not USING_NUMBA:
            return f
        return _njit(**options)(f)

    if fn is None:
        return wrap
    return wrap(fn)
