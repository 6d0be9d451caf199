"""Compilation shim for the hot kernels.

Every kernel in :mod:`finslerkit.kernels` is decorated with ``njit`` from
this module.  By default that is numba's ``njit`` (nopython, cached).  Setting
the environment variable ``FINSLERKIT_DISABLE_NUMBA=1`` before import turns
the decorator into a no-op, so the identical source runs as plain
numpy/Python.  That fallback path is the reference implementation used by the
kernel benchmark and by the cross-mode consistency tests.
"""
from __future__ import annotations

import os

ENV_FLAG = "FINSLERKIT_DISABLE_NUMBA"

USING_NUMBA = os.environ.get(ENV_FLAG, "").strip().lower() not in (
    "1",
    "true",
    "yes",
)

if USING_NUMBA:
    try:
        from numba import njit  # noqa: F401
    except ImportError:  # pragma: no cover - numba is an install requirement
        USING_NUMBA = False

if not USING_NUMBA:

    def njit(*args, **kwargs):
        """No-op stand-in for numba.njit: returns the function unchanged."""
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap
