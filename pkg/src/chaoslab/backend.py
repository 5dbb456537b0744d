"""Backend selection for the hot numerical loops.

Every performance-critical inner loop in this package exists twice: a
numba ``@njit`` version and a vectorized numpy/scipy version.  Which one
runs is decided once, at import time, by the environment variable

    CHAOSLAB_DISABLE_NUMBA=1   -> force the numpy/scipy fallbacks

and by whether numba imports cleanly at all.  Both implementations are
kept semantically identical (same arithmetic, possibly different
summation order, so results agree to rounding); ``bench/benchmark.py``
times them against each other.
"""

from __future__ import annotations

import os

_DISABLED = os.environ.get("CHAOSLAB_DISABLE_NUMBA", "0") == "1"

try:  # pragma: no cover - exercised implicitly on import
    if _DISABLED:
        raise ImportError("numba disabled by CHAOSLAB_DISABLE_NUMBA")
    import numba  # noqa: F401

    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False


def numba_enabled() -> bool:
    """True when the numba fast paths are active in this process."""
    return HAVE_NUMBA


def njit(*args, **kwargs):
    """``numba.njit`` when active, identity decorator otherwise.

    Only used for loops that are tolerable (if slow) as plain Python;
    the genuinely hot kernels dispatch to separate numpy implementations
    instead of falling back to interpreted loops.
    """
    if HAVE_NUMBA:
        import numba

        return numba.njit(*args, **kwargs)
    if args and callable(args[0]):
        return args[0]

    def wrap(fn):
        return fn

    return wrap
