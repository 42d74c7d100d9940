"""Selection between numba-compiled kernels and the pure-numpy path.

Set ``GAMMALAB_NUMBA=0`` in the environment to force the numpy fallback.
The flag is read once at import time; :func:`set_backend` switches at runtime
(used by the benchmark and the cross-backend tests).
"""

import os

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _flag_enabled(value):
    return value.strip().lower() not in ("0", "false", "no", "off", "")


_use_numba = HAS_NUMBA and _flag_enabled(os.environ.get("GAMMALAB_NUMBA", "1"))


def njit(*args, **kwargs):
    """``numba.njit`` when numba is importable, identity decorator otherwise."""
    if HAS_NUMBA:
        kwargs.setdefault("cache", True)
        kwargs.setdefault("nogil", True)
        return numba.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda fn: fn


def use_numba():
    return _use_numba


def set_backend(name):
    """Select ``"numba"`` or ``"numpy"``; returns the previous backend name."""
    global _use_numba
    previous = backend()
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba is not installed")
        _use_numba = True
    elif name == "numpy":
        _use_numba = False
    else:
        raise ValueError(f"unknown backend {name!r}")
    return previous


def backend():
    return "numba" if _use_numba else "numpy"


def thread_cap():
    """Worker cap from ``GAMMALAB_THREADS`` (default: available cores)."""
    raw = os.environ.get("GAMMALAB_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return max(1, os.cpu_count() or 1)
