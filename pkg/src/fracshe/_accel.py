"""Optional numba acceleration.

Hot loops are written once as plain Python and compiled with ``numba.njit``
when numba is importable.  Setting ``FRACSHE_DISABLE_NUMBA=1`` in the
environment (before import) selects the vectorised numpy fallbacks instead.
"""
import logging
import os

log = logging.getLogger(__name__)

_flag = os.environ.get("FRACSHE_DISABLE_NUMBA", "0").strip().lower()
USE_NUMBA = _flag not in ("1", "true", "yes", "on")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    if USE_NUMBA:
        log.warning("numba not importable; falling back to numpy kernels")
    USE_NUMBA = False


def optional_njit(*args, **kwargs):
    """``numba.njit`` when acceleration is enabled, identity otherwise."""

    def decorator(func):
        if USE_NUMBA:
            return numba.njit(*args, **kwargs)(func)
        return func

    return decorator


def jit_compile(func, **kwargs):
    """Compile ``func`` with numba regardless of the env flag (benchmarks)."""
    if numba is None:
        raise RuntimeError("numba is not installed")
    return numba.njit(**kwargs)(getattr(func, "py_func", func))
