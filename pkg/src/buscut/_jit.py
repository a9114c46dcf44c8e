"""
Optional numba acceleration.

Set ``BUSCUT_DISABLE_JIT=1`` to force the pure numpy/Python kernels, e.g. for
debugging with the interpreter or on machines without numba.
"""
import os

_disabled = os.environ.get("BUSCUT_DISABLE_JIT", "").strip().lower() in ("1", "true", "yes")

try:
    if _disabled:
        raise ImportError("disabled by BUSCUT_DISABLE_JIT")
    from numba import njit

    JIT_ENABLED = True
except ImportError:
    JIT_ENABLED = False

    def njit(func=None, **kwargs):
        if func is not None:
            return func

        def wrapper(f):
            return f

        return wrapper
